"""Command-line interface.

Subcommands: ``ground-state``, ``sweep``, ``action``, ``verify`` and
``selfcheck``. Settings are merged as flags > config file (YAML mapping) >
built-in defaults. Artifacts go to ``--out-dir``, which defaults to
``$POINTNLS_OUT_DIR`` or the current directory.

Exit codes: 0 success, 1 usage error, 2 solver failure, 3 verification
failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .minimizer import SolveOptions, continuation_sweep, minimize_at_mass
from .model import PRESETS, DomainError, PhysicalParams
from .report import read_csv
from .shooting import BracketError, ShootingConfig, solve_action
from .space import DEFAULT_COUNT, DEFAULT_GRADING, make_grid, state_from_dict
from . import verify as _verify

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3
OUT_DIR_ENV = "POINTNLS_OUT_DIR"
COMMANDS = ("ground-state", "sweep", "action", "verify", "selfcheck")

DEFAULTS = {
    "count": DEFAULT_COUNT,
    "grading_ratio": DEFAULT_GRADING,
    "rmax": None,
    "grad_tol": 1e-8,
    "max_iters": 5000,
    "charge_floor": 1e-12,
    "points": 20,
    "log": False,
    "parallel": False,
    "workers": None,
    "r_start": None,
    "r_match": None,
    "bisect_tol": 1e-10,
    "ode_tol": 1e-10,
    "mu_max": None,
    "omegas": None,
}

OUTPUT_NAMES = {
    "ground-state": "ground_state.json",
    "sweep": "sweep.csv",
    "action": "action.json",
    "verify": "verification.json",
    "selfcheck": "selfcheck.json",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    command: str
    params: PhysicalParams | None
    options: dict = field(default_factory=dict)
    out_dir: Path = Path(".")
    output: Path | None = None

    def output_path(self) -> Path:
        name = self.output if self.output is not None else OUTPUT_NAMES[self.command]
        path = Path(name)
        return path if path.is_absolute() else self.out_dir / path


def _add_common(p):
    g = p.add_argument_group("instance")
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--dim", type=int, choices=(2, 3))
    g.add_argument("--alpha", type=float)
    g.add_argument("--p", type=float)
    g.add_argument("--config", help="YAML file with option values")
    g.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or .)")
    g.add_argument("--output", help="output file name, relative to --out-dir")
    n = p.add_argument_group("numerics")
    n.add_argument("--count", type=int, help="grid nodes")
    n.add_argument("--rmax", type=float, help="outer radius")
    n.add_argument("--grading-ratio", type=float, help="rmax over first node")
    n.add_argument("--grad-tol", type=float)
    n.add_argument("--max-iters", type=int)
    n.add_argument("--charge-floor", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pointnls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gs = sub.add_parser("ground-state", help="minimize the energy at one mass")
    _add_common(gs)
    gs.add_argument("--mass", type=float)
    gs.add_argument("--init", help="state or result JSON to warm start from")
    gs.add_argument("--profile", help="also write r,u CSV")

    sw = sub.add_parser("sweep", help="continuation in mass")
    _add_common(sw)
    sw.add_argument("--mass-min", type=float)
    sw.add_argument("--mass-max", type=float)
    sw.add_argument("--points", type=int)
    sw.add_argument("--log", action="store_const", const=True, help="log-spaced masses")
    sw.add_argument("--parallel", action="store_const", const=True,
                    help="independent solves in a process pool (no warm starts)")
    sw.add_argument("--workers", type=int)

    ac = sub.add_parser("action", help="shooting solve at fixed frequency")
    _add_common(ac)
    ac.add_argument("--omega", type=float)
    ac.add_argument("--r-start", type=float)
    ac.add_argument("--r-match", type=float)
    ac.add_argument("--bisect-tol", type=float)
    ac.add_argument("--ode-tol", type=float)
    ac.add_argument("--profile", help="also write r,u CSV")

    ve = sub.add_parser("verify", help="check a sweep report")
    _add_common(ve)
    ve.add_argument("--report", help="sweep CSV (instance read from its sidecar)")
    ve.add_argument("--mu-max", type=float, help="largest mass for the multiplier window")
    ve.add_argument("--omegas", type=float, nargs="+",
                    help="also run the cross-solver check at these frequencies")
    ve.add_argument("--text", help="text summary file name")

    sc = sub.add_parser("selfcheck", help="built-in invariant suite")
    _add_common(sc)
    return parser


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise UsageError(f"config file is not valid YAML: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a key-value mapping")
    return {str(k).replace("-", "_"): v for k, v in doc.items()}


def _resolve_params(merged) -> PhysicalParams | None:
    preset = merged.get("preset")
    if preset and preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}")
    base = PRESETS[preset].to_dict() if preset else {}
    for key in ("dim", "alpha", "p"):
        if merged.get(key) is not None:
            base[key] = merged[key]
    if not base:
        return None
    missing = [k for k in ("dim", "alpha", "p") if k not in base]
    if missing:
        raise UsageError("instance incomplete, missing " + ", ".join("--" + m for m in missing))
    try:
        return PhysicalParams(int(base["dim"]), float(base["alpha"]), float(base["p"]))
    except (DomainError, ValueError, TypeError) as exc:
        raise UsageError(f"invalid instance: {exc}") from exc


def parse_config(argv=None, environ=None) -> RunConfig:
    """Parse flags, merge with the config file and defaults, validate."""
    environ = os.environ if environ is None else environ
    ns = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(ns).items() if v is not None}
    from_file = _load_config_file(flags["config"]) if "config" in flags else {}
    merged = {**DEFAULTS, **from_file, **flags}
    command = merged.pop("command")
    params = _resolve_params(merged)
    if params is None and command != "selfcheck" and command != "verify":
        raise UsageError("specify the instance with --preset or --dim/--alpha/--p")

    out_dir = Path(merged.get("out_dir") or environ.get(OUT_DIR_ENV) or ".")
    output = merged.get("output")
    _validate(command, merged, params)
    return RunConfig(command, params, merged, out_dir, Path(output) if output else None)


def _need(merged, key, command):
    if merged.get(key) is None:
        raise UsageError(f"{command} requires --{key.replace('_', '-')}")
    return merged[key]


def _validate(command, m, params):
    for key in ("count", "max_iters", "points"):
        if m.get(key) is not None and int(m[key]) < 1:
            raise UsageError(f"--{key.replace('_', '-')} must be positive")
    if command == "ground-state":
        if not _need(m, "mass", command) > 0:
            raise UsageError("--mass must be positive")
    elif command == "sweep":
        lo, hi = _need(m, "mass_min", command), _need(m, "mass_max", command)
        if not 0 < lo < hi:
            raise UsageError("need 0 < --mass-min < --mass-max")
        if int(m["points"]) < 2:
            raise UsageError("--points must be at least 2")
    elif command == "action":
        om = _need(m, "omega", command)
        if not 0 < om < params.abs_ell:
            raise UsageError(f"--omega must lie in (0, |ell|) = (0, {params.abs_ell:.17g})")
    elif command == "verify":
        _need(m, "report", command)


def _solve_options(m, **kw) -> SolveOptions:
    return SolveOptions(max_iters=int(m["max_iters"]), grad_tol=float(m["grad_tol"]),
                        rmax=None if m["rmax"] is None else float(m["rmax"]),
                        count=int(m["count"]), grading_ratio=float(m["grading_ratio"]),
                        charge_floor=float(m["charge_floor"]),
                        parallel=bool(m["parallel"]),
                        workers=None if m["workers"] is None else int(m["workers"]), **kw)


def _write_json(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_init(path, params):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    state = state_from_dict(doc["state"] if "state" in doc else doc)
    if state.params != params:
        raise UsageError("--init state belongs to a different instance")
    return state


def _cmd_ground_state(cfg):
    m, params = cfg.options, cfg.params
    kw = {}
    if m.get("init"):
        kw["init"] = _load_init(m["init"], params)
    res = minimize_at_mass(params, float(m["mass"]), _solve_options(m, **kw))
    out = cfg.output_path()
    out.parent.mkdir(parents=True, exist_ok=True)
    res.write_json(out)
    if m.get("profile"):
        res.write_profile_csv(cfg.out_dir / m["profile"])
    print(f"mu={res.mass:.10g} E={res.energy:.17g} omega={res.omega:.17g} q={res.charge:.17g} "
          f"residual={res.residual:.3e} iters={res.iters} converged={res.converged}")
    return EXIT_OK if res.converged else EXIT_SOLVER


def _cmd_sweep(cfg):
    m, params = cfg.options, cfg.params
    lo, hi, n = float(m["mass_min"]), float(m["mass_max"]), int(m["points"])
    mus = np.logspace(math.log10(lo), math.log10(hi), n) if m["log"] else np.linspace(lo, hi, n)
    report = continuation_sweep(params, mus, _solve_options(m))
    out = cfg.output_path()
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write_csv(out)
    bad = [r.mu for r in report.rows if not r.converged]
    print(f"wrote {len(report.rows)} rows to {out}" + (f"; unconverged at mu={bad}" if bad else ""))
    return EXIT_SOLVER if bad else EXIT_OK


def _shooting_config(m, omega):
    return ShootingConfig(
        omega=float(omega), r_start=None if m["r_start"] is None else float(m["r_start"]),
        r_match=None if m["r_match"] is None else float(m["r_match"]),
        bisect_tol=float(m["bisect_tol"]), ode_tol=float(m["ode_tol"]), count=int(m["count"]),
        grading_ratio=float(m["grading_ratio"]))


def _cmd_action(cfg):
    m, params = cfg.options, cfg.params
    out = cfg.output_path()
    try:
        res = solve_action(params, _shooting_config(m, m["omega"]))
    except BracketError as exc:
        _write_json(out, {"error": str(exc), "scan": exc.scan, "params": params.to_dict()})
        print(f"shooting failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out.parent.mkdir(parents=True, exist_ok=True)
    res.write_json(out)
    if m.get("profile"):
        res.write_profile_csv(cfg.out_dir / m["profile"])
    print(f"omega={res.omega:.17g} mu={res.mass:.17g} E={res.energy:.17g} q={res.charge:.17g} "
          f"converged={res.converged}")
    return EXIT_OK if res.converged else EXIT_SOLVER


def _cmd_verify(cfg):
    m = cfg.options
    try:
        report = read_csv(m["report"], cfg.params)
    except OSError as exc:
        raise UsageError(f"cannot read report: {exc}") from exc
    outcomes = _verify.run_report_checks(report, mu_max=m.get("mu_max"))
    if m.get("omegas"):
        outcomes.append(_verify.check_cross_consistency(
            report.params, m["omegas"], _shooting_config(m, m["omegas"][0]),
            _solve_options(m)))
    text = cfg.out_dir / m["text"] if m.get("text") else None
    out = cfg.output_path()
    out.parent.mkdir(parents=True, exist_ok=True)
    status = _verify.write_verification(outcomes, out, text,
                                        {"params": report.params.to_dict(),
                                         "report": str(m["report"])})
    for o in outcomes:
        print(o.line())
    print(f"verification: {status}")
    return EXIT_OK if status == "pass" else EXIT_VERIFY


def selfcheck(count: int = DEFAULT_COUNT) -> list[dict]:
    """K0 against scipy, lambda-invariance and a finite-difference gradient check."""
    from scipy.special import k0

    from .functionals import energy, gradient
    from .model import bessel_k0, green_l2_norm_sq
    from .space import DecomposedState, default_rmax, mass, quadratic_form, redecompose

    results = []
    x = np.logspace(-6, math.log10(50.0), 1000)
    err = float(np.max(np.abs(bessel_k0(x) / k0(x) - 1.0)))
    results.append({"name": "bessel_k0", "worst": err, "tol": 1e-12})

    rng = np.random.default_rng(20240601)
    for name, params in sorted(PRESETS.items()):
        ell = params.abs_ell
        grid = make_grid(default_rmax(params), count, DEFAULT_GRADING, params.dim)
        r = grid.nodes
        worst_g = 0.0
        for lam in (0.5 * ell, ell, 3.0 * ell):
            g = DecomposedState(params, grid, lam, np.zeros(r.size), 1.0)
            worst_g = max(worst_g, abs(mass(g) / green_l2_norm_sq(params, lam) - 1.0))
        results.append({"name": f"green_norm[{name}]", "worst": worst_g, "tol": 1e-6})

        worst_inv = 0.0
        worst_fd = 0.0
        for _ in range(5):
            phi = rng.normal() * np.exp(-rng.uniform(0.2, 2.0) * r**2)
            phi[-1] = 0.0
            s = DecomposedState(params, grid, ell, phi, rng.uniform(0.2, 2.0))
            h0 = quadratic_form(s)
            for lam in (0.3 * ell, 2.0 * ell):
                worst_inv = max(worst_inv, abs(quadratic_form(redecompose(s, lam)) - h0)
                                / abs(h0))
            d_phi = rng.normal() * np.exp(-rng.uniform(0.2, 2.0) * r**2)
            d_q = rng.normal()
            step = 1e-5
            fd = (energy(s.replace(s.phi + step * d_phi, s.q + step * d_q))
                  - energy(s.replace(s.phi - step * d_phi, s.q - step * d_q))) / (2 * step)
            an = gradient(s).pair(s, d_phi, d_q)
            worst_fd = max(worst_fd, abs(fd - an) / max(abs(an), 1e-300))
        results.append({"name": f"lambda_invariance[{name}]", "worst": worst_inv, "tol": 1e-8})
        results.append({"name": f"gradient_fd[{name}]", "worst": worst_fd, "tol": 1e-6})
    for res in results:
        res["passed"] = bool(res["worst"] <= res["tol"])
    return results


def _cmd_selfcheck(cfg):
    results = selfcheck(int(cfg.options["count"]))
    ok = all(r["passed"] for r in results)
    for r in results:
        print(f"[{'PASS' if r['passed'] else 'FAIL'}] {r['name']}: worst={r['worst']:.3e} "
              f"tol={r['tol']:.0e}")
    if cfg.output is not None:
        _write_json(cfg.output_path(), {"passed": ok, "checks": results})
    return EXIT_OK if ok else EXIT_VERIFY


_HANDLERS = {
    "ground-state": _cmd_ground_state,
    "sweep": _cmd_sweep,
    "action": _cmd_action,
    "verify": _cmd_verify,
    "selfcheck": _cmd_selfcheck,
}


def run(config: RunConfig) -> int:
    """Execute a parsed configuration; returns the process exit status."""
    return _HANDLERS[config.command](config)


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
        return run(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Random smooth test states."""
import numpy as np

from pointnls.space import DecomposedState, canonical_lambda


def random_state(params, grid, rng, lam=None, q_scale=1.0):
    """Sum of three Gaussians plus a random charge."""
    lam = canonical_lambda(params) if lam is None else lam
    r = grid.nodes
    phi = np.zeros_like(r)
    for _ in range(3):
        amp = rng.uniform(-1.0, 1.0)
        width = rng.uniform(0.3, 2.0)
        phi += amp * np.exp(-(r / width) ** 2)
    phi[-1] = 0.0
    q = q_scale * rng.uniform(0.2, 1.5) * rng.choice([-1.0, 1.0])
    return DecomposedState(params, grid, lam, phi, q)


def random_direction(state, rng):
    r = state.grid.nodes
    width = rng.uniform(0.3, 2.0)
    d = rng.normal() * np.exp(-(r / width) ** 2) + 0.3 * rng.normal() * np.exp(-r)
    d[-1] = 0.0
    return d, float(rng.normal())

"""Ground states of the defocusing NLS equation with a point interaction in 2D and 3D."""
from .functionals import action, el_residual, energy, gradient, multiplier
from .minimizer import GroundStateResult, SolveOptions, continuation_sweep, minimize_at_mass, project_to_mass
from .model import PRESETS, DomainError, PhysicalParams, bessel_k0, beta, eigenvalue, green_l2_norm_sq, green_value
from .report import SweepReport, SweepRow
from .shooting import ShootingConfig, boundary_condition_residual, solve_action
from .space import DecomposedState, RadialGrid, lp_norm_p, make_grid, mass, quadratic_form, redecompose, sample_u

__version__ = "0.1.0"

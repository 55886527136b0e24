"""Delay-robust control of coupled two-agent systems.

Treats time-varying communication delays as an adversarial player in a
zero-sum differential game: a faithful delay-differential simulator, an
algebraic approximation making the delay a tractable game input, a grid
solver for the resulting Hamilton-Jacobi equation, feedback extraction,
and the analysis suites tying them together.
"""

__version__ = "0.1.0"

from .analysis import classify_stability, lk_condition, theorem2_constant, verify_value_sandwich
from .approx import estimate_residual_constant, residual_w, solve_constraints
from .dde import Trajectory, simulate, step_dde
from .delays import DelaySignal, eval_delay
from .errors import (
    ConfigError,
    ConstraintSolveError,
    DelayGameError,
    DivergenceError,
    InstabilityError,
    SingularCouplingError,
)
from .history import HistoryBuffer, history_lookup
from .hji import (
    CostSpec,
    ErrorGameHamiltonian,
    Grid,
    ValueFunction,
    extract_safe_set,
    hamiltonian,
    lax_friedrichs_step,
    solve_hjb_closed_loop,
    solve_hji,
    stabilization_cost,
    terminal_position_cost,
)
from .models import (
    AugmentedAffineState,
    CoupledTdsModel,
    DoubleIntegratorPair,
    ErrorState,
    augmented_affine_rhs,
    double_integrator_rhs,
    error_dynamics_rhs,
    polynomial_delay_matrices,
)
from .policy import (
    AdversaryPolicy,
    ControlPolicy,
    grad_value,
    make_dde_controller,
    optimal_adversary,
    optimal_control,
)

"""System definitions: the coupled pair, its error-coordinate reduction,
the polynomial delay matrices, and the augmented affine form."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SingularCouplingError

SINGULAR_DET_TOL = 1e-9


class CoupledTdsModel:
    """Two coupled agents where each right-hand side sees the other agent's
    delayed state:  x1' = f1(x1, x2(t-d2), u1)  and symmetrically for x2.

    Subclasses define ``f1``/``f2`` and may refine ``delayed_arg``, the
    reconstruction of x_j(t-d_j) from (x_j, y_j, d_j) used by the algebraic
    constraint solve.  The default is the first-order form x - y d.
    """

    n = None  # per-agent state dimension
    m = None  # per-agent control dimension
    u_max = 0.0

    def f1(self, x1, x2_delayed, u1):
        raise NotImplementedError

    def f2(self, x2, x1_delayed, u2):
        raise NotImplementedError

    def delayed_arg(self, agent, x, y, d):
        """Approximate x_agent(t - d) given the state and its rate y."""
        return x - y * d

    constraint_is_linear = False


def double_integrator_rhs(x1, x2_delayed, u1, k, b, u_max=np.inf):
    """Acceleration of one double-integrator agent, state ordered [v, p].

    tau = -k (p - p_other_delayed) - b v + u ; positive b damps.
    """
    if abs(u1) > u_max + 1e-12:
        raise ConfigError(f"|u|={abs(u1)} exceeds u_max={u_max}")
    v, p = x1[0], x1[1]
    p_other = x2_delayed[1]
    return -k * (p - p_other) - b * v + u1


@dataclass
class DoubleIntegratorPair(CoupledTdsModel):
    """Spring-coupled double integrators exchanging delayed positions."""

    k: float = 1.0
    b: float = 0.15
    u_max: float = 1.0

    n = 2
    m = 1
    constraint_is_linear = True

    def __post_init__(self):
        if self.k <= 0:
            raise ConfigError("spring gain k must be positive")
        if self.b < 0 or self.u_max < 0:
            raise ConfigError("damping b and u_max must be nonnegative")

    def f1(self, x1, x2_delayed, u1):
        acc = double_integrator_rhs(x1, x2_delayed, u1, self.k, self.b, self.u_max)
        return np.array([acc, x1[0]])

    def f2(self, x2, x1_delayed, u2):
        acc = double_integrator_rhs(x2, x1_delayed, u2, self.k, self.b, self.u_max)
        return np.array([acc, x2[0]])

    def delayed_arg(self, agent, x, y, d):
        # Position keeps the quadratic term of the Taylor expansion
        # (p - v d + a d^2/2); velocity stays first order.
        v, p = x[0], x[1]
        a, pdot = y[0], y[1]
        return np.array([v - a * d, p - pdot * d + 0.5 * a * d * d])


def error_dynamics_rhs(e_p, e_v, d, u_e, w, k, b):
    """Symmetric-delay error dynamics (d1 = d2 = d, u_e = u1 - u2).

    Returns (e_p', e_v') with
      e_v' = (-2 k e_p + (k d - b) e_v + u_e + w) / (1 + k d^2 / 2).
    Broadcasts over array inputs.
    """
    den = 1.0 + 0.5 * k * d * d
    ev_dot = (-2.0 * k * e_p + (k * d - b) * e_v + u_e + w) / den
    return e_v, ev_dot


def polynomial_delay_matrices(k, b, d1, d2):
    """Closed-loop matrices A(d), B(d) for state [v1, p1, v2, p2].

    Solves the pair of simultaneous accelerations obtained by expanding the
    delayed positions to second order, so every entry is polynomial in
    (d1, d2) divided by det = 1 - (k d1^2/2)(k d2^2/2).
    """
    a1 = 0.5 * k * d1 * d1
    a2 = 0.5 * k * d2 * d2
    det = 1.0 - a1 * a2
    if abs(det) < SINGULAR_DET_TOL:
        raise SingularCouplingError(
            f"delay coupling singular: det={det:.3e} for d=({d1}, {d2})"
        )
    # Row coefficients of the pre-solve right-hand sides over [v1, p1, v2, p2].
    r1 = np.array([-b, -k, -k * d2, k])
    r2 = np.array([-k * d1, k, -b, -k])
    A = np.zeros((4, 4))
    B = np.zeros((4, 2))
    A[0] = (r1 + a2 * r2) / det
    A[2] = (a1 * r1 + r2) / det
    A[1, 0] = 1.0
    A[3, 2] = 1.0
    B[0] = np.array([1.0, a2]) / det
    B[2] = np.array([a1, 1.0]) / det
    return A, B


@dataclass
class ErrorState:
    """Relative coordinates of the pair: e_p = p1 - p2, e_v = v1 - v2."""

    e_p: float
    e_v: float

    def __post_init__(self):
        if not (np.isfinite(self.e_p) and np.isfinite(self.e_v)):
            raise ConfigError("error state must be finite")

    @classmethod
    def from_pair_state(cls, x):
        return cls(e_p=float(x[1] - x[3]), e_v=float(x[0] - x[2]))

    def split(self):
        """Symmetric pair state [v1, p1, v2, p2] realizing these errors."""
        return np.array([0.5 * self.e_v, 0.5 * self.e_p, -0.5 * self.e_v, -0.5 * self.e_p])


@dataclass
class AugmentedAffineState:
    """State of the delay-augmented form with estimates xh_i of the delayed
    states and the delays as explicit coordinates."""

    x1: np.ndarray
    x2: np.ndarray
    xh1: np.ndarray
    xh2: np.ndarray
    d1: float
    d2: float
    u1: float = 0.0
    u2: float = 0.0
    w1: float = 0.0
    w2: float = 0.0

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0:
            raise ConfigError("auxiliary rates w_i must be nonnegative")


def augmented_affine_rhs(s, f1, f2):
    """Derivative of the augmented state.

    Estimates relax toward the true states at rate w_i and the delays follow
    d_i' = 1 - d_i w_i.
    """
    dx1 = f1(s.x1, s.xh2, s.u1)
    dx2 = f2(s.x2, s.xh1, s.u2)
    dxh1 = (s.x1 - s.xh1) * s.w1
    dxh2 = (s.x2 - s.xh2) * s.w2
    dd1 = 1.0 - s.d1 * s.w1
    dd2 = 1.0 - s.d2 * s.w2
    return dx1, dx2, dxh1, dxh2, dd1, dd2

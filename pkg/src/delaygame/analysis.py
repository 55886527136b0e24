"""Certification and empirical verification: the Lyapunov-Krasovskii
sufficient condition, trajectory stability classification, the
conservativeness sweep, and the value-sandwich Monte-Carlo check."""

from dataclasses import dataclass, field

import numpy as np

from .dde import simulate
from .delays import DelaySignal, sample_delay_signal
from .errors import ConfigError, DivergenceError
from .models import DoubleIntegratorPair, ErrorState
from .policy import make_dde_controller

EPS_GROW = 0.02
EPS_CONV = 0.05


@dataclass
class LkVerdict:
    """Outcome of the delay-robust damping inequality 4 b1 b2 >= (T1^2 + T2^2) k1 k2."""

    satisfied: bool
    lhs: float
    rhs: float

    @property
    def margin(self):
        return self.lhs - self.rhs


def lk_condition(k1, k2, b1, b2, T1, T2):
    if min(k1, k2, b1, b2, T1, T2) < 0:
        raise ConfigError("gains and delay bounds must be nonnegative")
    lhs = 4.0 * b1 * b2
    rhs = (T1 * T1 + T2 * T2) * k1 * k2
    return LkVerdict(satisfied=lhs >= rhs, lhs=lhs, rhs=rhs)


@dataclass
class StabilityVerdict:
    """Envelope-based classification of a position-error trajectory."""

    klass: str  # converged | bounded_oscillation | growing | indeterminate
    envelope_ratio: float
    final_error: float
    n_peaks: int = 0


def _local_maxima(t, y):
    peaks_t, peaks_y = [], []
    for i in range(1, len(y) - 1):
        if y[i] >= y[i - 1] and y[i] > y[i + 1] and y[i] > 1e-12:
            peaks_t.append(t[i])
            peaks_y.append(y[i])
    return np.asarray(peaks_t), np.asarray(peaks_y)


def classify_stability(traj, window=None, eps_grow=EPS_GROW, eps_conv=EPS_CONV):
    """Classify |e_p| behaviour by its peak envelope.

    The envelope ratio is the geometric mean of ratios between alternate
    |e_p| peaks (same-phase peaks, one oscillation period apart).  The final
    error is the largest |e_p| over the trailing 5% of the window, which is
    robust to sampling a zero crossing.  With fewer than three peaks and no
    convergence the verdict is indeterminate.
    """
    t = traj.times
    y = np.abs(traj.e_p)
    if window is not None:
        lo, hi = window
        sel = (t >= lo) & (t <= hi)
        t, y = t[sel], y[sel]
    if len(t) < 3:
        raise ConfigError("window too short to classify")

    tail = max(3, int(0.05 * len(y)))
    final_error = float(np.max(y[-tail:]))

    peaks_t, peaks_y = _local_maxima(t, y)
    if len(peaks_y) >= 3:
        ratios = peaks_y[2:] / peaks_y[:-2]
        envelope_ratio = float(np.exp(np.mean(np.log(ratios))))
    else:
        envelope_ratio = 0.0 if final_error < eps_conv else float("nan")

    if len(peaks_y) < 3 and final_error >= eps_conv:
        return StabilityVerdict("indeterminate", envelope_ratio, final_error, len(peaks_y))
    if envelope_ratio > 1.0 + eps_grow:
        return StabilityVerdict("growing", envelope_ratio, final_error, len(peaks_y))
    if final_error < eps_conv and envelope_ratio < 1.0:
        return StabilityVerdict("converged", envelope_ratio, final_error, len(peaks_y))
    return StabilityVerdict("bounded_oscillation", envelope_ratio, final_error, len(peaks_y))


@dataclass
class SweepEntry:
    k: float
    b: float
    T_star: float
    lk: LkVerdict
    stability: StabilityVerdict


def sweep_conservativeness(
    k_values,
    b_values,
    Tstar_values,
    horizon=250.0,
    dt=0.02,
    omega=0.5,
    e_p0=1.0,
    u_max=0.0,
    executor=None,
):
    """Pair the certificate with the observed uncontrolled behaviour on a
    (k, b, T*) lattice under sinusoidal delays.

    Divergent runs are recorded as growing.  The interesting subset is the
    cells that violate the certificate yet converge.
    """
    if not (len(k_values) and len(b_values) and len(Tstar_values)):
        raise ConfigError("sweep ranges must be nonempty")
    cells = [
        (float(k), float(b), float(T))
        for k in k_values
        for b in b_values
        for T in Tstar_values
    ]
    args = [(k, b, T, horizon, dt, omega, e_p0, u_max) for k, b, T in cells]
    if executor is None:
        results = [_sweep_cell(a) for a in args]
    else:
        results = list(executor.map(_sweep_cell, args))
    return results


def _sweep_cell(args):
    k, b, T_star, horizon, dt, omega, e_p0, u_max = args
    lk = lk_condition(k, k, b, b, T_star, T_star)
    model = DoubleIntegratorPair(k=k, b=b, u_max=max(u_max, 0.0))
    if T_star > 0:
        sig = DelaySignal(kind="sinusoidal", d_max=T_star, omega=omega)
    else:
        sig = DelaySignal(kind="constant", d_max=0.0)
    x0 = ErrorState(e_p=e_p0, e_v=0.0).split()
    try:
        traj = simulate(model, x0, sig, None, horizon, dt)
        verdict = classify_stability(traj)
    except DivergenceError:
        verdict = StabilityVerdict("growing", float("inf"), float("inf"))
    return SweepEntry(k=k, b=b, T_star=T_star, lk=lk, stability=verdict)


def theorem2_constant(L_f, T):
    """Gronwall-based gap constant C = T e^{L T} - (e^{L T} - 1)/L.

    Tends to L T^2 / 2 as L -> 0; below the 1e-12 floor the limit value 0
    is returned directly.
    """
    if T <= 0:
        raise ConfigError("horizon must be positive")
    if L_f < 1e-12:
        return 0.0
    x = L_f * T
    return float(T * np.exp(x) - np.expm1(x) / L_f)


@dataclass
class SandwichSample:
    index: int
    kind: str
    x0: tuple
    d0: float
    J_true: float
    V_upper: float

    @property
    def margin(self):
        return self.V_upper - self.J_true


@dataclass
class SandwichReport:
    samples: list
    tol: float
    d_max: float

    @property
    def violations(self):
        return [s for s in self.samples if s.margin < -self.tol]

    @property
    def worst_margin(self):
        return min(s.margin for s in self.samples)

    @property
    def worst_gap(self):
        return max(s.margin for s in self.samples)


def verify_value_sandwich(
    vf,
    model,
    u_policy,
    n_samples,
    d_max,
    rng,
    horizon,
    dt=0.005,
    state_box=1.0,
    executor=None,
):
    """Monte-Carlo check that true-system costs stay below the solved upper
    value.

    Samples random delay signals (constant, sinusoidal, piecewise-constant)
    and initial error states, simulates the true delay system under the
    extracted control, accumulates J = int ||e_v||^2 dt, and compares with
    the interpolated V(x0, d(0)).  Violations beyond 10% of the value range
    are reported, never raised.
    """
    v_range = float(np.max(vf.values) - np.min(vf.values))
    tol = 0.1 * v_range
    tasks = []
    for i in range(n_samples):
        sig = sample_delay_signal(rng, d_max, horizon)
        e_p0 = float(rng.uniform(-state_box, state_box))
        e_v0 = float(rng.uniform(-state_box, state_box))
        tasks.append((i, sig, e_p0, e_v0))

    samples = []
    for i, sig, e_p0, e_v0 in tasks:
        x0 = ErrorState(e_p=e_p0, e_v=e_v0).split()
        controller = make_dde_controller(u_policy)
        traj = simulate(model, x0, sig, controller, horizon, dt, dt_ctrl=u_policy.dt_ctrl)
        ev = traj.e_v
        J = float(np.trapezoid(ev * ev, traj.times))
        d0 = sig.eval(0.0)
        V0 = vf.interpolate((e_p0, e_v0, d0))
        samples.append(
            SandwichSample(index=i, kind=sig.kind, x0=(e_p0, e_v0), d0=d0, J_true=J, V_upper=V0)
        )
    return SandwichReport(samples=samples, tol=tol, d_max=d_max)


def fit_through_origin(x, y):
    """Least-squares slope of y ~ s x and the relative residual of the fit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope = float(np.dot(x, y) / np.dot(x, x))
    resid = float(np.linalg.norm(y - slope * x) / np.linalg.norm(y))
    return slope, resid

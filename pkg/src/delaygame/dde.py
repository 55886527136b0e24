"""Runge-Kutta integration of the true time-delay system."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError
from .history import HistoryBuffer

BLOWUP_NORM = 1e9
ZERO_DELAY_EPS = 1e-12


@dataclass
class Trajectory:
    """Sampled closed-loop run: times, pair states [v1,p1,v2,p2], per-agent
    inputs, and the (d1, d2) delay values applied at each step."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.states) == len(self.inputs) == len(self.delays) == n):
            raise ConfigError("trajectory columns must have equal length")
        if n >= 3:
            steps = np.diff(self.times)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise ConfigError("trajectory must use a uniform step")

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def e_p(self):
        return self.states[:, 1] - self.states[:, 3]

    @property
    def e_v(self):
        return self.states[:, 0] - self.states[:, 2]

    @property
    def u_e(self):
        return self.inputs[:, 0] - self.inputs[:, 1]

    @property
    def d(self):
        """Symmetric-scenario delay column (d2, the delay seen by agent 1)."""
        return self.delays[:, 1]


def rk4_ode_step(f, t, x, dt):
    """Classical RK4 step for an ordinary x' = f(t, x)."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _delayed_state(buf, n, agent, s, d, stage_full):
    """State of ``agent`` at time s - d; uses the in-flight stage value when
    the delay vanishes so the zero-delay case reduces exactly to plain RK4."""
    sl = slice(0, n) if agent == 1 else slice(n, 2 * n)
    if d < ZERO_DELAY_EPS:
        return stage_full[sl]
    return buf.lookup(s - d, order=3)[sl]


def step_dde(model, buf, t, dt, controller, delays, u_pair=None):
    """One RK4 step of the coupled delay system from t to t+dt.

    Every delayed argument at a stage time s is obtained from the history
    buffer; the result is appended to the buffer and returned.  The control
    is evaluated once at the step start (zero-order hold within a step)
    unless ``u_pair`` passes a pre-sampled value.
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    d1_sig, d2_sig = delays
    n = model.n
    x = buf.lookup(t, order=3) if buf.latest_time != t else buf.states[-1]

    if u_pair is None:
        d1_t, d2_t = d1_sig.eval(t), d2_sig.eval(t)
        u_pair = controller(t, x, d1_t, d2_t)
    u1, u2 = u_pair

    def rate(s, xs):
        d1, d2 = d1_sig.eval(s), d2_sig.eval(s)
        x2d = _delayed_state(buf, n, 2, s, d2, xs)
        x1d = _delayed_state(buf, n, 1, s, d1, xs)
        return np.concatenate([model.f1(xs[:n], x2d, u1), model.f2(xs[n:], x1d, u2)])

    k1 = rate(t, x)
    k2 = rate(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = rate(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = rate(t + dt, x + dt * k3)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    if not np.all(np.isfinite(x_next)) or np.max(np.abs(x_next)) > BLOWUP_NORM:
        raise DivergenceError(f"state diverged at t={t + dt:.6g}", t_blowup=t + dt)
    # Record the interval's one-sided rates (both under the held control) so
    # dense output stays cubic across derivative kinks and control switches.
    buf.append(t + dt, x_next)
    m_right = rate(t + dt, x_next)
    buf.interval_derivs[-1] = (k1, m_right)
    return x_next


def zero_controller(t, x, d1, d2):
    return 0.0, 0.0


def simulate(model, x0, delays, controller, horizon, dt, dt_ctrl=None, prehistory=None):
    """Closed-loop rollout of the true delay system over [0, horizon].

    ``delays`` is a (d1, d2) pair of DelaySignal, or a single signal applied
    symmetrically.  The controller is sampled with zero-order hold every
    ``dt_ctrl`` (default: every step); it must divide into whole steps.
    Pre-history defaults to the constant x(0).  On divergence the partial
    trajectory is attached to the raised error.
    """
    if horizon <= 0:
        raise ConfigError("horizon must be positive")
    if not isinstance(delays, (tuple, list)):
        delays = (delays, delays)
    if controller is None:
        controller = zero_controller
    dt_ctrl = dt if dt_ctrl is None else dt_ctrl
    ctrl_every = int(round(dt_ctrl / dt))
    if ctrl_every < 1 or abs(ctrl_every * dt - dt_ctrl) > 1e-9 * dt:
        raise ConfigError("dt_ctrl must be a whole multiple of dt")

    x0 = np.asarray(x0, dtype=float)
    buf = HistoryBuffer(0.0, x0, initial_value=prehistory)
    n_steps = int(round(horizon / dt))

    times = np.arange(n_steps + 1) * dt
    states = np.empty((n_steps + 1, x0.size))
    inputs = np.zeros((n_steps + 1, 2))
    dvals = np.zeros((n_steps + 1, 2))

    states[0] = x0
    u_pair = (0.0, 0.0)
    x = x0
    for k in range(n_steps + 1):
        t = times[k]
        sigs = (delays[0],) if delays[1] is delays[0] else delays
        for sig in sigs:
            if sig.needs_advance and k > 0:
                sig.advance(t - dt, dt, context={"state": x})
        d1, d2 = delays[0].eval(t), delays[1].eval(t)
        assert 0.0 <= d1 <= delays[0].d_max + 1e-12
        assert 0.0 <= d2 <= delays[1].d_max + 1e-12
        dvals[k] = (d1, d2)
        if k % ctrl_every == 0:
            u_pair = controller(t, x, d1, d2)
        inputs[k] = u_pair
        if k == n_steps:
            break
        try:
            x = step_dde(model, buf, t, dt, controller, delays, u_pair=u_pair)
        except DivergenceError as err:
            err.partial = Trajectory(
                times=times[: k + 1],
                states=states[: k + 1].copy(),
                inputs=inputs[: k + 1].copy(),
                delays=dvals[: k + 1].copy(),
            )
            raise
        states[k + 1] = x

    return Trajectory(times=times, states=states, inputs=inputs, delays=dvals)

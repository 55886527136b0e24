"""Feedback extraction from a solved value function and adapters coupling
it to the true delay simulator."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .models import ErrorState

DEFAULT_DT_CTRL = 0.05


def grad_value(vf, x, return_clamped=False):
    """Costate dV/dx at ``x``: central differences at the nodes, multilinear
    interpolation between them.  Points outside the hull are clamped to the
    nearest hull point (flagged, not fatal)."""
    return _GradientField(vf).at(x, return_clamped=return_clamped)


class _GradientField:
    """Caches the per-axis gradient arrays of one value slice."""

    def __init__(self, vf):
        self.vf = vf
        self.grid = vf.grid
        self.arrays = vf.gradient_arrays()

    def at(self, x, return_clamped=False):
        xc = self.grid.clamp(x)
        clamped = bool(np.max(np.abs(xc - np.asarray(x, dtype=float))) > 1e-12)
        idx, frac = [], []
        for ax, xi in zip(self.grid.axes, xc):
            pos = (xi - ax.lo) / ax.spacing
            i = int(min(max(np.floor(pos), 0), ax.count - 2))
            idx.append(i)
            frac.append(pos - i)
        g = np.zeros(self.grid.ndim)
        for corner in range(2 ** self.grid.ndim):
            w = 1.0
            sel = []
            for a in range(self.grid.ndim):
                bit = (corner >> a) & 1
                w *= frac[a] if bit else (1.0 - frac[a])
                sel.append(idx[a] + bit)
            sel = tuple(sel)
            for a in range(self.grid.ndim):
                g[a] += w * self.arrays[a][sel]
        if return_clamped:
            return g, clamped
        return g


def optimal_control(vf, x, d, t=None, u_max=None, _grad=None):
    """Bang-bang minimizer u* = -u_max sign(dV/de_v); exact zero gradient
    falls back to u = 0."""
    if u_max is None:
        raise ConfigError("optimal_control needs the control bound u_max")
    gf = _grad if _grad is not None else _GradientField(vf)
    p = gf.at((x[0], x[1], d))
    return float(-u_max * np.sign(p[1]))


def optimal_adversary(vf, x, t=None, L_w=5.0, w_rate_max=20.0, _grad=None):
    """Maximizing box corners (w_d*, w*) for the two adversarial inputs.

    A vanishing d-component of the costate is resolved by holding the delay
    (w_d = 1/d, clamped) rather than letting it drift.
    """
    gf = _grad if _grad is not None else _GradientField(vf)
    ep, ev, d = x
    p = gf.at((ep, ev, d))
    w = float(L_w * d * np.sign(p[1]))
    if p[2] == 0.0:
        w_d = min(1.0 / d, w_rate_max) if d > 0 else 0.0
    elif p[2] * d < 0.0:
        w_d = w_rate_max
    else:
        w_d = 0.0
    return float(w_d), w


@dataclass
class ControlPolicy:
    """Feedback u_e(t, e_p, e_v, d), saturated at u_max.

    sources: ``value_function`` (gradient sign rule), ``zero``, ``constant``
    (held at ``value``), ``scripted`` (callable of t).
    """

    source: str = "zero"
    vf: object = None
    u_max: float = 0.0
    dt_ctrl: float = DEFAULT_DT_CTRL
    value: float = 0.0
    script: object = None
    t_on: float = 0.0
    _grad: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.source not in ("value_function", "zero", "constant", "scripted"):
            raise ConfigError(f"unknown policy source {self.source!r}")
        if self.source == "value_function":
            if self.vf is None:
                raise ConfigError("value_function policy needs a solved value function")
            self._grad = _GradientField(self.vf)

    def u_error(self, t, e_p, e_v, d):
        if t < self.t_on:
            return 0.0
        if self.source == "zero":
            u = 0.0
        elif self.source == "constant":
            u = self.value
        elif self.source == "scripted":
            u = self.script(t)
        else:
            u = optimal_control(self.vf, (e_p, e_v), d, t, u_max=self.u_max, _grad=self._grad)
        return float(min(max(u, -self.u_max), self.u_max))


@dataclass
class AdversaryPolicy:
    """State-feedback realization of the adversary's strategy set: selects
    the delay-rate input and the error input along a rollout."""

    source: str = "constant"
    vf: object = None
    L_w: float = 5.0
    w_rate_max: float = 20.0
    w_value: float = 0.0
    w_d_value: float = 0.0
    _grad: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.source not in ("value_function", "sinusoidal", "constant", "scripted"):
            raise ConfigError(f"unknown adversary source {self.source!r}")
        if self.source == "value_function":
            if self.vf is None:
                raise ConfigError("value_function adversary needs a solved value function")
            self._grad = _GradientField(self.vf)

    def select(self, t, e_p, e_v, d):
        if self.source == "value_function":
            w_d, w = optimal_adversary(
                self.vf, (e_p, e_v, d), t,
                L_w=self.L_w, w_rate_max=self.w_rate_max, _grad=self._grad,
            )
        else:
            w_d, w = self.w_d_value, self.w_value
        w = float(np.clip(w, -self.L_w * d, self.L_w * d))
        w_d = float(np.clip(w_d, 0.0, self.w_rate_max))
        return w_d, w


def make_dde_controller(policy):
    """Adapter for the true-system simulator: reads the error coordinates
    from the pair state and the current delay from the signal, then splits
    the error input symmetrically (u1 = u_e/2, u2 = -u_e/2)."""

    def controller(t, x, d1, d2):
        e = ErrorState.from_pair_state(x)
        u_e = policy.u_error(t, e.e_p, e.e_v, d2)
        return 0.5 * u_e, -0.5 * u_e

    return controller


def rollout_error_game(k, b, x0, T, dt, control, adversary, d_max):
    """Forward RK4 rollout of the approximate (e_p, e_v, d) system under the
    given policies, holding each input over a step.  The delay coordinate is
    clamped to [0, d_max].  Returns (times, states, u_log, stage_cost_of_ev2).
    """
    from .models import error_dynamics_rhs

    n_steps = int(round(T / dt))
    times = np.arange(n_steps + 1) * dt
    states = np.empty((n_steps + 1, 3))
    u_log = np.zeros(n_steps + 1)
    states[0] = x0
    cost = 0.0
    for i in range(n_steps):
        ep, ev, d = states[i]
        t = times[i]
        u = control(t, ep, ev, d) if control is not None else 0.0
        w_d, w = adversary(t, ep, ev, d) if adversary is not None else (0.0, 0.0)
        u_log[i] = u

        def f(_t, s):
            epp, evv, dd = s
            dd = min(max(dd, 0.0), d_max)
            dep, dev = error_dynamics_rhs(epp, evv, dd, u, w, k, b)
            ddot = 1.0 - dd * w_d
            if dd >= d_max:
                ddot = min(ddot, 0.0)
            elif dd <= 0.0:
                ddot = max(ddot, 0.0)
            return np.array([dep, dev, ddot])

        s = states[i]
        k1 = f(t, s)
        k2 = f(t + 0.5 * dt, s + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, s + 0.5 * dt * k2)
        k4 = f(t + dt, s + dt * k3)
        nxt = s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        nxt[2] = min(max(nxt[2], 0.0), d_max)
        states[i + 1] = nxt
        cost += 0.5 * dt * (ev * ev + nxt[1] * nxt[1])
    u_log[-1] = u_log[-2] if n_steps else 0.0
    return times, states, u_log, cost

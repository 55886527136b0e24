"""Delay signals d(t) injected into the coupled system."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

KINDS = ("constant", "sinusoidal", "piecewise_constant", "policy_driven")


@dataclass
class DelaySignal:
    """Time-varying delay bounded by ``d_max``.

    kinds:
      constant            d(t) = d_max
      sinusoidal          d(t) = (d_max/2)(1 + sin(omega t + phi))
      piecewise_constant  levels held between the times in ``breaks``
      policy_driven       d integrated as  d' = 1 - d w_d  with w_d from
                          ``rate_fn(t, d, context)``; advanced by the simulator

    ``t_on`` gates the signal: d(t) = 0 for t < t_on.  Every evaluation is
    clamped to [0, d_max].
    """

    kind: str
    d_max: float
    omega: float = 0.5
    phi: float = 0.0
    breaks: tuple = ()
    levels: tuple = ()
    t_on: float = 0.0
    rate_fn: object = None
    d0: float = 0.0
    _d_current: float = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown delay kind {self.kind!r}")
        if self.d_max < 0:
            raise ConfigError("d_max must be nonnegative")
        if self.kind == "piecewise_constant" and len(self.levels) != len(self.breaks) + 1:
            raise ConfigError("piecewise_constant needs len(levels) == len(breaks) + 1")
        if self.kind == "policy_driven":
            if self.rate_fn is None:
                raise ConfigError("policy_driven delay needs a rate_fn")
            self._d_current = min(max(self.d0, 0.0), self.d_max)

    @property
    def needs_advance(self):
        return self.kind == "policy_driven"

    def advance(self, t, dt, context=None):
        """Integrate the delay-rate dynamics over one simulator step."""
        if not self.needs_advance:
            return
        d = self._d_current
        w_d = float(self.rate_fn(t, d, context))
        d = d + dt * (1.0 - d * w_d)
        self._d_current = min(max(d, 0.0), self.d_max)

    def eval(self, t):
        if t < self.t_on:
            return 0.0
        if self.kind == "constant":
            raw = self.d_max
        elif self.kind == "sinusoidal":
            raw = 0.5 * self.d_max * (1.0 + np.sin(self.omega * t + self.phi))
        elif self.kind == "piecewise_constant":
            raw = self.levels[np.searchsorted(self.breaks, t, side="right")]
        else:
            raw = self._d_current
        return float(min(max(raw, 0.0), self.d_max))


def eval_delay(sig, t):
    """Delay value at time t, clamped to [0, d_max]."""
    if t < 0:
        raise ConfigError("delay signals are defined for t >= 0")
    return sig.eval(t)


def zero_delay():
    return DelaySignal(kind="constant", d_max=0.0)


def sample_delay_signal(rng, d_max, horizon):
    """Random signal from the mixed family used by the Monte-Carlo checks.

    Draws uniformly among a constant level, a sinusoid with random frequency
    and phase, and a 5-segment piecewise-constant profile.
    """
    kind = rng.choice(["constant", "sinusoidal", "piecewise_constant"])
    if kind == "constant":
        level = rng.uniform(0.0, d_max)
        return DelaySignal(kind="piecewise_constant", d_max=d_max, breaks=(), levels=(level,))
    if kind == "sinusoidal":
        return DelaySignal(
            kind="sinusoidal",
            d_max=d_max,
            omega=rng.uniform(0.1, 2.0),
            phi=rng.uniform(0.0, 2.0 * np.pi),
        )
    breaks = tuple(np.sort(rng.uniform(0.0, horizon, size=4)))
    levels = tuple(rng.uniform(0.0, d_max, size=5))
    return DelaySignal(kind="piecewise_constant", d_max=d_max, breaks=breaks, levels=levels)

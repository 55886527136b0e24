"""Time-stamped state history with interpolated lookup of past values."""

from bisect import bisect_left

import numpy as np

from .errors import ConfigError


class HistoryBuffer:
    """Record of past states supporting lookup of x(t - d(t)).

    Sample times must be strictly increasing.  Queries before ``t0`` return
    the constant pre-history value, queries at a stored time return that
    sample exactly, and queries up to one step beyond the newest sample are
    answered by linear extrapolation (needed when the delay is smaller than
    the integrator step).

    The integrator additionally records one-sided state derivatives per
    elapsed interval; cubic Hermite dense output built from them never
    crosses the solution's derivative kinks, which keeps the integrator's
    observed convergence order above three.
    """

    def __init__(self, t0, x0, initial_value=None):
        self.t0 = float(t0)
        x0 = np.asarray(x0, dtype=float)
        self.initial_value = (
            x0.copy() if initial_value is None else np.asarray(initial_value, dtype=float)
        )
        self.times = [self.t0]
        self.states = [x0.copy()]
        self.interval_derivs = []  # (left_rate, right_rate) per elapsed interval

    def __len__(self):
        return len(self.times)

    @property
    def latest_time(self):
        return self.times[-1]

    def append(self, t, x, interval_derivs=None):
        t = float(t)
        if t <= self.times[-1]:
            raise ConfigError(
                f"history times must be strictly increasing: got {t} after {self.times[-1]}"
            )
        self.times.append(t)
        self.states.append(np.asarray(x, dtype=float).copy())
        self.interval_derivs.append(interval_derivs)

    def _last_step(self):
        if len(self.times) >= 2:
            return self.times[-1] - self.times[-2]
        return 0.0

    def lookup(self, t_query, order=1):
        """Value at ``t_query``.

        ``order=1`` is piecewise-linear between bracketing samples; ``order=3``
        uses the per-interval cubic Hermite where the interval rates were
        recorded, falling back to linear.  Extrapolation past the newest
        sample is always linear from the last two samples.
        """
        if not self.times:
            raise ConfigError("history buffer is empty")
        t = float(t_query)
        if t <= self.t0:
            if t == self.t0:
                return self.states[0].copy()
            return self.initial_value.copy()

        times = self.times
        last = times[-1]
        if t >= last:
            if t == last:
                return self.states[-1].copy()
            window = max(1.5 * self._last_step(), 1e-12)
            if t > last + window:
                raise ConfigError(
                    f"lookup at t={t} exceeds extrapolation window past {last}"
                )
            return self._extrapolate(t)

        idx = bisect_left(times, t)
        if times[idx] == t:
            return self.states[idx].copy()
        lo = idx - 1
        if order >= 3 and self.interval_derivs[lo] is not None:
            return self._hermite(lo, t)
        return self._linear(lo, t)

    def _linear(self, lo, t):
        t0, t1 = self.times[lo], self.times[lo + 1]
        th = (t - t0) / (t1 - t0)
        return (1.0 - th) * self.states[lo] + th * self.states[lo + 1]

    def _extrapolate(self, t):
        if len(self.times) < 2:
            return self.states[-1].copy()
        return self._linear(len(self.times) - 2, t)

    def _hermite(self, lo, t):
        t0, t1 = self.times[lo], self.times[lo + 1]
        h = t1 - t0
        th = (t - t0) / h
        m0, m1 = self.interval_derivs[lo]
        t2 = th * th
        t3 = t2 * th
        return (
            (2.0 * t3 - 3.0 * t2 + 1.0) * self.states[lo]
            + (-2.0 * t3 + 3.0 * t2) * self.states[lo + 1]
            + (t3 - 2.0 * t2 + th) * h * m0
            + (t3 - t2) * h * m1
        )


def history_lookup(buf, t_query):
    """Piecewise-linear lookup of the recorded state at ``t_query``."""
    return buf.lookup(t_query, order=1)

"""Grid-based backward solver for the delay game's Hamilton-Jacobi equation.

The value function lives on a rectangular (e_p, e_v, d) grid.  The control
minimizes, while the approximation error w and the delay-rate input act as
maximizing adversaries; all three enter affinely, so the pointwise saddle is
closed-form bang-bang.  Space is discretized with a local Lax-Friedrichs
numerical Hamiltonian and time with two-stage TVD Runge-Kutta.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InstabilityError

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

DEFAULT_W_RATE_MAX = 20.0
DEFAULT_CFL = 0.5
MAX_STORED_SLICES = 64


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.count < 3:
            raise ConfigError(f"axis {self.name}: need at least 3 nodes")
        if not self.hi > self.lo:
            raise ConfigError(f"axis {self.name}: hi must exceed lo")

    @property
    def spacing(self):
        return (self.hi - self.lo) / (self.count - 1)

    @property
    def coords(self):
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class Grid:
    axes: tuple

    @classmethod
    def for_error_game(cls, d_max, ep=(-2.4, 2.4, 101), ev=(-5.0, 5.0, 101), d_count=21):
        if d_max <= 0:
            raise ConfigError("d_max must be positive for a delay axis")
        return cls(
            axes=(
                Axis("e_p", ep[0], ep[1], ep[2]),
                Axis("e_v", ev[0], ev[1], ev[2]),
                Axis("d", 0.0, d_max, d_count),
            )
        )

    @property
    def ndim(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(ax.count for ax in self.axes)

    @property
    def spacings(self):
        return tuple(ax.spacing for ax in self.axes)

    @property
    def names(self):
        return tuple(ax.name for ax in self.axes)

    def mesh(self):
        return np.meshgrid(*(ax.coords for ax in self.axes), indexing="ij", sparse=True)

    def clamp(self, x):
        x = np.asarray(x, dtype=float)
        lo = np.array([ax.lo for ax in self.axes])
        hi = np.array([ax.hi for ax in self.axes])
        return np.minimum(np.maximum(x, lo), hi)

    def contains(self, x):
        return all(ax.lo - 1e-12 <= xi <= ax.hi + 1e-12 for ax, xi in zip(self.axes, x))


@dataclass
class ValueFunction:
    """Scalar field over the grid at one backward-time instant."""

    grid: Grid
    values: np.ndarray
    time: float

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ConfigError("value array shape does not match grid")

    def interpolate(self, x, return_clamped=False):
        """Multilinear interpolation at a point (clamped to the hull)."""
        xc = self.grid.clamp(x)
        clamped = bool(np.max(np.abs(xc - np.asarray(x, dtype=float))) > 1e-12)
        idx = []
        frac = []
        for ax, xi in zip(self.grid.axes, xc):
            pos = (xi - ax.lo) / ax.spacing
            i = int(min(max(np.floor(pos), 0), ax.count - 2))
            idx.append(i)
            frac.append(pos - i)
        out = 0.0
        for corner in range(2 ** self.grid.ndim):
            w = 1.0
            sel = []
            for a in range(self.grid.ndim):
                bit = (corner >> a) & 1
                w *= frac[a] if bit else (1.0 - frac[a])
                sel.append(idx[a] + bit)
            out += w * self.values[tuple(sel)]
        if return_clamped:
            return float(out), clamped
        return float(out)

    def gradient_arrays(self):
        """Central-difference gradient per axis (one-sided at the edges)."""
        return np.gradient(self.values, *self.grid.spacings, edge_order=1)


@dataclass
class CostSpec:
    """Stage and terminal cost, as callables over the grid mesh fields."""

    stage: object = None
    terminal: object = None
    name: str = ""

    def stage_field(self, mesh):
        if self.stage is None:
            return 0.0
        return self.stage(*mesh)

    def terminal_field(self, mesh):
        if self.terminal is None:
            return np.zeros(np.broadcast(*mesh).shape)
        return np.broadcast_to(self.terminal(*mesh), np.broadcast(*mesh).shape).astype(float)


def stabilization_cost():
    """Stage ||e_v||^2, zero terminal: the delay-robust stabilization game."""
    return CostSpec(stage=lambda ep, ev, d: ev * ev, terminal=None, name="stabilization")


def terminal_position_cost():
    """Zero stage, terminal |e_p|: worst-case final position error."""
    return CostSpec(stage=None, terminal=lambda ep, ev, d: np.abs(ep), name="terminal_ep")


class ErrorGameHamiltonian:
    """Input boxes and saddle for the symmetric error-coordinate game.

    u in [-u_max, u_max] minimizes (unless a frozen ``u_field`` is plugged
    in), w in [-L_w d, L_w d] and the delay-rate input w_d in [0, w_rate_max]
    maximize, with delay dynamics d' = 1 - d w_d.  The delay rate is clamped
    at the d-axis faces so d stays inside [0, d_max].
    """

    axis_names = ("e_p", "e_v", "d")

    def __init__(
        self,
        k,
        b,
        u_max,
        d_max,
        L_w=5.0,
        w_rate_max=DEFAULT_W_RATE_MAX,
        include_w=True,
        u_field=None,
    ):
        if min(k, u_max, d_max) < 0 or b < 0 or L_w < 0 or w_rate_max < 0:
            raise ConfigError("game parameters must be nonnegative")
        self.k = k
        self.b = b
        self.u_max = u_max
        self.d_max = d_max
        self.L_w = L_w
        self.w_rate_max = w_rate_max
        self.include_w = include_w
        self.u_field = u_field

    def _pieces(self, ep, ev, d, u_fixed=None):
        den = 1.0 + 0.5 * self.k * d * d
        gu = 1.0 / den
        a = (-2.0 * self.k * ep + (self.k * d - self.b) * ev) * gu
        if u_fixed is not None:
            a = a + u_fixed * gu
        wmag = (self.L_w * d) * gu if self.include_w else 0.0
        # Delay-rate range over w_d, clamped at the axis faces.
        dlo = 1.0 - d * self.w_rate_max
        dhi = np.ones_like(np.asarray(d, dtype=float))
        top = d >= self.d_max - 1e-12
        bot = d <= 1e-12
        dlo = np.where(top, np.minimum(dlo, 0.0), dlo)
        dhi = np.where(top, np.minimum(dhi, 0.0), dhi)
        dlo = np.where(bot, np.maximum(dlo, 0.0), dlo)
        dhi = np.where(bot, np.maximum(dhi, 0.0), dhi)
        return a, gu, wmag, dlo, dhi

    def saddle(self, ep, ev, d, p1, p2, p3, u_fixed=None):
        """min over u, max over (w, w_d) of the costate-dynamics product."""
        if self.u_field is not None and u_fixed is None:
            raise ConfigError("pointwise saddle needs u_fixed when a control field is plugged in")
        a, gu, wmag, dlo, dhi = self._pieces(ep, ev, d, u_fixed)
        h = p1 * ev + p2 * a
        if u_fixed is None:
            h = h - self.u_max * np.abs(p2) * gu
        h = h + wmag * np.abs(p2)
        h = h + np.maximum(p3 * dlo, p3 * dhi)
        return h

    def prepare(self, grid):
        if grid.names != self.axis_names:
            raise ConfigError(f"grid axes {grid.names} do not match {self.axis_names}")
        ep, ev, d = grid.mesh()
        u_fixed = self.u_field
        a, gu, wmag, dlo, dhi = self._pieces(ep, ev, d, u_fixed)
        # Coefficient of |p2| combines the adversarial w gain and (when the
        # control still optimizes) the minimizing -u_max influence.
        abs_p2_coeff = wmag - (self.u_max * gu if u_fixed is None else 0.0)
        alpha_ep = np.abs(ev)
        alpha_ev = np.abs(a) + wmag + (self.u_max * gu if u_fixed is None else 0.0)
        alpha_d = np.maximum(np.abs(dlo), np.abs(dhi))

        def ham(p1, p2, p3):
            h = p1 * ev
            h += p2 * a
            h += np.abs(p2) * abs_p2_coeff
            h += np.maximum(p3 * dlo, p3 * dhi)
            return h

        fused = self._build_fused(grid, u_fixed) if HAVE_NUMBA else None
        return _PreparedFields(hamiltonian=ham, alpha=(alpha_ep, alpha_ev, alpha_d), fused=fused)

    def _build_fused(self, grid, u_fixed):
        """Single-pass jitted Lax-Friedrichs operator for this game; agrees
        with the numpy path to roundoff (regression-tested)."""
        ep = grid.axes[0].coords
        ev = grid.axes[1].coords
        d = grid.axes[2].coords
        gu = 1.0 / (1.0 + 0.5 * self.k * d * d)
        kd_b = (self.k * d - self.b) * gu
        wmag = (self.L_w * d) * gu if self.include_w else np.zeros_like(d)
        cabs = wmag - (self.u_max * gu if u_fixed is None else 0.0)
        aw = wmag + (self.u_max * gu if u_fixed is None else 0.0)
        _, _, _, dlo, dhi = self._pieces(0.0, 0.0, d, None)
        two_k = 2.0 * self.k
        if u_fixed is None:
            u_field = np.zeros((1, 1, 1))
            has_u = False
        else:
            u_field = np.ascontiguousarray(u_fixed)
            has_u = True
        h0, h1, h2 = grid.spacings

        def fused(values, out, stage):
            _error_game_lf_kernel(
                values, out, stage, ep, ev, gu, kd_b, cabs, aw,
                np.ascontiguousarray(dlo), np.ascontiguousarray(dhi),
                u_field, has_u, two_k, h0, h1, h2,
            )

        return fused


class AdvectionHamiltonian:
    """Input-free 1-D transport x' = c; analytic characteristics make this
    the standard correctness check for the scheme."""

    def __init__(self, c):
        self.c = c

    def prepare(self, grid):
        if grid.ndim != 1:
            raise ConfigError("advection validation runs on a 1-D grid")
        alpha = (np.full(grid.shape, abs(self.c)),)
        c = self.c
        return _PreparedFields(hamiltonian=lambda p: c * p, alpha=alpha)


@dataclass
class _PreparedFields:
    hamiltonian: object
    alpha: tuple
    fused: object = None


if HAVE_NUMBA:

    @numba.njit(cache=True, parallel=True)
    def _error_game_lf_kernel(
        V, out, stage, ep, ev, gu, kd_b, cabs, aw, dlo, dhi,
        u_field, has_u, two_k, h0, h1, h2,
    ):
        n0, n1, n2 = V.shape
        for i in numba.prange(n0):
            im = i - 1 if i > 0 else 0
            ip = i + 1 if i < n0 - 1 else n0 - 1
            for j in range(n1):
                jm = j - 1 if j > 0 else 0
                jp = j + 1 if j < n1 - 1 else n1 - 1
                evj = ev[j]
                for k in range(n2):
                    km = k - 1 if k > 0 else 0
                    kp = k + 1 if k < n2 - 1 else n2 - 1
                    v = V[i, j, k]
                    # one-sided differences collapse to the interior value at
                    # the edges, so the edge dissipation vanishes
                    pp0 = (V[ip, j, k] - v) / h0 if i < n0 - 1 else (v - V[im, j, k]) / h0
                    pm0 = (v - V[im, j, k]) / h0 if i > 0 else pp0
                    pp1 = (V[i, jp, k] - v) / h1 if j < n1 - 1 else (v - V[i, jm, k]) / h1
                    pm1 = (v - V[i, jm, k]) / h1 if j > 0 else pp1
                    pp2 = (V[i, j, kp] - v) / h2 if k < n2 - 1 else (v - V[i, j, km]) / h2
                    pm2 = (v - V[i, j, km]) / h2 if k > 0 else pp2

                    pa0 = 0.5 * (pp0 + pm0)
                    pa1 = 0.5 * (pp1 + pm1)
                    pa2 = 0.5 * (pp2 + pm2)

                    a = -two_k * ep[i] * gu[k] + kd_b[k] * evj
                    if has_u:
                        a += u_field[i, j, k] * gu[k]
                    t3 = pa2 * dlo[k]
                    t3b = pa2 * dhi[k]
                    if t3b > t3:
                        t3 = t3b
                    h = pa0 * evj + pa1 * a + abs(pa1) * cabs[k] + t3

                    alpha1 = abs(a) + aw[k]
                    a2lo = abs(dlo[k])
                    a2hi = abs(dhi[k])
                    alpha2 = a2lo if a2lo > a2hi else a2hi
                    diss = 0.5 * (
                        abs(evj) * (pp0 - pm0) + alpha1 * (pp1 - pm1) + alpha2 * (pp2 - pm2)
                    )
                    out[i, j, k] = h + stage[i, j, k] + diss


def hamiltonian(state, costate, cost, spec, t=0.0):
    """Pointwise saddle value l_t + p . f at the given state and costate."""
    ep, ev, d = (float(v) for v in state)
    p1, p2, p3 = (float(v) for v in costate)
    stage = 0.0 if cost is None or cost.stage is None else float(cost.stage(ep, ev, d))
    return stage + float(spec.saddle(ep, ev, d, p1, p2, p3))


class _Workspace:
    """Scratch arrays reused across solver steps."""

    def __init__(self, grid):
        self.grid = grid
        self.minus = [np.empty(grid.shape) for _ in grid.axes]
        self.plus = [np.empty(grid.shape) for _ in grid.axes]

    def one_sided_gradients(self, values):
        for ax_i, h in enumerate(self.grid.spacings):
            m, p = self.minus[ax_i], self.plus[ax_i]
            lo = tuple(slice(None, -1) if a == ax_i else slice(None) for a in range(self.grid.ndim))
            hi = tuple(slice(1, None) if a == ax_i else slice(None) for a in range(self.grid.ndim))
            first = tuple(slice(0, 1) if a == ax_i else slice(None) for a in range(self.grid.ndim))
            last = tuple(slice(-1, None) if a == ax_i else slice(None) for a in range(self.grid.ndim))
            np.subtract(values[hi], values[lo], out=p[lo])
            p[lo] /= h
            p[last] = p[tuple(slice(-2, -1) if a == ax_i else slice(None) for a in range(self.grid.ndim))]
            m[hi] = p[lo]
            m[first] = p[first]
        return self.minus, self.plus


def _one_sided_gradients(values, grid):
    return _Workspace(grid).one_sided_gradients(values)


def _lf_operator(values, fields, stage, grid, ws=None):
    # Backward marching: with s = T - t the PDE reads V_s - H = 0, so the
    # Lax-Friedrichs dissipation enters with a plus sign to stay upwind.
    ws = ws or _Workspace(grid)
    minus, plus = ws.one_sided_gradients(values)
    p_avg = tuple(0.5 * (m + p) for m, p in zip(minus, plus))
    out = fields.hamiltonian(*p_avg)
    out += stage
    for a_i, (m, p) in enumerate(zip(minus, plus)):
        out += (0.5 * fields.alpha[a_i]) * (p - m)
    return out


def lax_friedrichs_step(vf, cost, spec, dt):
    """One explicit backward step V <- V + dt * (l_t + H - dissipation)."""
    fields = spec.prepare(vf.grid)
    stage = cost.stage_field(vf.grid.mesh()) if cost is not None else 0.0
    new_values = vf.values + dt * _lf_operator(vf.values, fields, stage, vf.grid)
    if not np.all(np.isfinite(new_values)):
        alphas = [float(np.max(a)) for a in fields.alpha]
        cfl = dt * sum(a / h for a, h in zip(alphas, vf.grid.spacings))
        raise InstabilityError(
            f"non-finite value after explicit step (CFL number {cfl:.3f})",
            step=0,
            time=vf.time,
            cfl=cfl,
        )
    return ValueFunction(grid=vf.grid, values=new_values, time=vf.time - dt)


@dataclass
class ValueSeries:
    """Backward-time slices of the solve, newest (smallest time) last."""

    grid: Grid
    times: list
    slices: list
    dt_history: list = field(default_factory=list)
    cost_name: str = ""

    @property
    def final(self):
        return ValueFunction(grid=self.grid, values=self.slices[-1], time=self.times[-1])

    def at_time(self, t):
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return ValueFunction(grid=self.grid, values=self.slices[i], time=self.times[i])


def solve_hji(grid, spec, cost, horizon, cfl=DEFAULT_CFL, slice_stride=None, progress=None):
    """Backward integration of the game PDE from V(., horizon) = l_T to t=0.

    The step obeys dt = cfl / sum_i(alpha_i / dx_i) with the dissipation
    bounds recomputed every step; each step is a two-stage TVD Runge-Kutta
    application of the Lax-Friedrichs operator.  Slices are retained every
    ``slice_stride`` steps (default: every 10, widened to cap memory).
    """
    if horizon <= 0:
        raise ConfigError("horizon must be positive")
    fields = spec.prepare(grid)
    mesh = grid.mesh()
    stage = cost.stage_field(mesh) if cost is not None else 0.0
    values = cost.terminal_field(mesh).copy()

    # A priori step estimate just to pick a slice stride bounding memory.
    denom0 = sum(float(np.max(a)) / h for a, h in zip(fields.alpha, grid.spacings))
    est_steps = max(1, int(np.ceil(horizon * denom0 / cfl))) if denom0 > 0 else 1
    if slice_stride is None:
        slice_stride = max(10, int(np.ceil(est_steps / MAX_STORED_SLICES)))

    t = float(horizon)
    series = ValueSeries(
        grid=grid, times=[t], slices=[values.copy()], cost_name=cost.name if cost else ""
    )
    ws = _Workspace(grid)
    fused = fields.fused
    if fused is not None:
        stage3 = np.ascontiguousarray(np.broadcast_to(np.asarray(stage, dtype=float), grid.shape))
        scratch = np.empty(grid.shape)
    step = 0
    while t > 1e-12:
        alphas = [float(np.max(a)) for a in fields.alpha]
        denom = sum(a / h for a, h in zip(alphas, grid.spacings))
        dt = t if denom <= 0 else min(cfl / denom, t)
        if fused is not None:
            fused(values, scratch, stage3)
            v1 = values + dt * scratch
            fused(v1, scratch, stage3)
            v1 += dt * scratch
            values = 0.5 * (values + v1)
        else:
            v1 = values + dt * _lf_operator(values, fields, stage, grid, ws)
            v2 = v1 + dt * _lf_operator(v1, fields, stage, grid, ws)
            values = 0.5 * (values + v2)
        t -= dt
        step += 1
        series.dt_history.append(dt)
        if not np.all(np.isfinite(values)):
            raise InstabilityError(
                f"non-finite value at step {step} (t={t:.4f}, CFL={cfl})",
                step=step,
                time=t,
                cfl=cfl,
            )
        if step % slice_stride == 0 and t > 1e-12:
            series.times.append(t)
            series.slices.append(values.copy())
        if progress is not None and step % 500 == 0:
            progress(step, t)
    series.times.append(0.0)
    series.slices.append(values)
    return series


def extract_control_field(grid, values, u_max):
    """Bang-bang minimizer at every node from the value gradient; exact
    gradient zeros fall back to u = 0."""
    grads = np.gradient(values, *grid.spacings, edge_order=1)
    return -u_max * np.sign(grads[1])


def solve_hjb_closed_loop(grid, spec, step1_values, cost, horizon, cfl=DEFAULT_CFL, **kw):
    """Adversary-only backward solve with the extracted control plugged in."""
    u_field = extract_control_field(grid, step1_values, spec.u_max)
    closed = ErrorGameHamiltonian(
        k=spec.k,
        b=spec.b,
        u_max=spec.u_max,
        d_max=spec.d_max,
        L_w=spec.L_w,
        w_rate_max=spec.w_rate_max,
        include_w=spec.include_w,
        u_field=u_field,
    )
    return solve_hji(grid, closed, cost, horizon, cfl=cfl, **kw)


@dataclass
class SafeSet:
    mask: np.ndarray
    threshold: float
    slice_areas: np.ndarray
    d_coords: np.ndarray


def extract_safe_set(vf, threshold):
    """Sublevel set {V <= threshold} with per-delay-slice areas."""
    mask = vf.values <= threshold
    ep_ax, ev_ax, d_ax = vf.grid.axes
    cell = ep_ax.spacing * ev_ax.spacing
    areas = mask.sum(axis=(0, 1)) * cell
    return SafeSet(
        mask=mask,
        threshold=threshold,
        slice_areas=areas.astype(float),
        d_coords=d_ax.coords,
    )

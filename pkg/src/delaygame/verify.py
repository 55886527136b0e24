"""Self-contained oracle suites behind the ``verify`` CLI command.

Each suite returns (passed, lines); lines are human-readable PASS/FAIL
diagnostics with margins.
"""

import numpy as np
from numpy.polynomial import Polynomial

from .analysis import fit_through_origin, lk_condition, theorem2_constant, verify_value_sandwich
from .approx import estimate_residual_constant, residual_w
from .dde import simulate
from .delays import DelaySignal
from .hji import (
    AdvectionHamiltonian,
    Axis,
    CostSpec,
    ErrorGameHamiltonian,
    Grid,
    solve_hji,
    stabilization_cost,
)
from .models import DoubleIntegratorPair, ErrorState
from .policy import ControlPolicy


def method_of_steps_reference():
    """Closed-form solution of x' = -x(t-1) with unit pre-history.

    Integrating interval by interval gives one polynomial per unit segment;
    returns a callable evaluating the exact solution for t <= 6.
    """
    segments = [Polynomial([1.0])]
    for _ in range(6):
        prev = segments[-1]
        segments.append(Polynomial([prev(1.0)]) - prev.integ())

    def reference(t):
        if t <= 0:
            return 1.0
        k = int(np.ceil(t))
        return float(segments[k](t - (k - 1)))

    return reference


def _integrate_scalar_dde(horizon, dt):
    """RK4 run of x' = -x(t-1) from unit history, via the pair machinery."""

    class ScalarLag:
        n = 1
        m = 1
        u_max = 0.0

        def f1(self, x1, x2_delayed, u1):
            return -x2_delayed

        f2 = f1

        def delayed_arg(self, agent, x, y, d):
            return x - y * d

    # Both agents run the same scalar equation so agent 1 is the solution.
    sig = DelaySignal(kind="constant", d_max=1.0)
    traj = simulate(ScalarLag(), np.array([1.0, 1.0]), sig, None, horizon, dt)
    return traj.times, traj.states[:, 0]


def verify_dde():
    lines = []
    ok = True
    ref = method_of_steps_reference()

    times, xs = _integrate_scalar_dde(2.0, 1e-3)
    errs = np.abs(xs - np.array([ref(t) for t in times]))
    max_err = float(np.max(errs))
    good = max_err <= 1e-5
    ok &= good
    lines.append(f"{'PASS' if good else 'FAIL'}: max error over [0,2] at dt=1e-3: {max_err:.3e} (<= 1e-5)")

    # Convergence is measured at steps coarse enough that truncation error
    # sits far above roundoff (the fine-step errors above are ~1e-14).
    orders = []
    prev_err = None
    for dt in (0.25, 0.125, 0.0625):
        t, x = _integrate_scalar_dde(6.0, dt)
        err = float(np.max(np.abs(x - np.array([ref(s) for s in t]))))
        if prev_err is not None:
            orders.append(np.log2(prev_err / err))
        prev_err = err
    order = float(min(orders))
    good = order >= 3.0
    ok &= good
    lines.append(f"{'PASS' if good else 'FAIL'}: observed convergence order {order:.2f} (>= 3)")
    return ok, lines


def _brute_force_saddle(spec, ep, ev, d, p1, p2, p3):
    """Corner enumeration of min over u of max over (w, w_d), straight from
    the dynamics definition."""
    k, b = spec.k, spec.b
    den = 1.0 + 0.5 * k * d * d
    u_set = (-spec.u_max, 0.0, spec.u_max)
    w_lim = spec.L_w * d if spec.include_w else 0.0
    w_set = (-w_lim, 0.0, w_lim)
    wd_set = (0.0, 0.5 * spec.w_rate_max, spec.w_rate_max)
    best_u = np.inf
    for u in u_set:
        worst = -np.inf
        for w in w_set:
            for wd in wd_set:
                f_ep = ev
                f_ev = (-2.0 * k * ep + (k * d - b) * ev + u + w) / den
                f_d = 1.0 - d * wd
                if d >= spec.d_max - 1e-12:
                    f_d = min(f_d, 0.0)
                elif d <= 1e-12:
                    f_d = max(f_d, 0.0)
                worst = max(worst, p1 * f_ep + p2 * f_ev + p3 * f_d)
        best_u = min(best_u, worst)
    return best_u


def verify_hamiltonian(n_random=1000, seed=42):
    lines = []
    ok = True
    rng = np.random.default_rng(seed)
    spec = ErrorGameHamiltonian(k=1.0, b=0.15, u_max=0.4, d_max=0.5, L_w=5.0, w_rate_max=20.0)

    worst = 0.0
    for _ in range(n_random):
        ep = rng.uniform(-2.4, 2.4)
        ev = rng.uniform(-5.0, 5.0)
        d = rng.choice([0.0, spec.d_max, rng.uniform(0.0, spec.d_max)])
        p = rng.normal(size=3) * 10.0
        closed = float(spec.saddle(ep, ev, d, *p))
        brute = _brute_force_saddle(spec, ep, ev, d, *p)
        worst = max(worst, abs(closed - brute))
    good = worst <= 1e-12
    ok &= good
    lines.append(f"{'PASS' if good else 'FAIL'}: saddle vs corner enumeration, worst gap {worst:.2e} (<= 1e-12)")

    c = 1.0
    grid = Grid(axes=(Axis("x", 0.0, 2.0, 101),))
    cost = CostSpec(stage=None, terminal=lambda x: x, name="advect")
    series = solve_hji(grid, AdvectionHamiltonian(c), cost, horizon=1.0)
    expected = grid.axes[0].coords + c * 1.0
    err = float(np.max(np.abs(series.final.values - expected)))
    bound = 2.0 * grid.axes[0].spacing * abs(c)
    good = err <= bound
    ok &= good
    lines.append(f"{'PASS' if good else 'FAIL'}: advection max-node error {err:.3e} (<= {bound:.3e})")
    return ok, lines


def verify_lk():
    lines = []
    ok = True
    cases = [
        ((1, 1, 0.15, 0.15, 0.25, 0.25), False, 0.09, 0.125),
        ((1, 1, 0.5, 0.5, 0.0, 0.0), True, 1.0, 0.0),
        ((1, 1, 0.5, 0.5, 0.5, 0.5), True, 1.0, 0.5),
    ]
    for args, want, lhs, rhs in cases:
        v = lk_condition(*args)
        good = v.satisfied == want and abs(v.lhs - lhs) < 1e-12 and abs(v.rhs - rhs) < 1e-12
        ok &= good
        lines.append(
            f"{'PASS' if good else 'FAIL'}: lk{args} -> lhs={v.lhs:.4g} rhs={v.rhs:.4g} "
            f"satisfied={v.satisfied}"
        )
    return ok, lines


def verify_lemma1():
    lines = []
    ok = True
    model = DoubleIntegratorPair(k=1.0, b=0.0, u_max=0.4)

    fit = estimate_residual_constant(model, [0.05, 0.1, 0.2])
    good = 1.8 <= fit.exponent <= 2.2
    ok &= good
    lines.append(f"{'PASS' if good else 'FAIL'}: residual scaling exponent {fit.exponent:.3f} (in [1.8, 2.2])")

    x0 = ErrorState(e_p=1.0, e_v=1.0).split()
    worst_ratio = 0.0
    for kind in ("sinusoidal", "constant"):
        sig = DelaySignal(kind=kind, d_max=0.24, omega=0.5)
        traj = simulate(model, x0, sig, None, 10.0, 0.005)
        rec = residual_w(model, traj, sig)
        bound = 5.0 * rec.d_values + 1e-9
        worst_ratio = max(worst_ratio, float(np.max(rec.w_norms / np.maximum(bound, 1e-300))))
    good = worst_ratio <= 1.0
    ok &= good
    lines.append(
        f"{'PASS' if good else 'FAIL'}: residuals vs 5|d| bound, worst ratio {worst_ratio:.3f} (<= 1)"
    )
    return ok, lines


def sandwich_suite(d_max_list=(0.1, 0.2, 0.4), d_max_main=0.24, n_samples=100, seed=7,
                   grid_counts=(61, 61, 11), horizon=8.0, u_max=1.0, k=1.0, b=0.15,
                   progress=None):
    """Monte-Carlo sandwich runs for one main bound plus a gap-growth list.

    Returns (reports dict keyed by d_max, worst gaps list, fit slope,
    relative residual)."""
    reports = {}
    worst_gaps = []
    all_dmax = list(dict.fromkeys([d_max_main, *d_max_list]))
    for d_max in all_dmax:
        grid = Grid.for_error_game(
            d_max, ep=(-2.4, 2.4, grid_counts[0]), ev=(-4.0, 4.0, grid_counts[1]), d_count=grid_counts[2]
        )
        spec = ErrorGameHamiltonian(k=k, b=b, u_max=u_max, d_max=d_max, L_w=5.0)
        series = solve_hji(grid, spec, stabilization_cost(), horizon, progress=progress)
        vf = series.final
        model = DoubleIntegratorPair(k=k, b=b, u_max=u_max)
        policy = ControlPolicy(source="value_function", vf=vf, u_max=u_max, dt_ctrl=0.05)
        rng = np.random.default_rng(seed)
        rep = verify_value_sandwich(vf, model, policy, n_samples, d_max, rng, horizon)
        reports[d_max] = rep
        if d_max in d_max_list:
            worst_gaps.append(rep.worst_gap)
    slope, resid = fit_through_origin(list(d_max_list), worst_gaps)
    return reports, worst_gaps, slope, resid


def verify_theorem2(n_samples=100, seed=7, progress=None):
    lines = []
    ok = True
    c_examples = [
        (1.0, 1.0, 1.0),
        (2.0, 1.0, (np.e**2 + 1.0) / 2.0),
        (1e-14, 1.0, 0.0),
    ]
    for L, T, want in c_examples:
        got = theorem2_constant(L, T)
        good = abs(got - want) < 1e-9
        ok &= good
        lines.append(f"{'PASS' if good else 'FAIL'}: gap constant C({L:g}, {T:g}) = {got:.6g} (want {want:.6g})")

    reports, gaps, slope, resid = sandwich_suite(n_samples=n_samples, seed=seed, progress=progress)
    main = reports[0.24]
    n_viol = len(main.violations)
    good = n_viol == 0
    ok &= good
    lines.append(
        f"{'PASS' if good else 'FAIL'}: {n_viol} sandwich violations over {n_samples} signals at "
        f"d_max=0.24 (worst margin {main.worst_margin:.4f}, tol {main.tol:.4f})"
    )
    good = resid <= 0.25
    ok &= good
    lines.append(
        f"{'PASS' if good else 'FAIL'}: worst-gap linear fit slope {slope:.3f}, relative residual "
        f"{resid:.3f} (<= 0.25) over d_max {list(reports)[1:]}"
    )
    return ok, lines


SUITES = {
    "dde": verify_dde,
    "hamiltonian": verify_hamiltonian,
    "lk": verify_lk,
    "lemma1": verify_lemma1,
    "theorem2": verify_theorem2,
}

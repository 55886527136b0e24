"""Batch command-line harness: simulate | solve | reach | verify | repro.

Exit codes: 0 ok, 1 verification failure, 2 bad configuration,
3 simulation divergence, 4 PDE instability.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import formats
from .analysis import classify_stability
from .dde import simulate
from .errors import ConfigError, DivergenceError, InstabilityError
from .hji import solve_hji, solve_hjb_closed_loop, stabilization_cost, terminal_position_cost, extract_safe_set
from .models import ErrorState
from .policy import ControlPolicy, make_dde_controller
from .repro import run_figure
from .scenario import PRESET_FIGURES, load_preset, load_scenario, parse_floats
from .verify import SUITES

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_UNSTABLE = 4


def _load(scenario_arg):
    if scenario_arg is None:
        raise ConfigError("this command needs --scenario (a file path or preset name)")
    if scenario_arg in PRESET_FIGURES:
        return load_preset(scenario_arg)
    return load_scenario(scenario_arg)


def _progress(step, t):
    print(f"  step {step}, backward time {t:.3f}", flush=True)


def cmd_simulate(args):
    sc = _load(args.scenario)
    if args.seed is not None:
        sc.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    policy = ControlPolicy(source="zero")
    if args.value:
        vf = formats.read_value_dump(args.value)
        policy = ControlPolicy(
            source="value_function", vf=vf, u_max=sc.u_max,
            dt_ctrl=sc.dt_ctrl, t_on=sc.control_t_on,
        )
    model = sc.build_model()
    sig = sc.build_delay()
    x0 = ErrorState(e_p=sc.x0_ep, e_v=sc.x0_ev).split()

    phase_fn = None
    phases = sc.extras.get("phases")
    if phases:
        t_delay = float(phases.get("delay_on", 0.0))
        t_ctrl = float(phases.get("control_on", sc.control_t_on))

        def phase_fn(t):
            return "A" if t < t_delay else ("B" if t < t_ctrl else "C")

    try:
        traj = simulate(
            model, x0, sig, make_dde_controller(policy), sc.run_horizon, sc.dt,
            dt_ctrl=sc.dt_ctrl,
        )
    except DivergenceError as err:
        if err.partial is not None:
            formats.write_trajectory_csv(out / "trajectory_partial.csv", err.partial, phase_fn)
        print(f"divergence at t={err.t_blowup:.4g}; partial trajectory written", file=sys.stderr)
        return EXIT_DIVERGED

    formats.write_trajectory_csv(out / "trajectory.csv", traj, phase_fn)
    verdict = classify_stability(traj)
    summary = {
        "class": verdict.klass,
        "envelope_ratio": verdict.envelope_ratio,
        "final_error": verdict.final_error,
        "n_peaks": verdict.n_peaks,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    formats.write_manifest(out, sc.echo())
    print(f"wrote {out / 'trajectory.csv'}; verdict: {verdict.klass}")
    return EXIT_OK


def cmd_solve(args):
    sc = _load(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = sc.build_grid()
    spec = sc.build_spec()
    stride = sc.slice_stride if sc.slice_stride > 0 else None
    series = solve_hji(
        grid, spec, stabilization_cost(), sc.solve_horizon,
        cfl=sc.cfl, slice_stride=stride,
        progress=_progress if args.verbose else None,
    )
    formats.write_value_dump(out / "value.bin", series.final)
    meta = {
        "grid": {ax.name: [ax.lo, ax.hi, ax.count] for ax in grid.axes},
        "cost": series.cost_name,
        "cfl": sc.cfl,
        "steps": len(series.dt_history),
        "dt_history": series.dt_history,
    }
    (out / "solve_meta.json").write_text(json.dumps(meta) + "\n")
    formats.write_manifest(out, sc.echo())
    print(f"wrote {out / 'value.bin'} after {len(series.dt_history)} steps")
    return EXIT_OK


def cmd_reach(args):
    sc = _load(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not args.value or not Path(args.value).exists():
        raise ConfigError("reach needs --value pointing at a step-1 value dump")
    step1 = formats.read_value_dump(args.value)
    grid = step1.grid
    spec = sc.build_spec()
    series = solve_hjb_closed_loop(
        grid, spec, step1.values, terminal_position_cost(), sc.solve_horizon,
        cfl=sc.cfl, progress=_progress if args.verbose else None,
    )
    vf2 = series.final
    threshold = float(sc.extras.get("reach", {}).get("threshold", 1.5))
    safe = extract_safe_set(vf2, threshold)
    formats.write_value_dump(out / "closed_loop_value.bin", vf2)
    lines = ["d,area"]
    for d, a in zip(safe.d_coords, safe.slice_areas):
        lines.append(f"{float(d)!r},{float(a)!r}")
    (out / "safe_areas.csv").write_text("\n".join(lines) + "\n")
    for i in range(len(safe.d_coords)):
        formats.write_slice_csv(out / f"safe_slice_{i:02d}.csv", vf2, i, threshold=threshold)
    formats.write_manifest(out, sc.echo())
    print(f"wrote safe-set areas for {len(safe.d_coords)} delay slices")
    return EXIT_OK


def cmd_verify(args):
    which = args.which
    suites = list(SUITES) if which == "all" else [which]
    overall = True
    for name in suites:
        if name not in SUITES:
            raise ConfigError(f"unknown verify suite {name!r}; choose from {sorted(SUITES)} or all")
        ok, lines = SUITES[name]()
        overall &= ok
        print(f"[{name}]")
        for line in lines:
            print(f"  {line}")
    return EXIT_OK if overall else EXIT_FAIL


def cmd_repro(args):
    sc = None
    if args.scenario:
        sc = _load(args.scenario)
    executor = None
    if args.threads and args.threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        executor = ProcessPoolExecutor(max_workers=args.threads)
    try:
        ok, checks, _ = run_figure(
            args.figure, scenario=sc, out_dir=args.out,
            progress=_progress if args.verbose else None, executor=executor,
        )
    finally:
        if executor is not None:
            executor.shutdown()
    for c in checks:
        print(c.line())
    return EXIT_OK if ok else EXIT_FAIL


def build_parser():
    parser = argparse.ArgumentParser(
        prog="delaygame",
        description="Delay-robust control toolkit: simulate, solve, and verify.",
    )
    parser.add_argument("--verbose", action="store_true", help="print solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="roll out the true delay system")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--out", default="out_simulate")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--value", default=None, help="value dump enabling feedback control")
    p_sim.set_defaults(func=cmd_simulate)

    p_solve = sub.add_parser("solve", help="solve the grid game for a value function")
    p_solve.add_argument("--scenario", required=True)
    p_solve.add_argument("--out", default="out_solve")
    p_solve.set_defaults(func=cmd_solve)

    p_reach = sub.add_parser("reach", help="closed-loop worst-case solve and safe set")
    p_reach.add_argument("--scenario", required=True)
    p_reach.add_argument("--value", required=True, help="step-1 value dump")
    p_reach.add_argument("--out", default="out_reach")
    p_reach.set_defaults(func=cmd_reach)

    p_verify = sub.add_parser("verify", help="run an oracle suite")
    p_verify.add_argument("which", choices=sorted(SUITES) + ["all"])
    p_verify.set_defaults(func=cmd_verify)

    p_repro = sub.add_parser("repro", help="reproduce a reference figure pipeline")
    p_repro.add_argument("figure", choices=sorted(PRESET_FIGURES))
    p_repro.add_argument("--scenario", default=None, help="override the shipped preset")
    p_repro.add_argument("--out", default="out_repro")
    p_repro.add_argument("--seed", type=int, default=None)
    p_repro.add_argument("--threads", type=int, default=1)
    p_repro.set_defaults(func=cmd_repro)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as err:
        print(f"divergence error: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except InstabilityError as err:
        print(f"instability error: {err}", file=sys.stderr)
        return EXIT_UNSTABLE


if __name__ == "__main__":
    sys.exit(main())

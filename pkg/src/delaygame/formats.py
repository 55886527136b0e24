"""On-disk formats: trajectory/report CSVs, the value-function dump, run
manifests, and gnuplot scripts for offline figure rendering."""

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .hji import Axis, Grid, ValueFunction


def _fmt(x):
    return repr(float(x))


def write_trajectory_csv(path, traj, phase_fn=None):
    """Rows t,e_p,e_v,d,u followed by the raw pair state; optional phase
    column computed from t."""
    header = "t,e_p,e_v,d,u,v1,p1,v2,p2"
    if phase_fn is not None:
        header += ",phase"
    lines = [header]
    e_p, e_v, u_e, d = traj.e_p, traj.e_v, traj.u_e, traj.d
    for i, t in enumerate(traj.times):
        row = [t, e_p[i], e_v[i], d[i], u_e[i], *traj.states[i]]
        text = ",".join(_fmt(v) for v in row)
        if phase_fn is not None:
            text += f",{phase_fn(t)}"
        lines.append(text)
    Path(path).write_text("\n".join(lines) + "\n")


def write_residuals_csv(path, record):
    lines = ["t,d,w_norm"]
    for t, d, w in zip(record.times, record.d_values, record.w_norms):
        lines.append(f"{_fmt(t)},{_fmt(d)},{_fmt(w)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_sweep_csv(path, entries):
    lines = ["k,b,Tstar,lk_lhs,lk_rhs,lk_ok,class,envelope_ratio"]
    for e in entries:
        lines.append(
            ",".join(
                [
                    _fmt(e.k),
                    _fmt(e.b),
                    _fmt(e.T_star),
                    _fmt(e.lk.lhs),
                    _fmt(e.lk.rhs),
                    str(int(e.lk.satisfied)),
                    e.stability.klass,
                    _fmt(e.stability.envelope_ratio),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_sandwich_csv(path, report):
    lines = ["sample,J_true,V_upper,margin"]
    for s in report.samples:
        lines.append(f"{s.index},{_fmt(s.J_true)},{_fmt(s.V_upper)},{_fmt(s.margin)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_value_dump(path, vf):
    """One text header line, then the row-major float64 node values."""
    axes = ",".join(ax.name for ax in vf.grid.axes)
    counts = ",".join(str(ax.count) for ax in vf.grid.axes)
    mins = ",".join(_fmt(ax.lo) for ax in vf.grid.axes)
    maxs = ",".join(_fmt(ax.hi) for ax in vf.grid.axes)
    header = f"axes: {axes}; counts: {counts}; mins: {mins}; maxs: {maxs}; time: {_fmt(vf.time)}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(vf.values, dtype="<f8").tobytes())


def read_value_dump(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        payload = fh.read()
    fields = {}
    for part in header.split(";"):
        key, _, val = part.strip().partition(":")
        fields[key.strip()] = val.strip()
    try:
        names = fields["axes"].split(",")
        counts = [int(c) for c in fields["counts"].split(",")]
        mins = [float(v) for v in fields["mins"].split(",")]
        maxs = [float(v) for v in fields["maxs"].split(",")]
        time = float(fields["time"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed value dump header: {header!r}") from exc
    grid = Grid(axes=tuple(Axis(n, lo, hi, c) for n, lo, hi, c in zip(names, mins, maxs, counts)))
    values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).copy()
    return ValueFunction(grid=grid, values=values, time=time)


def write_slice_csv(path, vf, d_index, threshold=None):
    """Long-format dump of one 2-D slice at a fixed delay node; with a
    threshold, adds the sublevel-set membership column."""
    ep, ev = vf.grid.axes[0].coords, vf.grid.axes[1].coords
    header = "e_p,e_v,value" + (",safe" if threshold is not None else "")
    lines = [header]
    for i, p in enumerate(ep):
        for j, v in enumerate(ev):
            val = vf.values[i, j, d_index]
            row = f"{_fmt(p)},{_fmt(v)},{_fmt(val)}"
            if threshold is not None:
                row += f",{int(val <= threshold)}"
            lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")


def git_blob_sha1(data):
    if isinstance(data, str):
        data = data.encode()
    h = hashlib.sha1()
    h.update(b"blob %d\x00" % len(data))
    h.update(data)
    return h.hexdigest()


def write_manifest(out_dir, scenario_echo, extra=None):
    """Machine-readable run record: scenario echo plus content hashes of
    every file in the output directory."""
    out_dir = Path(out_dir)
    outputs = {}
    for p in sorted(out_dir.iterdir()):
        if p.name == "manifest.json" or p.is_dir():
            continue
        outputs[p.name] = git_blob_sha1(p.read_bytes())
    doc = {"scenario": scenario_echo, "outputs": outputs}
    if extra:
        doc.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def write_gnuplot_script(path, title, csv_name, columns, ylabel, extra_lines=()):
    """Minimal gnuplot program plotting named columns of one CSV."""
    lines = [
        "set datafile separator ','",
        f"set title '{title}'",
        "set xlabel 't [s]'",
        f"set ylabel '{ylabel}'",
        "set key autotitle columnhead",
        "set grid",
    ]
    lines.extend(extra_lines)
    plots = ", ".join(f"'{csv_name}' using 1:{c} with lines" for c in columns)
    lines.append(f"plot {plots}")
    Path(path).write_text("\n".join(lines) + "\n")

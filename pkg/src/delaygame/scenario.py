"""Scenario files: flat INI key-value configs driving the experiment CLI."""

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .delays import DelaySignal
from .errors import ConfigError
from .hji import DEFAULT_CFL, DEFAULT_W_RATE_MAX, ErrorGameHamiltonian, Grid
from .models import DoubleIntegratorPair

PRESET_FIGURES = ("fig2", "fig3", "fig4", "fig5")


@dataclass
class Scenario:
    """Typed view of a scenario file with builders for the library objects."""

    k: float = 1.0
    b: float = 0.15
    u_max: float = 1.0
    L_w: float = 5.0

    delay_kind: str = "constant"
    d_max: float = 0.25
    omega: float = 0.5
    phi: float = 0.0
    delay_t_on: float = 0.0

    ep_min: float = -2.4
    ep_max: float = 2.4
    ep_count: int = 101
    ev_min: float = -5.0
    ev_max: float = 5.0
    ev_count: int = 101
    d_count: int = 21

    solve_horizon: float = 10.0
    cfl: float = DEFAULT_CFL
    w_rate_max: float = DEFAULT_W_RATE_MAX
    include_w: bool = True
    slice_stride: int = 0

    run_horizon: float = 60.0
    dt: float = 0.005
    dt_ctrl: float = 0.05
    x0_ep: float = 1.0
    x0_ev: float = 0.0
    control_t_on: float = 0.0
    seed: int = 0

    extras: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def build_model(self):
        return DoubleIntegratorPair(k=self.k, b=self.b, u_max=self.u_max)

    def build_delay(self):
        return DelaySignal(
            kind=self.delay_kind,
            d_max=self.d_max,
            omega=self.omega,
            phi=self.phi,
            t_on=self.delay_t_on,
        )

    def build_grid(self):
        return Grid.for_error_game(
            self.d_max,
            ep=(self.ep_min, self.ep_max, self.ep_count),
            ev=(self.ev_min, self.ev_max, self.ev_count),
            d_count=self.d_count,
        )

    def build_spec(self):
        return ErrorGameHamiltonian(
            k=self.k,
            b=self.b,
            u_max=self.u_max,
            d_max=self.d_max,
            L_w=self.L_w,
            w_rate_max=self.w_rate_max,
            include_w=self.include_w,
        )

    def echo(self):
        """Flat dict of every setting, for the run manifest."""
        out = {
            "source": self.source,
            "model.k": self.k,
            "model.b": self.b,
            "model.u_max": self.u_max,
            "model.L_w": self.L_w,
            "delay.kind": self.delay_kind,
            "delay.T_star": self.d_max,
            "delay.omega": self.omega,
            "delay.phi": self.phi,
            "delay.t_on": self.delay_t_on,
            "grid.ep": [self.ep_min, self.ep_max, self.ep_count],
            "grid.ev": [self.ev_min, self.ev_max, self.ev_count],
            "grid.d_count": self.d_count,
            "solve.horizon": self.solve_horizon,
            "solve.cfl": self.cfl,
            "solve.w_rate_max": self.w_rate_max,
            "solve.include_w": self.include_w,
            "solve.slice_stride": self.slice_stride,
            "run.horizon": self.run_horizon,
            "run.dt": self.dt,
            "run.dt_ctrl": self.dt_ctrl,
            "run.x0_ep": self.x0_ep,
            "run.x0_ev": self.x0_ev,
            "run.control_t_on": self.control_t_on,
            "run.seed": self.seed,
        }
        for sect, items in self.extras.items():
            for key, val in items.items():
                out[f"{sect}.{key}"] = val
        return out


_SCHEMA = {
    "model": {"k": float, "b": float, "u_max": float, "L_w": float},
    "delay": {
        "kind": str,
        "T_star": ("d_max", float),
        "omega": float,
        "phi": float,
        "t_on": ("delay_t_on", float),
    },
    "grid": {
        "ep_min": float,
        "ep_max": float,
        "ep_count": int,
        "ev_min": float,
        "ev_max": float,
        "ev_count": int,
        "d_count": int,
    },
    "solve": {
        "horizon": ("solve_horizon", float),
        "cfl": float,
        "w_rate_max": float,
        "include_w": ("include_w", lambda s: s.strip().lower() in ("1", "true", "yes")),
        "slice_stride": int,
    },
    "run": {
        "horizon": ("run_horizon", float),
        "dt": float,
        "dt_ctrl": float,
        "x0_ep": float,
        "x0_ev": float,
        "control_t_on": float,
        "seed": int,
    },
}


def load_scenario(path_or_text, source=None):
    """Parse a scenario INI file (or raw text) into a Scenario."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if isinstance(path_or_text, (str, Path)) and "\n" not in str(path_or_text):
        path = Path(path_or_text)
        if not path.exists():
            raise ConfigError(f"scenario file not found: {path}")
        parser.read(path)
        source = source or str(path)
    else:
        parser.read_string(str(path_or_text))
        source = source or "<inline>"

    sc = Scenario(source=source)
    for sect in parser.sections():
        schema = _SCHEMA.get(sect)
        if schema is None:
            sc.extras[sect] = dict(parser.items(sect))
            continue
        for key, raw in parser.items(sect):
            rule = schema.get(key)
            if rule is None:
                raise ConfigError(f"unknown key [{sect}] {key} in {source}")
            if isinstance(rule, tuple):
                attr, conv = rule
            else:
                attr, conv = key, rule
            try:
                setattr(sc, attr, conv(raw))
            except ValueError as exc:
                raise ConfigError(f"bad value for [{sect}] {key}: {raw!r}") from exc
    _validate(sc)
    return sc


def _validate(sc):
    if sc.d_max < 0 or sc.dt <= 0 or sc.run_horizon <= 0 or sc.solve_horizon <= 0:
        raise ConfigError("delays must be nonnegative and horizons/steps positive")
    if sc.delay_kind not in ("constant", "sinusoidal", "piecewise_constant"):
        raise ConfigError(f"scenario delay kind {sc.delay_kind!r} not supported")
    nodes = sc.ep_count * sc.ev_count * sc.d_count
    if nodes > 10**7:
        import warnings

        warnings.warn(f"grid has {nodes} nodes; expect a long solve", RuntimeWarning)


def load_preset(figure):
    """Shipped scenario for one of the reproduced figures."""
    if figure not in PRESET_FIGURES:
        raise ConfigError(f"no preset for {figure!r}; choose from {PRESET_FIGURES}")
    text = resources.files("delaygame.presets").joinpath(f"{figure}.ini").read_text()
    return load_scenario(text, source=f"preset:{figure}")


def parse_floats(text):
    return [float(tok) for tok in str(text).replace(",", " ").split()]

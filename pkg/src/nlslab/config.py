"""Experiment configuration documents.

A config is an INI file with sections ``experiment``, ``grid``, ``solver``,
``initial`` and ``params``.  Unknown sections or keys are rejected, and every
error names the offending ``section.key``.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .data import KINDS, InitialSpec
from .errors import ConfigError
from .solver import SolverConfig
from .spectral import Grid

EXPERIMENTS = ("thm1_2d", "thm2_1d_deriv", "thm2_1d_p3", "l4l8_2d", "monotonicity",
               "scattering", "i_energy", "scale_invariance")

_DIMENSION = {"thm1_2d": 2, "l4l8_2d": 2, "scattering": 2, "i_energy": 2,
              "thm2_1d_deriv": 1, "thm2_1d_p3": 1, "scale_invariance": 1}


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    vals = tuple(int(v) for v in text.replace(",", " ").split())
    if not vals:
        raise ValueError("empty list")
    return vals


_GRID_KEYS: dict[str, Callable[[str], Any]] = {"n": int, "L": float, "M": int}
_SOLVER_KEYS: dict[str, Callable[[str], Any]] = {"p": float, "dt": float, "T": float, "dt_out": float,
                                                 "coupling": float}
_INITIAL_KEYS: dict[str, Callable[[str], Any]] = {"kind": str, "amplitude": float, "width": float,
                                                  "velocity": float, "center": float, "seed": int,
                                                  "kmax": float, "separation": float, "decay": float,
                                                  "modes": int}
# experiment parameters: (parser, default)
_PARAM_KEYS: dict[str, tuple[Callable[[str], Any], Any]] = {
    "rule": (str, "trapezoid"),
    "linear_control": (_bool, False),
    "r0": (float, 1.0),
    "eps": (float, 0.5),
    "N": (_int_list, (8, 16, 32, 64)),
    "s": (float, 0.9),
    "lam": (float, 2.0),
    "strict": (_bool, True),
}

SECTIONS = {"experiment": {"name": str}, "grid": _GRID_KEYS, "solver": _SOLVER_KEYS,
            "initial": _INITIAL_KEYS, "params": {k: v[0] for k, v in _PARAM_KEYS.items()}}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    grid: Grid
    solver: SolverConfig
    initial: InitialSpec = field(default_factory=InitialSpec)
    params: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(sorted(dict(self.params).items())))
        validate(self)

    def param(self, key: str):
        return dict(self.params).get(key, _PARAM_KEYS[key][1])

    def with_updates(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def echo(self) -> dict:
        """Plain-data view of the config for reports."""
        return {
            "experiment": self.experiment,
            "grid": {"n": self.grid.n, "L": self.grid.L, "M": self.grid.M},
            "solver": {"p": self.solver.p, "dt": self.solver.dt, "T": self.solver.T,
                       "dt_out": self.solver.dt_out, "coupling": self.solver.coupling},
            "initial": self.initial.as_dict(),
            "params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.params},
        }


def validate(cfg: ExperimentConfig) -> None:
    e = cfg.experiment
    if e not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {e!r}", key="experiment.name")
    need = _DIMENSION.get(e)
    if need is not None and cfg.grid.n != need:
        raise ConfigError(f"{e} needs a {need}D grid", key="grid.n")
    if cfg.param("rule") not in ("trapezoid", "simpson"):
        raise ConfigError("rule must be trapezoid or simpson", key="params.rule")
    if e == "i_energy":
        p = cfg.solver.p
        k = (p - 1) / 2
        if not (k == int(k) and k >= 2):
            raise ConfigError("i_energy needs p = 2k+1 with integer k >= 2", key="solver.p")
        s = cfg.param("s")
        s_k = 1 - 1 / (4 * k - 3)
        if not s_k < s < 1:
            raise ConfigError(f"s must lie in ({s_k:.6g}, 1)", key="params.s")
        for N in cfg.param("N"):
            if N < 2 or N & (N - 1):
                raise ConfigError(f"N={N} is not dyadic", key="params.N")
    if e == "monotonicity":
        if cfg.grid.n == 2 and not cfg.param("r0") > 0:
            raise ConfigError("r0 must be positive", key="params.r0")
        if cfg.grid.n == 1 and cfg.param("eps") < 2 * cfg.grid.h:
            raise ConfigError("eps must be at least twice the grid spacing", key="params.eps")
    if e == "scale_invariance" and not cfg.param("lam") > 0:
        raise ConfigError("lam must be positive", key="params.lam")


# -- text <-> config -------------------------------------------------------------


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (L, M, T, N)
    return cp


def read_sections(text: str) -> dict[str, dict[str, str]]:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}", key="<document>") from exc
    return {s: dict(cp[s]) for s in cp.sections()}


def canonical_text(sections: dict[str, dict[str, str]]) -> str:
    """Sorted ``section.key = value`` lines with whitespace collapsed."""
    lines = []
    for sec in sorted(sections):
        for key in sorted(sections[sec]):
            lines.append(f"{sec}.{key} = {' '.join(str(sections[sec][key]).split())}")
    return "\n".join(lines) + "\n"


def config_hash(sections: dict[str, dict[str, str]]) -> str:
    return hashlib.sha256(canonical_text(sections).encode()).hexdigest()


def _convert(sec: str, key: str, text: str):
    table = SECTIONS.get(sec)
    if table is None:
        raise ConfigError(f"unknown section [{sec}]", key=sec)
    if key not in table:
        raise ConfigError(f"unknown key {key!r} in [{sec}]", key=f"{sec}.{key}")
    try:
        val = table[key](text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value {text!r}: {exc}", key=f"{sec}.{key}") from exc
    if isinstance(val, float) and not np.isfinite(val):
        raise ConfigError(f"non-finite value {text!r}", key=f"{sec}.{key}")
    return val


def from_sections(sections: dict[str, dict[str, str]]) -> ExperimentConfig:
    parsed = {sec: {k: _convert(sec, k, v) for k, v in items.items()} for sec, items in sections.items()}
    for sec, req in (("experiment", ("name",)), ("grid", ("n", "L", "M")), ("solver", ("p", "dt", "T"))):
        for key in req:
            if key not in parsed.get(sec, {}):
                raise ConfigError(f"missing required key {key!r}", key=f"{sec}.{key}")
    g = parsed["grid"]
    try:
        grid = Grid(g["n"], g["L"], g["M"])
    except ValueError as exc:
        msg = str(exc)
        bad = "grid.n" if "dimension" in msg else "grid.L" if "box length" in msg else "grid.M"
        raise ConfigError(str(exc), key=bad) from exc
    try:
        solver = SolverConfig(**parsed["solver"])
    except ValueError as exc:
        msg = str(exc)
        key = "solver.p" if "exponent" in msg else "solver.dt_out" if "dt_out" in msg else "solver.dt"
        raise ConfigError(msg, key=key) from exc
    init = parsed.get("initial", {})
    if "kind" in init and init["kind"] not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}", key="initial.kind")
    try:
        initial = InitialSpec(**init)
    except ValueError as exc:
        raise ConfigError(str(exc), key="initial.modes" if "modes" in str(exc) else "initial.width") from exc
    return ExperimentConfig(parsed["experiment"]["name"], grid, solver, initial,
                            tuple(parsed.get("params", {}).items()))


def parse_config(text: str) -> ExperimentConfig:
    return from_sections(read_sections(text))


def resolve_key(sections: dict[str, dict[str, str]], name: str) -> tuple[str, str]:
    """Map ``key`` or ``section.key`` to a (section, key) pair."""
    if "." in name:
        sec, key = name.split(".", 1)
        if sec not in SECTIONS or key not in SECTIONS[sec]:
            raise ConfigError(f"unknown parameter {name!r}", key=name)
        return sec, key
    hits = [sec for sec, keys in SECTIONS.items() if name in keys]
    if len(hits) != 1:
        raise ConfigError(f"parameter {name!r} is unknown or ambiguous", key=name)
    return hits[0], name


def with_override(sections: dict[str, dict[str, str]], name: str, value: str) -> dict[str, dict[str, str]]:
    sec, key = resolve_key(sections, name)
    out = {s: dict(v) for s, v in sections.items()}
    out.setdefault(sec, {})[key] = value
    return out


def to_text(sections: dict[str, dict[str, str]]) -> str:
    cp = _parser()
    for sec in sorted(sections):
        cp[sec] = {k: str(v) for k, v in sorted(sections[sec].items())}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()

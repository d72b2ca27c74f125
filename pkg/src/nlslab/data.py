"""Menu of initial data: Gaussian bumps, two-bump collisions and seeded random fields."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .spectral import Field, Grid, band_limited_field

KINDS = ("gaussian", "two_bump", "random", "zero")


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0
    velocity: float = 0.0  # along the first axis, in radians per length
    center: float = 0.0  # offset along the first axis
    seed: int = 0
    kmax: float = 1.0  # random fields: frequency cutoff, cycles per length
    separation: float = 4.0  # two_bump: distance between centers
    decay: float = 0.0  # random fields: mode amplitudes fall off like (1 + |xi|)^-decay
    modes: int = 64  # random fields: number of plane waves

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown initial-data kind {self.kind!r}")
        if not self.width > 0:
            raise ValueError("width must be positive")
        if self.modes < 1:
            raise ValueError("modes must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


def _bump(grid: Grid, c: float, w: float, v: float) -> np.ndarray:
    x = grid.coords
    r2 = (x[0] - c) ** 2 + sum(xi**2 for xi in x[1:])
    return np.exp(-r2 / w**2 + 1j * v * x[0])


def build(spec: InitialSpec, grid: Grid) -> Field:
    """Sample the initial datum described by ``spec`` on ``grid``."""
    A = spec.amplitude
    if spec.kind == "zero":
        return Field.zeros(grid)
    if spec.kind == "gaussian":
        vals = _bump(grid, spec.center, spec.width, spec.velocity)
    elif spec.kind == "two_bump":
        half = spec.separation / 2
        # left bump moves right, right bump moves left for positive velocity
        vals = (_bump(grid, spec.center - half, spec.width, spec.velocity)
                + _bump(grid, spec.center + half, spec.width, -spec.velocity))
    else:
        vals = band_limited_field(grid, spec.seed, spec.kmax, envelope=spec.width,
                                  n_modes=spec.modes, decay=spec.decay).values
        vals = vals / np.max(np.abs(vals))
    return Field(grid, A * vals)

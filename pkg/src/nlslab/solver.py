"""Strang split-step integration of ``i u_t + Lap u = |u|^(p-1) u`` and its invariants."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalBlowup, TruncationBreach
from .spectral import (
    Field,
    Grid,
    free_propagate,
    gradient_array,
    physical_frequency,
    propagator_symbol,
    read_field,
    write_field,
)

log = logging.getLogger(__name__)

GUARD_THRESHOLD = 1e-6
BLOWUP_FACTOR = 10.0


@dataclass(frozen=True)
class SolverConfig:
    p: float
    dt: float
    T: float
    dt_out: float | None = None
    coupling: float = 1.0  # 0 switches the nonlinearity off (linear-flow control runs)

    def __post_init__(self):
        if self.dt_out is None:
            object.__setattr__(self, "dt_out", 10 * self.dt)
        if not self.p > 1:
            raise ValueError(f"nonlinearity exponent must exceed 1, got {self.p}")
        if not (0 < abs(self.dt) <= abs(self.dt_out) <= abs(self.T)):
            raise ValueError("need 0 < |dt| <= |dt_out| <= |T|")
        if np.sign(self.dt) != np.sign(self.dt_out) or np.sign(self.dt) != np.sign(self.T):
            raise ValueError("dt, dt_out and T must share a sign")
        for name, ratio in (("dt_out/dt", self.dt_out / self.dt), ("T/dt_out", self.T / self.dt_out)):
            if abs(ratio - round(ratio)) > 1e-9 * ratio:
                raise ValueError(f"{name} must be an integer, got {ratio}")

    @property
    def substeps(self) -> int:
        return int(round(self.dt_out / self.dt))

    @property
    def n_snapshots(self) -> int:
        return int(round(self.T / self.dt_out)) + 1

    def reversed(self) -> "SolverConfig":
        return SolverConfig(self.p, -self.dt, -self.T, -self.dt_out, self.coupling)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    fields: tuple[Field, ...]
    config: SolverConfig
    grid: Grid
    guard: tuple[float, ...] = field(default=())
    breach_time: float | None = None  # set when a guard breach ended the run early

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        t.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "fields", tuple(self.fields))
        if len(t) != len(self.fields):
            raise ValueError("times and fields differ in length")
        if len(t) > 1 and not np.all(np.diff(t) * np.sign(t[-1] - t[0]) > 0):
            raise ValueError("snapshot times must be strictly monotone")

    def __len__(self):
        return len(self.fields)

    def __iter__(self):
        return iter(zip(self.times, self.fields))

    @property
    def final(self) -> Field:
        return self.fields[-1]

    def save(self, directory) -> None:
        """Write one binary field file per snapshot plus ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = []
        for i, f in enumerate(self.fields):
            name = f"snap_{i:05d}.bin"
            write_field(f, directory / name)
            names.append(name)
        manifest = {
            "grid": {"n": self.grid.n, "L": self.grid.L, "M": self.grid.M},
            "config": asdict(self.config),
            "snapshots": [{"index": i, "t": float(t), "file": nm} for i, (t, nm) in enumerate(zip(self.times, names))],
            "guard": {"outer_mass_fraction": list(map(float, self.guard)),
                      "max": float(max(self.guard)) if self.guard else None,
                      "threshold": GUARD_THRESHOLD},
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))

    @classmethod
    def load(cls, directory) -> "Trajectory":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        g = manifest["grid"]
        grid = Grid(g["n"], g["L"], g["M"])
        snaps = manifest["snapshots"]
        fields = [read_field(directory / s["file"]) for s in snaps]
        return cls(np.array([s["t"] for s in snaps]), fields, SolverConfig(**manifest["config"]), grid,
                   tuple(manifest["guard"]["outer_mass_fraction"]))


# -- conserved quantities -----------------------------------------------------


def mass(f: Field) -> float:
    return float(f.grid.cell_volume * np.sum(f.density))


def kinetic(f: Field) -> float:
    """``||grad f||_{L^2}^2`` computed on the frequency side."""
    g = f.grid
    k2 = physical_frequency(g.xi_abs) ** 2
    fhat = np.fft.fftn(f.values) * g.cell_volume
    return float(np.sum(k2 * np.abs(fhat) ** 2) / g.L**g.n)


def potential(f: Field, p: float) -> float:
    return float(f.grid.cell_volume * np.sum(np.abs(f.values) ** (p + 1)) / (p + 1))


def energy(f: Field, p: float) -> float:
    return 0.5 * kinetic(f) + potential(f, p)


def momentum(f: Field) -> np.ndarray:
    grads = gradient_array(f.values, f.grid)
    return np.array([f.grid.cell_volume * np.sum(np.imag(np.conj(f.values) * d)) for d in grads])


def outer_mass_fraction(f: Field) -> float:
    total = np.sum(f.density)
    if total == 0:
        return 0.0
    return float(np.sum(f.density[f.grid.outer_mask]) / total)


# -- stepping -----------------------------------------------------------------


def nonlinear_phase(f: Field, p: float, dt: float, coupling: float = 1.0) -> Field:
    """Exact flow of ``i u_t = |u|^(p-1) u`` over ``dt``; preserves ``|u|``."""
    v = f.values
    return Field(f.grid, v * np.exp(-1j * coupling * dt * np.abs(v) ** (p - 1)))


def strang_step(f: Field, cfg: SolverConfig) -> Field:
    half = free_propagate(f, cfg.dt / 2)
    mid = nonlinear_phase(half, cfg.p, cfg.dt, cfg.coupling)
    out = free_propagate(mid, cfg.dt / 2)
    if not np.all(np.isfinite(out.values)):
        raise NumericalBlowup("non-finite values after step")
    return out


def _advance(v: np.ndarray, half: np.ndarray, steps: int, cfg: SolverConfig) -> np.ndarray:
    """``steps`` Strang steps with adjacent half free flows fused."""
    fft, ifft = np.fft.fftn, np.fft.ifftn
    q = 0.5 * (cfg.p - 1)
    full = half * half
    v = ifft(half * fft(v))
    for i in range(steps):
        if cfg.coupling:
            a2 = v.real**2 + v.imag**2
            v = v * np.exp(-1j * cfg.coupling * cfg.dt * a2**q)
        v = ifft((full if i < steps - 1 else half) * fft(v))
    return v


def evolve(f0: Field, cfg: SolverConfig, check_guard: bool = True, truncate: bool = False) -> Trajectory:
    """Integrate from ``t = 0`` to ``cfg.T`` keeping a snapshot every ``dt_out``.

    Raises :class:`TruncationBreach` when more than ``GUARD_THRESHOLD`` of the
    mass sits in the outer annulus and :class:`NumericalBlowup` on non-finite
    values or sup-norm growth beyond ``BLOWUP_FACTOR``.  With ``truncate=True``
    a mid-run breach instead ends the trajectory at the last valid snapshot.
    """
    grid = f0.grid
    half = propagator_symbol(grid, cfg.dt / 2)
    sup0 = float(np.max(np.abs(f0.values)))
    guard0 = outer_mass_fraction(f0)
    if check_guard and guard0 >= GUARD_THRESHOLD:
        raise TruncationBreach(f"initial data violates truncation guard ({guard0:.3g})", t=0.0)
    times, fields, guard = [0.0], [f0], [guard0]
    v = np.array(f0.values)
    for i in range(1, cfg.n_snapshots):
        t = i * cfg.dt_out
        v = _advance(v, half, cfg.substeps, cfg)
        if not np.all(np.isfinite(v)):
            raise NumericalBlowup("non-finite values", t=t)
        sup = float(np.max(np.abs(v)))
        if sup0 > 0 and sup > BLOWUP_FACTOR * sup0:
            raise NumericalBlowup(f"sup norm grew to {sup:.3g} (initial {sup0:.3g})", t=t)
        snap = Field(grid, v)
        frac = outer_mass_fraction(snap)
        if check_guard and frac >= GUARD_THRESHOLD:
            if truncate:
                log.info("guard breach at t=%g ends the usable window", t)
                return Trajectory(np.array(times), fields, cfg, grid, tuple(guard), breach_time=t)
            raise TruncationBreach(f"outer-annulus mass fraction {frac:.3g} at t={t:g}", t=t)
        times.append(t)
        fields.append(snap)
        guard.append(frac)
    return Trajectory(np.array(times), fields, cfg, grid, tuple(guard))


# -- scaling ------------------------------------------------------------------


def critical_index(n: int, p: float) -> float:
    return n / 2 - 2 / (p - 1)


def spectral_tail_fraction(f: Field) -> float:
    """Fraction of spectral mass beyond half the Nyquist frequency on any axis."""
    g = f.grid
    power = np.abs(np.fft.fftn(f.values)) ** 2
    total = power.sum()
    if total == 0:
        return 0.0
    mask = np.zeros(g.shape, dtype=bool)
    for x in g.xi:
        mask |= np.abs(x) > g.nyquist / 2
    return float(power[mask].sum() / total)


def rescale(f: Field, lam: float, p: float) -> tuple[Field, Grid]:
    """``lam^(-2/(p-1)) u(x/lam)`` sampled on the box scaled by ``lam``.

    Grid points map onto grid points, so the samples are exactly rescaled.
    """
    if not lam > 0:
        raise ValueError("scaling factor must be positive")
    grid = f.grid.scaled(lam)
    if spectral_tail_fraction(f) > 1e-8:
        warnings.warn("rescaled data is under-resolved: spectral tail mass exceeds 1e-8", RuntimeWarning)
    return Field(grid, lam ** (-2.0 / (p - 1)) * f.values), grid


def rescale_config(cfg: SolverConfig, lam: float) -> SolverConfig:
    s = lam * lam
    return SolverConfig(cfg.p, cfg.dt * s, cfg.T * s, cfg.dt_out * s, cfg.coupling)

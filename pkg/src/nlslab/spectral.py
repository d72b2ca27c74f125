"""Periodic grids, the discrete Fourier contract and multiplier calculus.

Frequencies are stored in cycles per unit length, so a symbol written in the
``exp(-2 pi i x.xi)`` convention can be used verbatim.  Every derivative-type
symbol goes through :func:`physical_frequency`, which makes ``-Laplacian``
correspond to ``(2 pi |xi|)**2`` exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import GridError

TWO_PI = 2.0 * np.pi


def physical_frequency(xi):
    """Angular frequency for a frequency given in cycles per length."""
    return TWO_PI * np.asarray(xi)


@dataclass(frozen=True)
class Grid:
    """Periodic box ``[-L/2, L/2)^n`` sampled with ``M`` points per axis."""

    n: int
    L: float
    M: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {self.n}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise GridError(f"box length must be positive, got {self.L}")
        M = int(self.M)
        if M != self.M or M < 8 or M & (M - 1):
            raise GridError(f"points per axis must be a power of two >= 8, got {self.M}")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return self.L / self.M

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.n

    @property
    def size(self) -> int:
        return self.M**self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @property
    def nyquist(self) -> float:
        """Largest per-axis frequency magnitude, in cycles per length."""
        return self.M / (2.0 * self.L)

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L / 2 + self.h * np.arange(self.M)

    @cached_property
    def axis_frequencies(self) -> np.ndarray:
        return np.fft.fftfreq(self.M, d=self.h)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.n), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords))

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis_frequencies] * self.n), indexing="ij"))

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(sum(x * x for x in self.xi))

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for x in self.xi:
            mask |= np.isclose(np.abs(x), self.nyquist) & (x < 0)
        return mask

    @cached_property
    def outer_mask(self) -> np.ndarray:
        """Points outside the central cube of side 0.75 L (the guard annulus)."""
        mask = np.zeros(self.shape, dtype=bool)
        for c in self.coords:
            mask |= np.abs(c) > 0.375 * self.L
        return mask

    @cached_property
    def _phase(self) -> np.ndarray:
        # forward transform is referenced to x = 0 rather than the first sample
        x0 = -self.L / 2
        return np.exp(-1j * TWO_PI * x0 * sum(self.xi))

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.n, self.L, self.M * factor)

    def scaled(self, lam: float) -> "Grid":
        return Grid(self.n, self.L * lam, self.M)


def make_grid(n: int, L: float, M: int) -> Grid:
    return Grid(n, L, M)


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of ``u(., t)`` on a grid.  The value array is read-only."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128)
        if v.size != self.grid.size:
            raise GridError(f"expected {self.grid.size} values, got {v.size}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise GridError("field contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., np.ndarray]) -> "Field":
        return cls(grid, func(*grid.coords))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    @property
    def density(self) -> np.ndarray:
        """``|u|^2`` on the grid."""
        return np.abs(self.values) ** 2


def forward(f: Field) -> np.ndarray:
    """Approximation of the continuous transform ``f^(xi)`` on the frequency lattice."""
    g = f.grid
    return np.fft.fftn(f.values) * g.cell_volume * g._phase


def inverse(grid: Grid, fhat: np.ndarray) -> Field:
    return Field(grid, np.fft.ifftn(fhat / grid._phase) / grid.cell_volume)


def frequency_l2_norm(f: Field) -> float:
    """``||f^||_{L^2}`` with the lattice measure ``(1/L)^n``."""
    fhat = forward(f)
    return float(np.sqrt(np.sum(np.abs(fhat) ** 2) / f.grid.L**f.grid.n))


@dataclass(frozen=True)
class Multiplier:
    """A Fourier multiplier; ``symbol`` receives the tuple of frequency components.

    Symbols marked ``odd`` (anything depending on the sign of a frequency
    component) are zeroed on Nyquist modes.
    """

    symbol: Callable[[tuple[np.ndarray, ...]], np.ndarray]
    label: str = ""
    odd: bool = False

    @classmethod
    def radial(cls, func: Callable[[np.ndarray], np.ndarray], label: str = "") -> "Multiplier":
        return cls(lambda xi: func(np.sqrt(sum(x * x for x in xi))), label)

    def on(self, grid: Grid) -> np.ndarray:
        sym = np.broadcast_to(np.asarray(self.symbol(grid.xi), dtype=np.complex128), grid.shape).copy()
        if not np.all(np.isfinite(sym)):
            raise GridError(f"multiplier {self.label!r} is not finite on the lattice")
        if self.odd:
            sym[grid.nyquist_mask] = 0.0
        return sym


def apply_multiplier(f: Field, m: Multiplier) -> Field:
    return Field(f.grid, np.fft.ifftn(m.on(f.grid) * np.fft.fftn(f.values)))


def _power_symbol(s: float):
    def symbol(xi):
        k = physical_frequency(np.sqrt(sum(x * x for x in xi)))
        out = np.zeros_like(k)
        nz = k > 0
        out[nz] = k[nz] ** s
        return out

    return symbol


def fractional_derivative(f: Field, s: float) -> Field:
    """``|nabla|^s f``; only non-negative orders are handled spectrally."""
    if s < 0:
        raise ValueError("negative orders are not computed spectrally")
    if s == 0:
        return Field(f.grid, f.values)
    return apply_multiplier(f, Multiplier(_power_symbol(s), f"|grad|^{s}"))


def gradient(f: Field) -> tuple[Field, ...]:
    out = []
    for j in range(f.grid.n):
        m = Multiplier(lambda xi, j=j: 1j * physical_frequency(xi[j]), f"d/dx{j}", odd=True)
        out.append(apply_multiplier(f, m))
    return tuple(out)


def gradient_array(values: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Spectral gradient of a raw (possibly real) array; real input stays real."""
    vhat = np.fft.fftn(values)
    out = []
    for j in range(grid.n):
        sym = 1j * physical_frequency(grid.xi[j])
        sym = np.where(grid.nyquist_mask, 0.0, sym)
        d = np.fft.ifftn(sym * vhat)
        out.append(d.real if np.isrealobj(values) else d)
    return out


def laplacian_array(values: np.ndarray, grid: Grid) -> np.ndarray:
    k2 = physical_frequency(grid.xi_abs) ** 2
    d = np.fft.ifftn(-k2 * np.fft.fftn(values))
    return d.real if np.isrealobj(values) else d


# -- Littlewood-Paley ---------------------------------------------------------


def _smooth_zero(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def lp_bump(r):
    """Smooth radial bump: 1 on ``|r| <= 1``, 0 on ``|r| >= 2``."""
    r = np.abs(np.asarray(r, dtype=float))
    a = _smooth_zero(2.0 - r)
    b = _smooth_zero(r - 1.0)
    return a / (a + b)


def lp_multiplier(N: float, kind: str = "leq") -> Multiplier:
    if kind == "leq":
        func = lambda r: lp_bump(r / N)
    elif kind == "gt":
        func = lambda r: 1.0 - lp_bump(r / N)
    elif kind == "band":
        func = lambda r: lp_bump(r / N) - lp_bump(2.0 * r / N)
    else:
        raise ValueError(f"unknown Littlewood-Paley kind {kind!r}")
    return Multiplier.radial(func, f"P_{kind}({N})")


def littlewood_paley(f: Field, N: float, kind: str = "leq") -> Field:
    if not N > 0:
        raise ValueError("N must be positive")
    return apply_multiplier(f, lp_multiplier(N, kind))


# -- I-operator ---------------------------------------------------------------


def i_symbol(r, N: float, s: float):
    """Radial profile ``m_N(|xi|)``.

    Between ``N`` and ``2N`` the log of the symbol is a cubic Hermite
    interpolant in ``log |xi|`` with end slopes 0 and ``s - 1``.
    """
    r = np.asarray(r, dtype=float)
    out = np.ones_like(r)
    high = r >= 2 * N
    out[high] = (r[high] / N) ** (s - 1.0)
    mid = (r > N) & ~high
    t = np.log(r[mid] / N) / np.log(2.0)
    out[mid] = np.exp((s - 1.0) * np.log(2.0) * (2.0 * t**2 - t**3))
    return out


def i_multiplier(N: float, s: float) -> Multiplier:
    if not (np.isfinite(N) and N > 1):
        raise ValueError(f"I-operator requires N > 1, got {N}")
    if not 0 < s < 1:
        raise ValueError(f"I-operator requires 0 < s < 1, got {s}")
    return Multiplier.radial(lambda r: i_symbol(r, N, s), f"I_{N}^{s}")


def i_operator(f: Field, N: float, s: float) -> Field:
    return apply_multiplier(f, i_multiplier(N, s))


# -- norms --------------------------------------------------------------------


def lebesgue_norm(f: Field | np.ndarray, r: float, grid: Grid | None = None) -> float:
    if r < 1:
        raise ValueError(f"Lebesgue exponent must be >= 1, got {r}")
    if isinstance(f, Field):
        grid, vals = f.grid, f.values
    else:
        vals = np.asarray(f)
    a = np.abs(vals)
    if np.isinf(r):
        return float(a.max())
    return float((grid.cell_volume * np.sum(a**r)) ** (1.0 / r))


def sobolev_norm(f: Field | np.ndarray, s: float, homogeneous: bool = True, grid: Grid | None = None) -> float:
    """``||f||_{H^s}`` via Plancherel.

    With ``homogeneous=True`` and ``s < 0`` the zero mode is dropped; that case
    is only used for diagnostics on mean-zero data.
    """
    if isinstance(f, Field):
        grid, vals = f.grid, f.values
    else:
        vals = np.asarray(f)
    k = physical_frequency(grid.xi_abs)
    if homogeneous:
        w = np.zeros_like(k)
        nz = k > 0
        w[nz] = k[nz] ** (2 * s)
        if s == 0:
            w[~nz] = 1.0
    else:
        w = (1.0 + k * k) ** s
    fhat = np.fft.fftn(vals) * grid.cell_volume
    return float(np.sqrt(np.sum(w * np.abs(fhat) ** 2) / grid.L**grid.n))


# -- free propagator ----------------------------------------------------------


def propagator_symbol(grid: Grid, t: float) -> np.ndarray:
    """Symbol of ``exp(i t Laplacian)`` on the lattice."""
    return np.exp(-1j * t * physical_frequency(grid.xi_abs) ** 2)


def free_propagate(f: Field, t: float) -> Field:
    if t == 0:
        return Field(f.grid, f.values)
    return Field(f.grid, np.fft.ifftn(propagator_symbol(f.grid, t) * np.fft.fftn(f.values)))


# -- serialization ------------------------------------------------------------

_HEADER = struct.Struct("<8sidi")
_MAGIC = b"NLSFLD01"


def write_field(f: Field, path, fmt: str = "bin") -> None:
    """Write header ``(n, L, M)`` followed by row-major interleaved re/im pairs."""
    path = Path(path)
    pairs = np.stack([f.values.real.ravel(), f.values.imag.ravel()], axis=1)
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, f.grid.n, f.grid.L, f.grid.M))
            fh.write(pairs.astype("<f8").tobytes())
    elif fmt == "csv":
        with open(path, "w") as fh:
            fh.write(f"{f.grid.n},{f.grid.L!r},{f.grid.M}\n")
            for re, im in pairs:
                fh.write(f"{re:.17g},{im:.17g}\n")
    else:
        raise ValueError(f"unknown field format {fmt!r}")


def read_field(path) -> Field:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] == _MAGIC:
        _, n, L, M = _HEADER.unpack_from(raw)
        pairs = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(-1, 2)
    else:
        lines = raw.decode().splitlines()
        n, L, M = lines[0].split(",")
        n, L, M = int(n), float(L), int(M)
        pairs = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln], dtype=float)
    grid = Grid(n, L, M)
    return Field(grid, (pairs[:, 0] + 1j * pairs[:, 1]).reshape(grid.shape))


def band_limited_field(grid: Grid, seed: int, kmax: float, envelope: float | None = None,
                       n_modes: int = 64, decay: float = 0.0) -> Field:
    """Seeded random sum of lattice plane waves with ``|xi| <= kmax``.

    Frequencies are multiples of ``1/L``, so the same seed gives the same
    periodic function on any grid of the same box whose Nyquist frequency
    exceeds ``kmax``.  An optional
    Gaussian envelope of width ``envelope`` localizes it inside the box.
    """
    rng = np.random.default_rng(seed)
    kint = int(np.floor(kmax * grid.L))
    freqs: list[Sequence[float]] = []
    while len(freqs) < n_modes:
        cand = rng.integers(-kint, kint + 1, size=grid.n) / grid.L
        if np.sqrt(np.sum(cand**2)) <= kmax:
            freqs.append(cand)
    freqs = np.array(freqs)
    mags = np.sqrt(np.sum(freqs**2, axis=1))
    amps = (rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes)) / (1.0 + mags) ** decay
    vals = np.zeros(grid.shape, dtype=complex)
    for a, q in zip(amps, freqs):
        vals += a * np.exp(1j * TWO_PI * sum(qj * cj for qj, cj in zip(q, grid.coords)))
    if envelope is not None:
        vals *= np.exp(-(grid.radius / envelope) ** 2)
    return Field(grid, vals / np.sqrt(n_modes))


def i_sandwich_constants(grid: Grid, N: float, s: float, n_fields: int = 50, seed: int = 0,
                         kmax: float | None = None, decay: float = 2.0) -> tuple[float, float]:
    """Empirical constants in ``||f||_{H^s} <= C1 ||If||_{H^1} <= C2 N^(1-s) ||f||_{H^s}``.

    ``C1`` is the largest ``||f||_{H^s} / ||If||_{H^1}`` and ``C2 / C1`` the
    largest ``||If||_{H^1} / (N^(1-s) ||f||_{H^s})`` over seeded random
    band-limited fields.  ``N`` enters the bound as the angular frequency
    ``2 pi N``, matching the derivative symbols.
    """
    kmax = kmax if kmax is not None else 0.45 * grid.nyquist
    lower, upper = 0.0, 0.0
    for k in range(n_fields):
        f = band_limited_field(grid, seed + k, kmax, n_modes=32, decay=decay)
        hs = sobolev_norm(f, s, homogeneous=False)
        ih1 = sobolev_norm(i_operator(f, N, s), 1.0, homogeneous=False)
        lower = max(lower, hs / ih1)
        upper = max(upper, ih1 / ((TWO_PI * N) ** (1 - s) * hs))
    return lower, lower * upper

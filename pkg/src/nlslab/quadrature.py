"""Pair sums over grid points, time quadrature and singular-kernel corrections."""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from .errors import BudgetExceeded

DIRECT_PAIR_CAP = 2**26

# Regularized lattice sum  sum'_{m in Z^2} |m|^-1 = 4 zeta(1/2) beta(1/2)
LATTICE_ZETA_HALF = -3.900264920001960


def displacement_lattice(grid) -> tuple[np.ndarray, ...]:
    """Displacements ``x1 - x2`` between grid points, shape ``(2M-1,)*n``."""
    ax = np.arange(-(grid.M - 1), grid.M) * grid.h
    return tuple(np.meshgrid(*([ax] * grid.n), indexing="ij"))


def linear_convolve(kernel: np.ndarray, values: np.ndarray, grid) -> np.ndarray:
    """``(K * f)(x1) = sum_{x2} K(x1 - x2) f(x2)`` without periodic wrap-around.

    ``kernel`` is sampled on :func:`displacement_lattice`; the cell volume is
    not included.
    """
    M = grid.M
    sl = tuple(slice(M - 1, 2 * M - 1) for _ in range(grid.n))
    if np.iscomplexobj(values) or np.iscomplexobj(kernel):
        return fftconvolve(values, kernel, mode="full")[sl]
    return fftconvolve(np.asarray(values, float), np.asarray(kernel, float), mode="full")[sl]


def direct_pair_sum(integrand, grid, cap: int = DIRECT_PAIR_CAP, chunk: int = 1 << 20) -> float:
    """``h^(2n) sum_{x1 != x2} integrand(i1, i2, dx)`` by brute force.

    ``integrand`` receives flat index arrays for the two points and the list of
    displacement components ``x1 - x2``.  Rows of ``x1`` are processed in blocks
    and the block sums are combined pairwise, so the result does not depend on
    how the work is split.
    """
    N = grid.size
    if N * N > cap:
        raise BudgetExceeded(f"{N}^2 pair evaluations exceed the cap {cap}")
    coords = [c.ravel() for c in grid.coords]
    rows = max(1, chunk // N)
    partial = []
    idx2 = np.arange(N)
    for start in range(0, N, rows):
        i1 = np.arange(start, min(start + rows, N))
        I1 = np.repeat(i1, N)
        I2 = np.tile(idx2, len(i1))
        dx = [c[I1] - c[I2] for c in coords]
        val = integrand(I1, I2, dx)
        val = np.where(I1 == I2, 0.0, val)
        partial.append(float(np.sum(val)))
    return float(_pairwise_sum(partial) * grid.cell_volume**2)


def _pairwise_sum(values):
    vals = list(values)
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0] if vals else 0.0


def trapezoid_weights(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if len(t) < 2:
        raise ValueError("time quadrature needs at least two snapshots")
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def simpson_weights(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    n = len(t)
    if n < 3 or n % 2 == 0:
        return trapezoid_weights(t)
    dt = t[1] - t[0]
    w = np.ones(n)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return w * dt / 3


def time_integral(times, values, rule: str = "trapezoid") -> float:
    w = simpson_weights(times) if rule == "simpson" else trapezoid_weights(times)
    return float(np.dot(w, np.asarray(values, dtype=float)))


def _quadrant(a, b):
    """``int_{z1>a, z2>b} |z|^-3 dz`` for ``a, b > 0``."""
    return 1.0 / a + 1.0 / b - np.hypot(a, b) / (a * b)


def outside_inverse_cube(grid) -> np.ndarray:
    """``int_{R^2 \\ box} |x - y|^-3 dy`` for each grid point ``x``.

    The box is the union of grid cells.  Closed form by inclusion-exclusion of
    four half planes and four corner quadrants.
    """
    if grid.n != 2:
        raise ValueError("only implemented in two dimensions")
    h = grid.h
    lo = grid.axis[0] - h / 2
    hi = grid.axis[-1] + h / 2
    x, y = grid.coords
    a1, a2 = x - lo, hi - x
    b1, b2 = y - lo, hi - y
    half = 2.0 * (1 / a1 + 1 / a2 + 1 / b1 + 1 / b2)
    corners = _quadrant(a1, b1) + _quadrant(a1, b2) + _quadrant(a2, b1) + _quadrant(a2, b2)
    return half - corners

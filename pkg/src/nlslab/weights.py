"""Radial convex weights ``a(|x|)`` for Morawetz actions.

``weight_r0`` is the two-dimensional weight whose Laplacian is
``int_r^inf s log(s/r) w(s) ds`` with ``w(s) = s**-3`` above ``r0``.  Its
radial derivative is obtained from ``a_r(r) = (1/r) int_0^r s Lap_a(s) ds``;
integrating the piecewise Laplacian gives

    a_r = (r / 2 r0) (3/2 + log(r0/r))    for r < r0
    a_r = 1 - r0 / (4 r)                   for r >= r0

which never reaches 1.  The adaptive-quadrature route is kept alongside the
closed forms and the two are compared in the test suite.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .quadrature import DIRECT_PAIR_CAP, direct_pair_sum, displacement_lattice, linear_convolve, outside_inverse_cube

QUAD_TOL = 1e-12

Radial = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RadialWeight:
    r0: float
    a: Radial
    a_r: Radial
    lap_a: Radial
    a_rr: Radial
    label: str
    dim: int = 2
    lap_a_prime: Radial | None = None

    def grad_factor(self, r):
        """``a_r(r)/r``, the factor multiplying ``x`` in ``grad a``; 0 at the origin."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        nz = r > 0
        out[nz] = self.a_r(r[nz]) / r[nz]
        return out

    def a_r_quadrature(self, r: float) -> float:
        """``(1/r) int_0^r s Lap_a(s) ds`` by adaptive quadrature."""
        if r == 0:
            return 0.0
        pts = [self.r0] if 0 < self.r0 < r else None
        val, _ = integrate.quad(lambda s: s * float(self.lap_a(np.array(s))), 0.0, r,
                                points=pts, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
        return val / r

    def export_csv(self, path, r_samples) -> None:
        r = np.asarray(r_samples, dtype=float)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["schema_version", "r", "a", "a_r", "lap_a", "a_rr"])
            for ri, ai, ari, li, rri in zip(r, self.a(r), self.a_r(r), self.lap_a(r), self.a_rr(r)):
                w.writerow([1] + [f"{v:.17g}" for v in (ri, ai, ari, li, rri)])


def weight_abs(n: int = 2) -> RadialWeight:
    """``a(x) = |x|`` in dimension ``n``."""
    one = lambda r: np.ones_like(np.asarray(r, dtype=float))
    zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))

    def lap(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(r > 0, (n - 1) / np.where(r > 0, r, 1.0), np.inf if n > 1 else 0.0)

    return RadialWeight(0.0, lambda r: np.asarray(r, dtype=float), one, lap, zero, "abs", n,
                        lambda r: -(n - 1) / np.asarray(r, dtype=float) ** 2)


def weight_r0(r0: float) -> RadialWeight:
    if not r0 > 0:
        raise ValueError(f"r0 must be positive, got {r0}")

    def lap(r):
        r = np.asarray(r, dtype=float)
        inner = r < r0
        safe = np.where(r > 0, r, r0)
        out = np.where(inner, (1.0 + np.log(r0 / safe)) / r0, 1.0 / safe)
        return np.where(r > 0, out, np.inf)

    def lap_prime(r):
        r = np.asarray(r, dtype=float)
        return np.where(r < r0, -1.0 / (r0 * r), -1.0 / r**2)

    def a_r(r):
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, r0)
        inner = (safe / (2 * r0)) * (1.5 + np.log(r0 / safe))
        outer = 1.0 - r0 / (4 * safe)
        return np.where(r <= 0, 0.0, np.where(r < r0, inner, outer))

    def a(r):
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, r0)
        inner = safe**2 / (2 * r0) * (1.0 + 0.5 * np.log(r0 / safe))
        outer = safe - r0 / 2 - (r0 / 4) * np.log(safe / r0)
        return np.where(r <= 0, 0.0, np.where(r < r0, inner, outer))

    def a_rr(r):
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, r0)
        inner = (0.5 + np.log(r0 / safe)) / (2 * r0)
        outer = r0 / (4 * safe**2)
        return np.where(r < r0, inner, outer)

    return RadialWeight(float(r0), a, a_r, lap, a_rr, f"r0={r0:g}", 2, lap_prime)


@dataclass
class ConvexityReport:
    r: np.ndarray
    q: np.ndarray
    a_rr: np.ndarray
    growth: np.ndarray  # Lap_a + r Lap_a'
    passed: bool
    min_q: float
    scale: float


def convexity_certificate(w: RadialWeight, r_samples) -> ConvexityReport:
    """Evaluate ``q(r) = int_0^r [2 Lap_a(r) - Lap_a(s)] s ds`` and ``a_rr = q/r^2``.

    ``q`` is computed by adaptive quadrature independently of the closed-form
    ``a_rr``; the certificate passes when ``q >= -1e-12 * max|q|`` everywhere.
    """
    r = np.asarray(r_samples, dtype=float)
    if w.r0 == 0:
        q = np.zeros_like(r)  # a = |x|: a_rr vanishes identically
    else:
        q = np.array([ri * ri * float(w.lap_a(np.array(ri))) - ri * w.a_r_quadrature(ri) for ri in r])
    arr = q / r**2
    growth = w.lap_a(r) + r * w.lap_a_prime(r) if w.lap_a_prime is not None else np.full_like(r, np.nan)
    scale = float(np.max(np.abs(q))) if q.size else 0.0
    min_q = float(q.min()) if q.size else 0.0
    return ConvexityReport(r, q, arr, growth, bool(min_q >= -1e-12 * max(scale, 1.0)), min_q, scale)


# -- bilaplacian pairing --------------------------------------------------------


def w_kernel(r0: float):
    """``w_r0(s) = s^-3`` for ``s >= r0``, else 0."""
    def kernel(r):
        r = np.asarray(r, dtype=float)
        return np.where(r >= r0, np.where(r > 0, r, 1.0) ** -3.0, 0.0)
    return kernel


def lattice_w_mass(r0: float, h: float, radius: float | None = None) -> float:
    """``sum_{z in hZ^2, |z| >= r0} h^2 w_r0(|z|)`` with the continuum tail beyond ``radius``."""
    R = radius if radius is not None else max(64 * h, 16 * r0)
    m = int(np.ceil(R / h))
    ax = np.arange(-m, m + 1) * h
    zx, zy = np.meshgrid(ax, ax, indexing="ij")
    rr = np.hypot(zx, zy)
    sel = (rr >= r0) & (rr <= R) & (rr > 0)
    return float(h * h * np.sum(rr[sel] ** -3.0) + 2 * np.pi / R)


def bilaplacian_pairing(w: RadialWeight, rho1: np.ndarray, rho2: np.ndarray, grid,
                        delta_mass: str = "continuum") -> float:
    """``int int (-Lap Lap a)(|x1-x2|) rho1(x1) rho2(x2)`` for the ``r0`` weight in 2D.

    ``-Lap Lap a = (2 pi / r0) delta - w_r0``.  With ``delta_mass="lattice"`` the
    delta coefficient is the lattice sum of ``w_r0`` instead of ``2 pi / r0``, so
    the identity with :func:`square_form` holds for the discrete sums as well.
    """
    if grid.n != 2:
        raise ValueError("the r0 pairing is two-dimensional")
    if w.r0 <= 0:
        raise ValueError("pairing needs the r0 weight")
    if delta_mass == "continuum":
        coef = 2 * np.pi / w.r0
    elif delta_mass == "lattice":
        coef = lattice_w_mass(w.r0, grid.h)
    else:
        raise ValueError(f"unknown delta_mass {delta_mass!r}")
    local = coef * grid.cell_volume * float(np.sum(rho1 * rho2))
    K = w_kernel(w.r0)(np.sqrt(sum(d * d for d in displacement_lattice(grid))))
    pair = grid.cell_volume**2 * float(np.sum(rho1 * linear_convolve(K, rho2, grid)))
    return local - pair


def square_form(w: RadialWeight, rho: np.ndarray, grid, cap: int = DIRECT_PAIR_CAP) -> float:
    """``1/2 int int {rho(x1) - rho(x2)}^2 w_r0(|x1 - x2|)`` over the plane.

    Box pairs are summed directly; pairs with one point outside the box (where
    ``rho`` vanishes) use the closed-form exterior integral of ``|z|^-3``,
    valid when ``r0`` is below the distance to the box edge.
    """
    kern = w_kernel(w.r0)
    flat = np.asarray(rho, dtype=float).ravel()

    def integrand(i1, i2, dx):
        return (flat[i1] - flat[i2]) ** 2 * kern(np.sqrt(sum(d * d for d in dx)))

    inside = 0.5 * direct_pair_sum(integrand, grid, cap)
    outside = grid.cell_volume * float(np.sum(rho * rho * outside_inverse_cube(grid)))
    return inside + outside

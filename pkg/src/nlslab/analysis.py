"""Conservation-law densities, Morawetz actions and correlation functionals.

Densities follow the fluid normalization ``rho = |u|^2 / 2``,
``p_j = Im(conj(u) d_j u)``, ``sigma_jk = 2 Re(d_k u conj(d_j u))``.
All double integrals are taken over ``R^n x R^n`` with the field vanishing
outside the box (the truncation guard makes this accurate); distances are
Euclidean, never periodic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import DegenerateDensity
from .quadrature import (
    DIRECT_PAIR_CAP,
    LATTICE_ZETA_HALF,
    direct_pair_sum,
    displacement_lattice,
    linear_convolve,
    outside_inverse_cube,
    time_integral,
)
from .solver import Trajectory
from .spectral import Field, Grid, fractional_derivative, gradient_array, physical_frequency
from .weights import RadialWeight

DELTA_REL = 1e-10


@dataclass(frozen=True)
class DensitySet:
    grid: Grid
    rho: np.ndarray
    pvec: np.ndarray  # shape (n, M, ...)
    sigma: np.ndarray  # shape (n, n, M, ...)
    grad_rho: np.ndarray  # shape (n, M, ...)

    @property
    def delta(self) -> float:
        return DELTA_REL * float(self.rho.max()) if self.rho.size else 0.0

    @property
    def resolved(self) -> np.ndarray:
        """Points where ``rho`` exceeds the division cutoff."""
        return self.rho > self.delta

    def fluid_sigma(self) -> np.ndarray:
        """``(p_j p_k + d_j rho d_k rho) / rho`` on resolved points, NaN elsewhere."""
        ok = self.resolved
        out = np.full_like(self.sigma, np.nan)
        n = self.grid.n
        for j in range(n):
            for k in range(n):
                num = self.pvec[j] * self.pvec[k] + self.grad_rho[j] * self.grad_rho[k]
                out[j, k][ok] = num[ok] / self.rho[ok]
        return out


def densities(f: Field) -> DensitySet:
    u = f.values
    if not np.any(u.imag):
        u = u.real  # real data: keep the gradients real so p vanishes exactly
    grads = gradient_array(u, f.grid)
    rho = 0.5 * np.abs(u) ** 2
    ubar = np.conj(u)
    pvec = np.array([np.imag(ubar * d) for d in grads])
    grad_rho = np.array([np.real(ubar * d) for d in grads])
    n = f.grid.n
    sigma = np.empty((n, n) + f.grid.shape)
    for j in range(n):
        for k in range(n):
            sigma[j, k] = 2.0 * np.real(grads[k] * np.conj(grads[j]))
    return DensitySet(f.grid, rho, pvec, sigma, grad_rho)


def mass_residual(d0: DensitySet, d1: DensitySet, dt: float) -> np.ndarray:
    """``d_t rho + div p`` from two snapshots, with ``p`` averaged between them."""
    pv = 0.5 * (d0.pvec + d1.pvec)
    div = sum(gradient_array(pv[j], d0.grid)[j] for j in range(d0.grid.n))
    return (d1.rho - d0.rho) / dt + div


# -- single-particle and interaction actions -------------------------------------


def morawetz_action(f: Field, w: RadialWeight) -> float:
    """``2 int grad a . Im(conj(u) grad u)`` with ``grad a = a_r(|x|) x/|x|``."""
    d = densities(f)
    g = f.grid
    fac = w.grad_factor(g.radius)
    return float(2.0 * g.cell_volume * sum(np.sum(fac * c * pj) for c, pj in zip(g.coords, d.pvec)))


def _vector_kernel(w: RadialWeight, grid: Grid):
    disp = displacement_lattice(grid)
    r = np.sqrt(sum(z * z for z in disp))
    fac = w.grad_factor(r)
    return [fac * z for z in disp]


def interaction_action(f: Field, w: RadialWeight, method: str = "fft", cap: int = DIRECT_PAIR_CAP) -> float:
    """Tensor-product action
    ``int int a_r(|x1-x2|) e(x1-x2) . [p(x1) rho(x2) - p(x2) rho(x1)]``,
    ``e`` the unit vector; the diagonal contributes nothing.

    ``method="direct"`` sums all pairs (budget-capped); ``"fft"`` evaluates the
    same lattice sum as a linear convolution.
    """
    d = densities(f)
    g = f.grid
    if method == "direct":
        rho = d.rho.ravel()
        pv = [pj.ravel() for pj in d.pvec]

        def integrand(i1, i2, dx):
            r = np.sqrt(sum(z * z for z in dx))
            fac = w.grad_factor(r)
            return fac * sum(z * (pj[i1] * rho[i2] - pj[i2] * rho[i1]) for z, pj in zip(dx, pv))

        return direct_pair_sum(integrand, g, cap)
    if method != "fft":
        raise ValueError(f"unknown method {method!r}")
    K = _vector_kernel(w, g)
    total = sum(np.sum(pj * linear_convolve(Kj, d.rho, g)) for Kj, pj in zip(K, d.pvec))
    return float(2.0 * g.cell_volume**2 * total)


def commutator_action(f: Field) -> float:
    """The ``a = |x|`` interaction action as ``2 <[x; D^-(n-1)] rho | p>``.

    ``D^-(n-1)`` is applied in physical space with kernel ``|x - y|^-(n-1)``
    (diagonal excluded), and the commutator is formed literally as
    ``x_k D(rho) - D(x_k rho)``.
    """
    d = densities(f)
    g = f.grid
    disp = displacement_lattice(g)
    r = np.sqrt(sum(z * z for z in disp))
    if g.n == 1:
        # the kernel |x - y|^0 reduces the commutator to sign(x - y)
        return float(2.0 * g.cell_volume**2 * np.sum(d.pvec[0] * linear_convolve(np.sign(disp[0]), d.rho, g)))
    inv = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), 0.0)
    Drho = linear_convolve(inv, d.rho, g)
    total = 0.0
    for c, pj in zip(g.coords, d.pvec):
        Xk = c * Drho - linear_convolve(inv, c * d.rho, g)
        total += np.sum(Xk * pj)
    return float(2.0 * g.cell_volume**2 * total)


def interaction_bound(f: Field, w: RadialWeight) -> float:
    """Triangle-inequality bound ``4 ||a_r||_inf ||p||_L1 ||rho||_L1``."""
    d = densities(f)
    g = f.grid
    p_l1 = g.cell_volume * float(np.sum(np.sqrt(np.sum(d.pvec**2, axis=0))))
    rho_l1 = g.cell_volume * float(np.sum(d.rho))
    ar_max = float(np.max(w.a_r(displacement_radius(g))))
    return 4.0 * ar_max * p_l1 * rho_l1


def displacement_radius(grid: Grid) -> np.ndarray:
    return np.sqrt(sum(z * z for z in displacement_lattice(grid)))


# -- commutator kernel and two-point momentum ------------------------------------


def commutator_kernel(x, y) -> np.ndarray:
    """``eta(x, y) = (|r|^2 I - r r^T) / |r|^3`` with ``r = x - y``.

    Accepts single points or stacked points with the coordinate on the last axis.
    """
    r = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r2 = np.sum(r * r, axis=-1)
    if np.any(r2 == 0):
        raise ValueError("commutator kernel is undefined at x = y")
    n = r.shape[-1]
    eye = np.eye(n)
    outer = r[..., :, None] * r[..., None, :]
    return (r2[..., None, None] * eye - outer) / (r2 ** 1.5)[..., None, None]


def two_point_momentum(d: DensitySet, x, y) -> np.ndarray:
    """``J = sqrt(rho(y)/rho(x)) p(x) - sqrt(rho(x)/rho(y)) p(y)`` at grid indices."""
    x, y = tuple(np.atleast_1d(x)), tuple(np.atleast_1d(y))
    rx, ry = d.rho[x], d.rho[y]
    if rx <= d.delta or ry <= d.delta:
        raise DegenerateDensity("density below the division cutoff")
    px = d.pvec[(slice(None),) + x]
    py = d.pvec[(slice(None),) + y]
    return np.sqrt(ry / rx) * px - np.sqrt(rx / ry) * py


def p2_commutator_form(f: Field, stride: int = 1, cap: int = DIRECT_PAIR_CAP) -> float:
    """``1/2 int int J^T eta J dx dy`` over resolved points of a strided sub-grid."""
    d = densities(f)
    g = f.grid
    sl = tuple(slice(None, None, stride) for _ in range(g.n))
    sub = Grid(g.n, g.L, g.M // stride) if stride > 1 else g
    rho = d.rho[sl].ravel()
    pv = [pj[sl].ravel() for pj in d.pvec]
    ok = rho > d.delta
    srho = np.sqrt(np.where(ok, rho, 1.0))

    def integrand(i1, i2, dx):
        r2 = sum(z * z for z in dx)
        r2 = np.where(r2 > 0, r2, 1.0)
        J = [srho[i2] / srho[i1] * pj[i1] - srho[i1] / srho[i2] * pj[i2] for pj in pv]
        jj = sum(Jk * Jk for Jk in J)
        jr = sum(Jk * z for Jk, z in zip(J, dx))
        val = (jj * r2 - jr * jr) / r2**1.5
        return np.where(ok[i1] & ok[i2], 0.5 * val, 0.0)

    return direct_pair_sum(integrand, sub, cap)


# -- one-dimensional heat-kernel (erf) action ------------------------------------


@dataclass(frozen=True)
class ErfActionTerms:
    M: float
    P1: float
    P2: float
    P3: float
    P4: float
    epsilon: float

    @property
    def total(self) -> float:
        return self.P1 + self.P2 + self.P3 + self.P4

    @property
    def scale(self) -> float:
        return max(abs(self.P1), abs(self.P2), abs(self.P3), abs(self.P4))

    def signs_ok(self, rel: float = 1e-12) -> bool:
        floor = -rel * self.scale
        return all(v >= floor for v in (self.P1, self.P2, self.P3, self.P4))


def heat_kernel(z, eps: float):
    """Unit-mass Gaussian ``exp(-z^2/eps^2) / (sqrt(pi) eps)``."""
    return np.exp(-(np.asarray(z) / eps) ** 2) / (np.sqrt(np.pi) * eps)


def erf_kernel(z, eps: float):
    """Odd antiderivative of :func:`heat_kernel`, bounded by 1/2."""
    return 0.5 * erf(np.asarray(z) / eps)


def heat_smooth(values: np.ndarray, grid: Grid, eps: float) -> np.ndarray:
    disp = displacement_lattice(grid)[0]
    return grid.h * linear_convolve(heat_kernel(disp, eps), values, grid)


def nonlinear_coefficient(p: float) -> float:
    """Coefficient of ``rho^((p+1)/2)`` in the local momentum law."""
    return 2 ** ((p + 1) / 2) * (p - 1) / (p + 1)


def erf_action(f: Field, eps: float) -> float:
    """``int int K(x - y) rho(y) p(x)`` with the odd kernel ``K = erf(./eps)/2``."""
    g = f.grid
    if g.n != 1:
        raise ValueError("the erf action is one-dimensional")
    d = densities(f)
    disp = displacement_lattice(g)[0]
    return float(g.h**2 * np.sum(d.pvec[0] * linear_convolve(erf_kernel(disp, eps), d.rho, g)))


def _banded_p2(rho, p, ok, h, eps):
    """``1/2 sum_{x,y} G(x-y) (sqrt(rho_y/rho_x) p_x - sqrt(rho_x/rho_y) p_y)^2 h^2``.

    The Gaussian is negligible beyond ten widths, so only that band of
    offsets is summed.
    """
    M = len(rho)
    band = min(M - 1, int(np.ceil(10 * eps / h)))
    s = np.sqrt(np.where(ok, rho, 1.0))
    total = 0.0
    for k in range(1, band + 1):
        a, b = slice(0, M - k), slice(k, M)
        both = ok[a] & ok[b]
        J = s[b] / s[a] * p[a] - s[a] / s[b] * p[b]
        # offsets +k and -k give the same square
        total += 2.0 * heat_kernel(k * h, eps) * np.sum(np.where(both, J * J, 0.0))
    return 0.5 * h * h * total


def erf_action_terms(f: Field, p: float, eps: float) -> ErfActionTerms:
    g = f.grid
    if g.n != 1:
        raise ValueError("the erf action is one-dimensional")
    if eps < 2 * g.h * (1 - 1e-12):
        raise ValueError(f"epsilon {eps} is below twice the grid spacing {g.h}")
    d = densities(f)
    rho, mom, rx = d.rho, d.pvec[0], d.grad_rho[0]
    ok = d.resolved
    Grho = heat_smooth(rho, g, eps)
    safe = np.where(ok, rho, 1.0)
    P1 = g.h * float(np.sum(np.where(ok, Grho * rx * rx / safe, 0.0)))
    P2 = float(_banded_p2(rho, mom, ok, g.h, eps))
    k = physical_frequency(g.xi[0])
    rhohat = np.fft.fft(rho) * g.h
    P3 = float(np.sum(k * k * np.abs(rhohat) ** 2 * np.exp(-(eps * k) ** 2 / 4)) / g.L)
    P4 = nonlinear_coefficient(p) * g.h * float(np.sum(Grho * rho ** ((p + 1) / 2)))
    return ErfActionTerms(erf_action(f, eps), P1, P2, P3, P4, eps)


def p1_limit(f: Field) -> float:
    """``int rho_x^2 = ||d_x |u|^2||^2 / 4``."""
    d = densities(f)
    return float(f.grid.cell_volume * np.sum(d.grad_rho[0] ** 2))


def p4_limit(f: Field, p: float) -> float:
    """``c_p int rho^((p+3)/2) = (p-1) / (2(p+1)) ||u||_{p+3}^{p+3}``."""
    d = densities(f)
    return nonlinear_coefficient(p) * f.grid.cell_volume * float(np.sum(d.rho ** ((p + 3) / 2)))


# -- Besov-type double integral --------------------------------------------------


@dataclass(frozen=True)
class BesovResult:
    value: float
    stderr: float
    box_sum: float
    outside: float
    singular_correction: float
    method: str


def _besov_pieces(g2: np.ndarray, grid: Grid):
    h = grid.h
    outside = 2.0 * grid.cell_volume * float(np.sum(g2 * g2 * outside_inverse_cube(grid)))
    grad = gradient_array(g2, grid)
    corr = -0.5 * LATTICE_ZETA_HALF * h * grid.cell_volume * float(sum(np.sum(d * d) for d in grad))
    return outside, corr


def besov_double_integral(f: Field, method: str = "direct", correct: bool = True, exterior: bool = True,
                          samples: int = 200_000, seed: int = 0, cap: int = DIRECT_PAIR_CAP) -> BesovResult:
    """``int int {|u(x1)|^2 - |u(x2)|^2}^2 / |x1 - x2|^3`` over ``R^2 x R^2``.

    Box pairs are summed off the diagonal (``direct``) or estimated by
    stratified sampling; pairs with one point outside the box are added in
    closed form (``exterior=False`` keeps the box-only sum).  With
    ``correct=True`` the leading lattice error of the ``1/|z|`` singularity,
    ``-zeta_2(1/2)/2 * h * ||grad |u|^2||^2``, is added.
    """
    g = f.grid
    if g.n != 2:
        raise ValueError("the Besov double integral is two-dimensional")
    g2 = f.density
    outside, corr = _besov_pieces(g2, g)
    if not exterior:
        outside = 0.0
    if method == "direct":
        flat = g2.ravel()

        def integrand(i1, i2, dx):
            r2 = sum(z * z for z in dx)
            r2 = np.where(r2 > 0, r2, 1.0)
            return (flat[i1] - flat[i2]) ** 2 / r2**1.5

        box, err = direct_pair_sum(integrand, g, cap), 0.0
    elif method == "stratified":
        box, err = _stratified_besov(g2, g, samples, seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    total = box + outside + (corr if correct else 0.0)
    return BesovResult(total, err, box, outside, corr if correct else 0.0, method)


def _stratified_besov(g2: np.ndarray, grid: Grid, samples: int, seed: int, exact_radius: int = 3):
    """Stratified Monte Carlo over displacement shells.

    Displacements with both lattice offsets below ``exact_radius`` are summed
    exactly; the rest are split into dyadic shells of ``max(|a|, |b|)`` and
    sampled with allocation proportional to the number of pairs in each shell.
    """
    rng = np.random.default_rng(seed)
    M, h = grid.M, grid.h
    offs = np.arange(-(M - 1), M)
    A, B = np.meshgrid(offs, offs, indexing="ij")
    A, B = A.ravel(), B.ravel()
    count = (M - np.abs(A)) * (M - np.abs(B))  # valid x1 for each displacement
    cheb = np.maximum(np.abs(A), np.abs(B))
    keep = cheb > 0

    def shift_sum(a, b):
        s1 = (slice(max(a, 0), M + min(a, 0)), slice(max(b, 0), M + min(b, 0)))
        s2 = (slice(max(-a, 0), M + min(-a, 0)), slice(max(-b, 0), M + min(-b, 0)))
        return float(np.sum((g2[s1] - g2[s2]) ** 2))

    exact = keep & (cheb < exact_radius)
    total = 0.0
    for a, b in zip(A[exact], B[exact]):
        total += shift_sum(a, b) / (h * np.hypot(a, b)) ** 3
    var = 0.0
    edges = [exact_radius]
    while edges[-1] < M:
        edges.append(edges[-1] * 2)
    strata = [(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]
    n_pairs = [count[(cheb >= lo) & (cheb < hi)].sum() for lo, hi in strata]
    all_pairs = float(sum(n_pairs))
    flat = g2
    for (lo, hi), npairs in zip(strata, n_pairs):
        if npairs == 0:
            continue
        sel = (cheb >= lo) & (cheb < hi)
        a_s, b_s, c_s = A[sel], B[sel], count[sel].astype(float)
        k = max(64, int(samples * npairs / all_pairs))
        pick = rng.choice(len(a_s), size=k, p=c_s / c_s.sum())
        a, b = a_s[pick], b_s[pick]
        # x1 uniform among points whose partner x1 - z lies in the box
        i = rng.integers(0, M - np.abs(a)) + np.maximum(a, 0)
        j = rng.integers(0, M - np.abs(b)) + np.maximum(b, 0)
        vals = (flat[i, j] - flat[i - a, j - b]) ** 2 / (h * np.hypot(a, b)) ** 3
        total += npairs * vals.mean()
        var += npairs**2 * vals.var(ddof=1) / k
    return total * h**4, float(np.sqrt(var)) * h**4


# -- spacetime functionals -------------------------------------------------------


def correlation_density_norm(f: Field) -> float:
    """``||D^(1/2) |u|^2||_2^2`` in 2D, ``||d_x |u|^2||_2^2`` in 1D."""
    g = f.grid
    dens = Field(g, f.density)
    if g.n == 2:
        v = fractional_derivative(dens, 0.5).values
    else:
        v = gradient_array(f.density, g)[0]
    return float(g.cell_volume * np.sum(np.abs(v) ** 2))


def interaction_lhs(traj: Trajectory, rule: str = "trapezoid") -> float:
    """Squared ``L^2_t L^2_x`` norm of ``D^(1/2)|u|^2`` (2D) or ``d_x |u|^2`` (1D)."""
    if len(traj) < 2:
        raise ValueError("time quadrature needs at least two snapshots")
    vals = [correlation_density_norm(u) for u in traj.fields]
    return time_integral(np.abs(traj.times), vals, rule)


def spacetime_lebesgue(traj: Trajectory, q: float, r: float, rule: str = "trapezoid") -> float:
    """``||u||_{L^q_t L^r_x}^q`` over the snapshot times."""
    g = traj.grid
    vals = [(g.cell_volume * np.sum(np.abs(u.values) ** r)) ** (q / r) for u in traj.fields]
    return time_integral(np.abs(traj.times), vals, rule)

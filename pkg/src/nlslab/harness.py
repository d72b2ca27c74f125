"""Named experiments: evolve, evaluate a spacetime functional, report lhs / rhs.

Every run returns an :class:`EstimateReport`.  The implied constants of the
estimates are never asserted; the harness records ratios, guard statistics
and time series so that stability across resolution, time step and
nonlinearity can be checked downstream.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .config import ExperimentConfig
from .data import build
from .errors import MonotonicityViolation
from .solver import (
    SolverConfig,
    Trajectory,
    energy,
    evolve,
    mass,
    momentum,
    rescale,
    rescale_config,
)
from .spectral import Field, i_operator, lebesgue_norm, propagator_symbol, sobolev_norm
from .quadrature import time_integral
from .weights import bilaplacian_pairing, weight_abs, weight_r0

MONOTONE_TOL = 1e-6


@dataclass
class EstimateReport:
    experiment: str
    lhs: float
    rhs: float
    ratio: float
    aux: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0
    status: str = "ok"

    def to_dict(self, include_wall_time: bool = True) -> dict:
        out = {"schema_version": 1, "experiment": self.experiment, "lhs": self.lhs, "rhs": self.rhs,
               "ratio": self.ratio, "status": self.status, "aux": self.aux, "config": self.config}
        if include_wall_time:
            out["wall_time"] = self.wall_time
        return out

    def to_json(self, include_wall_time: bool = True) -> str:
        return json.dumps(_plain(self.to_dict(include_wall_time)), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EstimateReport":
        return cls(d["experiment"], d["lhs"], d["rhs"], d["ratio"], d.get("aux", {}), d.get("config", {}),
                   d.get("wall_time", 0.0), d.get("status", "ok"))


def _plain(obj):
    """Convert numpy scalars and arrays to JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _ratio(lhs: float, rhs: float) -> float:
    return lhs / rhs if rhs > 0 else float("nan")


# -- shared diagnostics ----------------------------------------------------------


def _series_weight(grid):
    return weight_r0(1.0) if grid.n == 2 else weight_abs(1)


def conservation_series(traj: Trajectory) -> dict:
    """Per-snapshot mass, energy, momentum and the single-particle action."""
    p = traj.config.p
    w = _series_weight(traj.grid)
    mom = np.array([momentum(u) for u in traj.fields])
    m = np.array([mass(u) for u in traj.fields])
    e = np.array([energy(u, p) for u in traj.fields])
    out = {"t": traj.times.tolist(), "mass": m.tolist(), "energy": e.tolist(),
           "M_a": [analysis.morawetz_action(u, w) for u in traj.fields]}
    for j in range(traj.grid.n):
        out[f"momentum_{j}"] = mom[:, j].tolist()
    scale_e = abs(e[0]) if e[0] != 0 else 1.0
    scale_m = m[0] if m[0] != 0 else 1.0
    out["mass_drift"] = float(np.max(np.abs(m - m[0])) / scale_m)
    out["energy_drift"] = float(np.max(np.abs(e - e[0])) / scale_e)
    out["momentum_drift"] = float(np.max(np.abs(mom - mom[0])))
    return out


def sup_norms(traj: Trajectory) -> dict:
    f = traj.fields
    return {
        "sup_L2": max(lebesgue_norm(u, 2) for u in f),
        "sup_H1/2": max(sobolev_norm(u, 0.5) for u in f),
        "sup_H1": max(sobolev_norm(u, 1.0) for u in f),
        "sup_Linf": max(lebesgue_norm(u, np.inf) for u in f),
    }


def _guard_stats(traj: Trajectory) -> dict:
    return {"guard_max": float(max(traj.guard)) if traj.guard else 0.0,
            "breach_time": traj.breach_time}


def initial_field(cfg: ExperimentConfig) -> Field:
    return build(cfg.initial, cfg.grid)


def _evolve(cfg: ExperimentConfig, solver: SolverConfig | None = None, truncate: bool = False) -> Trajectory:
    return evolve(initial_field(cfg), solver or cfg.solver, truncate=truncate)


def _common_aux(traj: Trajectory) -> dict:
    aux = {"series": conservation_series(traj)}
    aux.update(sup_norms(traj))
    aux.update(_guard_stats(traj))
    return aux


# -- correlation estimates -------------------------------------------------------


def thm1_terms(traj: Trajectory, rule: str = "trapezoid") -> tuple[float, float]:
    """``||D^(1/2)|u|^2||_{L2L2}`` and ``sup||u||_{H^(1/2)} sup||u||_{L2}``."""
    lhs = np.sqrt(analysis.interaction_lhs(traj, rule))
    s = sup_norms(traj)
    return float(lhs), s["sup_H1/2"] * s["sup_L2"]


def run_thm1_2d(cfg: ExperimentConfig) -> EstimateReport:
    t0 = time.perf_counter()
    traj = _evolve(cfg)
    lhs, rhs = thm1_terms(traj, cfg.param("rule"))
    aux = _common_aux(traj)
    if cfg.param("linear_control"):
        lin = _evolve(cfg, SolverConfig(cfg.solver.p, cfg.solver.dt, cfg.solver.T, cfg.solver.dt_out, 0.0))
        l_lhs, l_rhs = thm1_terms(lin, cfg.param("rule"))
        aux["linear_ratio"] = _ratio(l_lhs, l_rhs)
    return EstimateReport(cfg.experiment, lhs, rhs, _ratio(lhs, rhs), aux, cfg.echo(), time.perf_counter() - t0)


def thm2_terms(traj: Trajectory, variant: str, rule: str = "trapezoid") -> tuple[float, float]:
    s = sup_norms(traj)
    if variant == "deriv":
        lhs = float(np.sqrt(analysis.interaction_lhs(traj, rule)))
        return lhs, float(np.sqrt(s["sup_H1"]) * s["sup_L2"] ** 1.5)
    if variant == "p3":
        q = traj.config.p + 3
        lhs = analysis.spacetime_lebesgue(traj, q, q, rule)
        return lhs, s["sup_L2"] ** 3 * s["sup_H1"]
    raise ValueError(f"unknown variant {variant!r}")


def erf_p1_limit_integral(traj: Trajectory, rule: str = "trapezoid") -> float:
    """``int_0^T lim P1 dt`` with the limit from a Richardson step on ``P1(eps)``.

    ``P1(eps) - lim P1`` is ``O(eps^2)``, so ``(4 P1(e) - P1(2e)) / 3`` at the
    smallest admissible scale ``e = 2h`` removes the leading error.
    """
    h = traj.grid.h
    e = 2 * h
    vals = []
    for u in traj.fields:
        fine = analysis.erf_action_terms(u, traj.config.p, e).P1
        coarse = analysis.erf_action_terms(u, traj.config.p, 2 * e).P1
        vals.append((4 * fine - coarse) / 3)
    return time_integral(np.abs(traj.times), vals, rule)


def run_thm2_1d(cfg: ExperimentConfig, variant: str | None = None) -> EstimateReport:
    t0 = time.perf_counter()
    variant = variant or ("deriv" if cfg.experiment == "thm2_1d_deriv" else "p3")
    traj = _evolve(cfg)
    rule = cfg.param("rule")
    lhs, rhs = thm2_terms(traj, variant, rule)
    aux = _common_aux(traj)
    aux["variant"] = variant
    if variant == "deriv":
        aux["erf_4P1_integral"] = 4 * erf_p1_limit_integral(traj, rule)
        aux["lhs_squared"] = lhs * lhs
    return EstimateReport(cfg.experiment, lhs, rhs, _ratio(lhs, rhs), aux, cfg.echo(), time.perf_counter() - t0)


def l4l8_terms(traj: Trajectory, rule: str = "trapezoid") -> dict:
    lhs = analysis.spacetime_lebesgue(traj, 4, 8, rule)
    s = sup_norms(traj)
    rhs = s["sup_H1/2"] ** 2 * s["sup_L2"] ** 2
    d_sq = analysis.interaction_lhs(traj, rule)
    # per-snapshot Sobolev ratio || |u|^2 ||_4^2 / ||D^(1/2)|u|^2||_2^2
    sob = [lebesgue_norm(u.density, 4, traj.grid) ** 2 / analysis.correlation_density_norm(u)
           for u in traj.fields if analysis.correlation_density_norm(u) > 0]
    return {"lhs": lhs, "rhs": rhs, "thm1_lhs_squared": d_sq,
            "chain_ratio": _ratio(lhs, d_sq), "sobolev_ratio_max": max(sob) if sob else 0.0}


def run_l4l8_2d(cfg: ExperimentConfig) -> EstimateReport:
    t0 = time.perf_counter()
    traj = _evolve(cfg)
    terms = l4l8_terms(traj, cfg.param("rule"))
    aux = _common_aux(traj)
    aux.update({k: v for k, v in terms.items() if k not in ("lhs", "rhs")})
    aux["chain_ok"] = bool(terms["lhs"] <= terms["sobolev_ratio_max"] * terms["thm1_lhs_squared"] * (1 + 1e-12))
    return EstimateReport(cfg.experiment, terms["lhs"], terms["rhs"], _ratio(terms["lhs"], terms["rhs"]), aux,
                          cfg.echo(), time.perf_counter() - t0)


# -- monotonicity ----------------------------------------------------------------


def check_monotone(times, values, tol: float = MONOTONE_TOL) -> tuple[bool, float, tuple[float, float] | None]:
    """Increments must satisfy ``M[i+1] - M[i] >= -tol * (max M - min M)``."""
    v = np.asarray(values, dtype=float)
    span = float(v.max() - v.min()) if v.size else 0.0
    inc = np.diff(v)
    if inc.size == 0:
        return True, 0.0, None
    k = int(np.argmin(inc))
    ok = bool(inc[k] >= -tol * span)
    return ok, float(inc[k]), None if ok else (float(times[k]), float(times[k + 1]))


def action_series(traj: Trajectory, r0: float = 1.0, eps: float = 0.5) -> tuple[list, list]:
    """The monotone action and its lower-bound integrand at each snapshot.

    1D: the erf action with ``P1 + P2 + P3 + P4``.  2D: the ``r0``-weight
    interaction action with the bilaplacian pairing of ``|u|^2``.
    """
    g = traj.grid
    if g.n == 1:
        terms = [analysis.erf_action_terms(u, traj.config.p, eps) for u in traj.fields]
        return [t.M for t in terms], [t.total for t in terms]
    w = weight_r0(r0)
    M = [analysis.interaction_action(u, w) for u in traj.fields]
    pair = [bilaplacian_pairing(w, u.density, u.density, g, delta_mass="lattice") for u in traj.fields]
    return M, pair


def run_monotonicity(cfg: ExperimentConfig) -> EstimateReport:
    t0 = time.perf_counter()
    traj = _evolve(cfg)
    M, lower = action_series(traj, cfg.param("r0"), cfg.param("eps"))
    ok, worst, interval = check_monotone(traj.times, M)
    lhs = time_integral(traj.times, lower, cfg.param("rule"))
    rhs = 2 * float(np.max(np.abs(M)))
    aux = _common_aux(traj)
    aux.update({"action": M, "lower_integrand": lower, "monotone": ok, "worst_increment": worst,
                "action_increase": M[-1] - M[0], "violation_interval": interval})
    report = EstimateReport(cfg.experiment, lhs, rhs, _ratio(lhs, rhs), aux, cfg.echo(),
                            time.perf_counter() - t0, "ok" if ok else "violation")
    if not ok and cfg.param("strict"):
        raise MonotonicityViolation(f"action decreased by {-worst:.3g} on {interval}", interval=interval)
    return report


# -- scattering ------------------------------------------------------------------


def cauchy_tail(traj: Trajectory) -> np.ndarray:
    """``d(t_i) = max_{j, k >= i} ||v(t_j) - v(t_k)||_{H^1}`` with ``v = e^{-it Lap} u``.

    Distances are taken between the Fourier coefficients of ``v`` directly,
    which is the same Plancherel sum :func:`sobolev_norm` evaluates.
    """
    g = traj.grid
    weight = (1.0 + (2 * np.pi * g.xi_abs) ** 2).ravel()
    scale = g.cell_volume**2 / g.L**g.n
    V = np.array([(np.fft.fftn(u.values) * propagator_symbol(g, -t)).ravel() for t, u in traj])
    n = len(V)
    D = np.zeros((n, n))
    for j in range(n - 1):
        diff = V[j + 1:] - V[j]
        D[j, j + 1:] = np.sqrt(scale * np.sum(weight * (diff.real**2 + diff.imag**2), axis=1))
    D = np.maximum(D, D.T)
    # suffix maxima of the pairwise table
    d = np.zeros(n)
    best = 0.0
    for i in range(n - 1, -1, -1):
        best = max(best, float(D[i, i:].max()))
        d[i] = best
    return d


def run_scattering(cfg: ExperimentConfig) -> EstimateReport:
    t0 = time.perf_counter()
    traj = _evolve(cfg, truncate=True)
    d = cauchy_tail(traj)
    half = int(np.searchsorted(traj.times, traj.times[-1] / 2))
    lhs, rhs = float(d[half]), float(d[0])
    aux = _common_aux(traj)
    aux.update({"cauchy_tail": d.tolist(), "t_half": float(traj.times[half]),
                "asserted": bool(cfg.solver.p > 3),
                "decay_ok": bool(lhs < rhs / 4) if rhs > 0 else True})
    return EstimateReport(cfg.experiment, lhs, rhs, _ratio(lhs, rhs), aux, cfg.echo(), time.perf_counter() - t0)


# -- modified energy -------------------------------------------------------------


def modified_energy(u: Field, N: float, s: float, p: float) -> float:
    return energy(i_operator(u, N, s), p)


def run_i_energy(cfg: ExperimentConfig) -> EstimateReport:
    """Evolve once; for each ``N`` measure ``sup_t |E(I_N u(t)) - E(I_N u(0))|``."""
    t0 = time.perf_counter()
    traj = _evolve(cfg)
    s, p = cfg.param("s"), cfg.solver.p
    Ns = list(cfg.param("N"))
    inc = []
    for N in Ns:
        E = np.array([modified_energy(u, N, s, p) for u in traj.fields])
        inc.append(float(np.max(np.abs(E - E[0]))))
    pos = [(N, v) for N, v in zip(Ns, inc) if v > 0]
    slope = float(np.polyfit(np.log([q[0] for q in pos]), np.log([q[1] for q in pos]), 1)[0]) if len(pos) > 1 else float("nan")
    aux = _common_aux(traj)
    aux.update({"N": Ns, "inc": inc, "slope": slope,
                "monotone": bool(all(b <= a for a, b in zip(inc, inc[1:])))})
    return EstimateReport(cfg.experiment, inc[-1], inc[0], _ratio(inc[-1], inc[0]), aux, cfg.echo(),
                          time.perf_counter() - t0)


# -- scale invariance ------------------------------------------------------------


def frozen_p3_ratio(u: Field, p: float, T: float) -> float:
    """``||u||_{p+3}^{p+3} T / (||u||_2^3 ||u||_{H^1})`` for a trajectory frozen at ``u`` on ``[0, T]``."""
    q = p + 3
    lhs = T * lebesgue_norm(u, q) ** q
    rhs = lebesgue_norm(u, 2) ** 3 * sobolev_norm(u, 1.0)
    return lhs / rhs


def run_scale_invariance(cfg: ExperimentConfig, lam: float | None = None) -> EstimateReport:
    t0 = time.perf_counter()
    lam = cfg.param("lam") if lam is None else lam
    p, rule = cfg.solver.p, cfg.param("rule")
    u0 = initial_field(cfg)
    ul, _ = rescale(u0, lam, p)
    scfg = rescale_config(cfg.solver, lam)
    base = evolve(u0, cfg.solver)
    scaled = evolve(ul, scfg)
    r1 = _ratio(*thm2_terms(base, "p3", rule))
    r2 = _ratio(*thm2_terms(scaled, "p3", rule))
    f1 = frozen_p3_ratio(u0, p, cfg.solver.T)
    f2 = frozen_p3_ratio(ul, p, scfg.T)
    aux = _common_aux(base)
    aux.update({"lambda": lam, "ratio_base": r1, "ratio_scaled": r2,
                "evolved_agreement": abs(r2 - r1) / r1, "frozen_agreement": abs(f2 - f1) / f1,
                "frozen_base": f1, "frozen_scaled": f2})
    return EstimateReport(cfg.experiment, r2, r1, _ratio(r2, r1), aux, cfg.echo(), time.perf_counter() - t0)


RUNNERS = {
    "thm1_2d": run_thm1_2d,
    "thm2_1d_deriv": run_thm2_1d,
    "thm2_1d_p3": run_thm2_1d,
    "l4l8_2d": run_l4l8_2d,
    "monotonicity": run_monotonicity,
    "scattering": run_scattering,
    "i_energy": run_i_energy,
    "scale_invariance": run_scale_invariance,
}


def run_experiment(cfg: ExperimentConfig) -> EstimateReport:
    return RUNNERS[cfg.experiment](cfg)

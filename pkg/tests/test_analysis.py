import numpy as np
import pytest

from nlslab.analysis import (
    DensitySet,
    besov_double_integral,
    commutator_action,
    commutator_kernel,
    correlation_density_norm,
    densities,
    erf_action,
    erf_action_terms,
    erf_kernel,
    heat_kernel,
    interaction_action,
    interaction_bound,
    interaction_lhs,
    mass_residual,
    morawetz_action,
    p1_limit,
    p2_commutator_form,
    p4_limit,
    spacetime_lebesgue,
    two_point_momentum,
)
from nlslab.errors import BudgetExceeded, DegenerateDensity
from nlslab.solver import SolverConfig, Trajectory, evolve, mass
from nlslab.spectral import Field, Grid, band_limited_field
from nlslab.weights import weight_abs, weight_r0

from conftest import moving_bumps


def boosted(grid, c, v, w=1.0):
    x = grid.coords[0]
    return np.exp(-((x - c) / w) ** 2 + 1j * v * x)


@pytest.fixture(scope="module")
def small_line():
    return Grid(1, 32.0, 256)


@pytest.fixture(scope="module")
def small_plane():
    return Grid(2, 16.0, 32)


class TestDensities:
    def test_real_field_has_no_momentum(self, plane):
        d = densities(Field(plane, np.exp(-plane.radius**2)))
        assert np.all(d.pvec == 0)

    def test_phase_gradient(self, line):
        g = np.exp(-line.coords[0] ** 2)
        d = densities(Field(line, g * np.exp(0.8j * line.coords[0])))
        assert np.allclose(d.pvec[0], 0.8 * g**2, atol=1e-12)

    def test_rho_nonnegative(self, plane):
        d = densities(band_limited_field(plane, seed=2, kmax=1.5))
        assert np.all(d.rho >= 0)

    def test_sigma_symmetric(self, plane):
        d = densities(moving_bumps(plane))
        assert np.max(np.abs(d.sigma[0, 1] - d.sigma[1, 0])) <= 1e-12

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_sigma_fluid_form(self, plane, seed):
        d = densities(band_limited_field(plane, seed=seed, kmax=1.5))
        fluid = d.fluid_sigma()
        ok = d.resolved
        for j in range(2):
            for k in range(2):
                a, b = d.sigma[j, k][ok], fluid[j, k][ok]
                assert np.max(np.abs(a - b)) <= 1e-8 * np.max(np.abs(d.sigma))

    def test_fluid_form_skips_unresolved(self, plane):
        u = np.exp(-plane.radius**2)
        u[plane.radius > 5] = 0.0
        fluid = densities(Field(plane, u)).fluid_sigma()
        assert np.all(np.isnan(fluid[0, 0][plane.radius > 5]))

    def test_local_mass_law(self, reference_run):
        dt = reference_run.times[1] - reference_run.times[0]
        pairs = [(densities(a), densities(b)) for a, b in zip(reference_run.fields[:20], reference_run.fields[1:21])]
        rate = max(np.max(np.abs(b.rho - a.rho)) / dt for a, b in pairs)
        res = max(np.max(np.abs(mass_residual(a, b, dt))) for a, b in pairs)
        assert res <= 1e-2 * rate

    def test_local_mass_law_second_order(self, line):
        u0 = Field(line, boosted(line, 0.0, 0.7, 3.0))
        worst = []
        for dt_out in (0.04, 0.02):
            traj = evolve(u0, SolverConfig(3, 1e-3, 4 * dt_out, dt_out))
            a, b = densities(traj.fields[1]), densities(traj.fields[2])
            worst.append(np.max(np.abs(mass_residual(a, b, dt_out))))
        assert 3.0 <= worst[0] / worst[1] <= 5.0


class TestMorawetz:
    def test_real_field(self, plane):
        assert abs(morawetz_action(Field(plane, np.exp(-plane.radius**2)), weight_r0(1.0))) <= 1e-12

    @pytest.mark.parametrize("w", [weight_abs(1), weight_r0(0.5)])
    def test_centered_vanishes(self, line, w):
        assert abs(morawetz_action(Field(line, boosted(line, 0.0, 1.2)), w)) <= 1e-10

    @pytest.mark.parametrize("v", [0.5, 1.5])
    def test_far_field(self, line, v):
        f = Field(line, boosted(line, 5.0, v))
        assert morawetz_action(f, weight_r0(0.1)) == pytest.approx(2 * v * mass(f), rel=0.02)


class TestInteraction:
    def test_real_field(self, small_plane):
        f = Field(small_plane, np.exp(-small_plane.radius**2))
        assert abs(interaction_action(f, weight_r0(1.0))) <= 1e-12

    @pytest.mark.parametrize("seed", [0, 3])
    def test_bound(self, small_plane, seed):
        f = band_limited_field(small_plane, seed=seed, kmax=1.0, envelope=3.0)
        for w in (weight_abs(2), weight_r0(1.0)):
            assert abs(interaction_action(f, w)) <= interaction_bound(f, w)

    def test_two_bump_sign_flip(self, small_line):
        w = weight_abs(1)
        v = 1.0
        approaching = Field(small_line, boosted(small_line, -5.0, v) + boosted(small_line, 5.0, -v))
        receding = Field(small_line, boosted(small_line, 5.0, v) + boosted(small_line, -5.0, -v))
        assert interaction_action(approaching, w) < 0 < interaction_action(receding, w)

    def test_two_bump_sign_flip_evolved(self):
        g = Grid(1, 128.0, 1024)
        u0 = Field(g, boosted(g, -5.0, 4.0, 2.0) + boosted(g, 5.0, -4.0, 2.0))
        traj = evolve(u0, SolverConfig(3, 1e-3, 2.5, 0.5))
        vals = [interaction_action(f, weight_abs(1)) for f in traj.fields]
        assert vals[0] < 0 < vals[-1]

    @pytest.mark.parametrize("w", [weight_abs(2), weight_r0(1.0)])
    def test_fft_matches_direct(self, small_plane, w):
        f = moving_bumps(small_plane)
        a = interaction_action(f, w, method="fft")
        b = interaction_action(f, w, method="direct")
        assert a == pytest.approx(b, rel=1e-10)

    def test_budget(self, small_plane):
        with pytest.raises(BudgetExceeded):
            interaction_action(moving_bumps(small_plane), weight_abs(2), method="direct", cap=1000)

    @pytest.mark.parametrize("n", [1, 2])
    def test_commutator_form(self, small_line, small_plane, n):
        grid = small_line if n == 1 else small_plane
        f = moving_bumps(grid)
        a = interaction_action(f, weight_abs(n))
        assert commutator_action(f) == pytest.approx(a, rel=1e-8)


class TestCommutatorKernel:
    def test_closed_form(self):
        assert np.array_equal(commutator_kernel([1.0, 0.0], [0.0, 0.0]), [[0, 0], [0, 1]])

    def test_annihilates_displacement(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=(2, 50, 2))
        eta = commutator_kernel(x, y)
        assert np.max(np.abs(np.einsum("...jk,...k->...j", eta, x - y))) <= 1e-12

    def test_positive_semidefinite(self):
        rng = np.random.default_rng(1)
        x, y = rng.uniform(-5, 5, size=(2, 10_000, 2))
        eig = np.linalg.eigvalsh(commutator_kernel(x, y))
        assert eig.min() >= -1e-12
        assert np.allclose(eig[:, 1], 1 / np.linalg.norm(x - y, axis=-1))

    def test_rejects_coincident(self):
        with pytest.raises(ValueError):
            commutator_kernel([1.0, 2.0], [1.0, 2.0])


class TestTwoPointMomentum:
    def test_same_point(self, plane):
        d = densities(moving_bumps(plane))
        assert np.all(two_point_momentum(d, (32, 32), (32, 32)) == 0)

    def test_real_field(self, plane):
        d = densities(Field(plane, np.exp(-plane.radius**2 / 4)))
        assert np.all(two_point_momentum(d, (30, 32), (34, 36)) == 0)

    def test_degenerate(self, plane):
        u = np.exp(-plane.radius**2)
        u[0, 0] = 0.0
        with pytest.raises(DegenerateDensity):
            two_point_momentum(densities(Field(plane, u)), (0, 0), (32, 32))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_p2_form_nonnegative(self, seed):
        g = Grid(2, 16.0, 64)
        f = band_limited_field(g, seed=seed, kmax=1.0, envelope=3.0)
        assert p2_commutator_form(f, stride=2) >= -1e-10 * mass(f) ** 2


class TestErfAction:
    def test_kernels(self, line):
        z = line.coords[0]
        assert line.h * np.sum(heat_kernel(z, 0.5)) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(erf_kernel(-z, 0.5), -erf_kernel(z, 0.5))
        assert np.max(np.abs(erf_kernel(z, 0.5))) <= 0.5

    def test_real_field_p2(self, line):
        t = erf_action_terms(Field(line, np.exp(-line.coords[0] ** 2)), 3, 0.5)
        assert t.P2 == 0.0 and t.M == 0.0

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("mult", [2, 4, 8])
    def test_term_signs(self, line, seed, mult):
        f = band_limited_field(line, seed=seed, kmax=2.0, envelope=4.0)
        assert erf_action_terms(f, 3, mult * line.h).signs_ok(1e-10)

    def test_p1_limit(self, gaussian_1d):
        assert p1_limit(gaussian_1d) == pytest.approx(np.sqrt(np.pi) / 4, rel=1e-10)
        errs = [abs(erf_action_terms(gaussian_1d, 3, e).P1 - np.sqrt(np.pi) / 4) for e in (0.5, 0.25, 0.125)]
        assert errs[0] > errs[1] > errs[2]

    def test_p4_limit(self, gaussian_1d):
        target = 0.25 * np.sqrt(np.pi / 6)
        assert p4_limit(gaussian_1d, 3) == pytest.approx(target, rel=1e-10)
        errs = [abs(erf_action_terms(gaussian_1d, 3, e).P4 - target) for e in (0.5, 0.25, 0.125)]
        assert errs[0] > errs[1] > errs[2]

    def test_p2_vanishes_in_limit(self, line):
        f = Field(line, boosted(line, 0.0, 1.0, 2.0) + 0.5 * boosted(line, 3.0, -1.0))
        vals = [erf_action_terms(f, 3, e).P2 for e in (0.5, 0.25, 0.125)]
        assert vals[0] > vals[1] > vals[2]

    def test_rejects_small_epsilon(self, line):
        with pytest.raises(ValueError):
            erf_action_terms(Field(line, np.exp(-line.coords[0] ** 2)), 3, line.h)

    def test_rejects_2d(self, plane):
        with pytest.raises(ValueError):
            erf_action(Field(plane, np.exp(-plane.radius**2)), 0.5)

    def test_derivative_identity(self, small_line):
        u0 = Field(small_line, boosted(small_line, -3.0, 1.0) + boosted(small_line, 3.0, -0.5))
        tau = 2e-3
        traj = evolve(u0, SolverConfig(3, 1e-4, 2 * tau, tau))
        eps = 0.5
        dM = (erf_action(traj.fields[2], eps) - erf_action(traj.fields[0], eps)) / (2 * tau)
        assert erf_action_terms(traj.fields[1], 3, eps).total == pytest.approx(dM, rel=1e-4)


class TestBesov:
    def test_constant_modulus(self, small_plane):
        u = np.exp(1j * small_plane.coords[0])
        res = besov_double_integral(Field(small_plane, u), exterior=False)
        assert abs(res.value) <= 1e-12

    def test_width_proportionality(self, plane):
        ratios = []
        for w in (1.0, 2.0):
            f = Field(plane, np.exp(-plane.radius**2 / (2 * w * w)))
            norm = w * (np.pi / 2) ** 1.5  # squared homogeneous H^(1/2) norm of exp(-r^2/w^2)
            ratios.append(besov_double_integral(f).value / norm)
        assert ratios[0] == pytest.approx(ratios[1], rel=0.02)

    def test_quartic_scaling(self, small_plane):
        f = moving_bumps(small_plane)
        a = besov_double_integral(f).value
        b = besov_double_integral(Field(small_plane, 2 * f.values)).value
        assert b == pytest.approx(16 * a, rel=1e-12)

    def test_stratified_agrees(self, plane):
        f = Field(plane, np.exp(-plane.radius**2 / 2))
        direct = besov_double_integral(f).value
        est = besov_double_integral(f, method="stratified", samples=50_000, seed=3)
        assert est.stderr > 0 and abs(est.value - direct) <= 4 * est.stderr

    def test_stratified_deterministic(self, small_plane):
        f = moving_bumps(small_plane)
        a = besov_double_integral(f, method="stratified", samples=20_000, seed=5)
        b = besov_double_integral(f, method="stratified", samples=20_000, seed=5)
        assert a.value == b.value

    def test_budget(self, small_plane):
        with pytest.raises(BudgetExceeded):
            besov_double_integral(moving_bumps(small_plane), cap=1000)

    def test_rejects_1d(self, line):
        with pytest.raises(ValueError):
            besov_double_integral(Field(line, np.ones(line.shape)))


class TestSpacetime:
    def test_zero_trajectory(self, small_plane):
        traj = evolve(Field.zeros(small_plane), SolverConfig(3, 0.01, 0.1))
        assert interaction_lhs(traj) == 0.0

    def test_single_snapshot(self, small_plane):
        f = Field(small_plane, np.exp(-small_plane.radius**2))
        traj = Trajectory(np.array([0.0]), [f], SolverConfig(3, 0.01, 0.1), small_plane)
        with pytest.raises(ValueError):
            interaction_lhs(traj)

    @pytest.mark.parametrize("rule", ["trapezoid", "simpson"])
    def test_frozen_trajectory(self, small_plane, rule):
        f = moving_bumps(small_plane)
        times = np.linspace(0.0, 0.8, 9)
        traj = Trajectory(times, [f] * 9, SolverConfig(3, 0.1, 0.8, 0.1), small_plane)
        assert interaction_lhs(traj, rule) == pytest.approx(0.8 * correlation_density_norm(f), rel=1e-10)

    def test_lebesgue_frozen(self, small_line):
        f = Field(small_line, np.exp(-small_line.coords[0] ** 2))
        traj = Trajectory(np.array([0.0, 0.5, 1.0]), [f] * 3, SolverConfig(3, 0.5, 1.0, 0.5), small_line)
        assert spacetime_lebesgue(traj, 4, 4) == pytest.approx(np.sqrt(np.pi / 4), rel=1e-10)

    def test_densityset_type(self, plane):
        assert isinstance(densities(moving_bumps(plane)), DensitySet)

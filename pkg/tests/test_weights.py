import csv

import numpy as np
import pytest
from scipy import integrate

from nlslab.analysis import besov_double_integral
from nlslab.quadrature import outside_inverse_cube
from nlslab.spectral import Field, Grid
from nlslab.weights import (
    bilaplacian_pairing,
    convexity_certificate,
    lattice_w_mass,
    square_form,
    w_kernel,
    weight_abs,
    weight_r0,
)

LOG_R = np.logspace(-4, 3, 200)


@pytest.fixture(scope="module")
def pair_grid():
    return Grid(2, 16.0, 64)


@pytest.fixture(scope="module")
def two_bumps(pair_grid):
    x, y = pair_grid.coords
    return np.exp(-((x - 2) ** 2 + y**2)) + np.exp(-((x + 2) ** 2 + y**2) / 2)


class TestWeightAbs:
    @pytest.mark.parametrize("n", [1, 2])
    def test_values(self, n):
        w = weight_abs(n)
        assert float(w.a(2.5)) == 2.5
        assert np.all(w.a_r(LOG_R) == 1.0)

    def test_laplacian(self):
        assert float(weight_abs(2).lap_a(4.0)) == 0.25
        assert float(weight_abs(1).lap_a(4.0)) == 0.0

    def test_certificate_vacuous(self):
        rep = convexity_certificate(weight_abs(2), LOG_R)
        assert rep.passed and np.all(rep.a_rr == 0)


class TestWeightR0:
    @pytest.mark.parametrize("r0", [0.1, 1.0, 3.0])
    def test_laplacian_closed_form(self, r0):
        w = weight_r0(r0)
        assert float(w.lap_a(r0 / np.e)) == pytest.approx(2 / r0, rel=1e-15)
        assert float(w.lap_a(5 * r0)) == pytest.approx(1 / (5 * r0), rel=1e-15)

    @pytest.mark.parametrize("r0", [0.1, 1.0, 3.0])
    def test_laplacian_continuous_at_r0(self, r0):
        w = weight_r0(r0)
        assert float(w.lap_a(r0 * (1 - 1e-12))) == pytest.approx(float(w.lap_a(r0)), rel=1e-10)

    @pytest.mark.parametrize("r0", [0.1, 1.0, 3.0])
    def test_a_r_at_r0(self, r0):
        w = weight_r0(r0)
        assert float(w.a_r(r0)) == pytest.approx(0.75, abs=1e-15)
        assert w.a_r_quadrature(r0) == pytest.approx(0.75, abs=1e-10)

    def test_far_field(self):
        w = weight_r0(1.0)
        assert float(w.a_r(100.0)) == pytest.approx(0.9975, abs=1e-15)
        assert w.a_r_quadrature(100.0) == pytest.approx(0.9975, abs=1e-10)

    @pytest.mark.parametrize("r0", [0.5, 2.0])
    def test_closed_form_matches_quadrature(self, r0):
        w = weight_r0(r0)
        for r in np.logspace(-3, 3, 40) * r0:
            assert abs(float(w.a_r(r)) - w.a_r_quadrature(r)) <= 1e-10

    def test_a_integrates_a_r(self):
        w = weight_r0(0.7)
        for r in (0.2, 0.7, 3.0):
            val, _ = integrate.quad(lambda s: float(w.a_r(np.array(s))), 0, r, points=[0.7], epsabs=1e-13)
            assert float(w.a(r)) == pytest.approx(val, abs=1e-10)

    def test_origin(self):
        w = weight_r0(1.0)
        assert float(w.a(0.0)) == 0.0 and float(w.a_r(0.0)) == 0.0

    def test_invariants(self):
        w = weight_r0(0.3)
        ar = w.a_r(LOG_R)
        assert np.all(ar >= 0) and np.all(ar <= 1 + 1e-12)
        assert np.all(np.diff(ar) >= -1e-15)
        assert np.all(w.a_rr(LOG_R) >= -1e-12)

    @pytest.mark.parametrize("r0", [0.0, -1.0])
    def test_rejects_nonpositive(self, r0):
        with pytest.raises(ValueError):
            weight_r0(r0)


class TestConvexity:
    def test_certificate_passes(self):
        rep = convexity_certificate(weight_r0(1.0), np.logspace(-3, 2, 60))
        assert rep.passed and rep.min_q >= -1e-12 * rep.scale

    def test_certificate_matches_closed_form(self):
        w = weight_r0(1.0)
        r = np.logspace(-3, 2, 60)
        rep = convexity_certificate(w, r)
        assert np.allclose(rep.a_rr, w.a_rr(r), rtol=1e-8, atol=1e-12)

    def test_growth_closed_form(self):
        rep = convexity_certificate(weight_r0(1.0), np.array([np.exp(-1.0), 2.0]))
        assert rep.growth[0] == pytest.approx(1.0, abs=1e-15)
        assert rep.growth[1] == 0.0

    def test_certificate_detects_concavity(self):
        w = weight_r0(1.0)
        bad = type(w)(1.0, w.a, w.a_r, lambda r: -np.asarray(r, dtype=float), w.a_rr, "bad")
        assert not convexity_certificate(bad, np.linspace(0.1, 2, 10)).passed


class TestPairing:
    def test_w_mass_continuum(self):
        r0 = 0.5
        val, _ = integrate.quad(lambda s: 2 * np.pi / s**2, r0, 1e4 * r0, points=[10 * r0, 100 * r0], epsabs=1e-12, epsrel=1e-12, limit=200)
        assert abs(val + 2 * np.pi / (1e4 * r0) - 2 * np.pi / r0) <= 1e-8
        assert val == pytest.approx(2 * np.pi / r0, rel=1e-3)

    def test_w_mass_lattice_converges(self):
        assert lattice_w_mass(1.0, 0.01) == pytest.approx(2 * np.pi, rel=1e-2)

    def test_kernel(self):
        k = w_kernel(1.0)
        assert float(k(0.5)) == 0.0 and float(k(2.0)) == 0.125

    @pytest.mark.parametrize("r0", [0.5, 1.0, 2.0])
    def test_pairing_equals_square_form(self, pair_grid, two_bumps, r0):
        w = weight_r0(r0)
        P = bilaplacian_pairing(w, two_bumps, two_bumps, pair_grid, "lattice")
        S = square_form(w, two_bumps, pair_grid)
        assert S >= 0 and P == pytest.approx(S, rel=1e-3)

    def test_uniform_ball(self, pair_grid):
        ball = (pair_grid.radius <= 3.0).astype(float)
        w = weight_r0(1.0)
        assert bilaplacian_pairing(w, ball, ball, pair_grid, "lattice") >= 0

    def test_constant_square_form_vanishes(self, pair_grid):
        c = np.full(pair_grid.shape, 2.0)
        exterior = pair_grid.cell_volume * float(np.sum(c * c * outside_inverse_cube(pair_grid)))
        inside = square_form(weight_r0(1.0), c, pair_grid) - exterior
        assert abs(inside) <= 1e-12

    def test_r0_limit_approaches_besov(self, pair_grid, two_bumps):
        B = besov_double_integral(Field(pair_grid, np.sqrt(two_bumps))).value
        gaps = [abs(1 - 2 * bilaplacian_pairing(weight_r0(r0), two_bumps, two_bumps, pair_grid, "lattice") / B)
                for r0 in (2.0, 1.0, 0.5, 0.25)]
        assert all(a > b for a, b in zip(gaps, gaps[1:])) and gaps[-1] < 0.1

    def test_rejects_1d(self, line):
        rho = np.ones(line.shape)
        with pytest.raises(ValueError):
            bilaplacian_pairing(weight_r0(1.0), rho, rho, line)

    def test_rejects_abs_weight(self, pair_grid, two_bumps):
        with pytest.raises(ValueError):
            bilaplacian_pairing(weight_abs(2), two_bumps, two_bumps, pair_grid)


class TestExport:
    def test_csv_round_trip(self, tmp_path):
        w = weight_r0(1.0)
        r = np.array([0.1, 1.0, 10.0])
        w.export_csv(tmp_path / "w.csv", r)
        with open(tmp_path / "w.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(row["r"]) for row in rows] == list(r)
        assert float(rows[1]["a_r"]) == 0.75 and rows[0]["schema_version"] == "1"

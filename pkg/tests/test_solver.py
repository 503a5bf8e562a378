"""Caloric extension, norms of initial data, the Picard loop and scaling."""
import warnings

import numpy as np
import pytest

from tentlab.corpus import generate_field, taylor_green
from tentlab.grid import Field, SpaceTimeField, TimeGrid, make_grid
from tentlab.solver import (PicardTrace, SolverConfig, besov_norm, bmo_minus1_norm, bmo_norm,
                            caloric_extend, divergence_residual, picard_solve, residual,
                            scaling_transform, smallness_search)
from tentlab.tent import BallFamily, x_norm


@pytest.fixture(scope="module")
def g16():
    return make_grid(2, 16)


@pytest.fixture(scope="module")
def cfg16(g16):
    return SolverConfig(max_iters=20, times=TimeGrid.default(g16, per_octave=2),
                        family=BallFamily.default(g16))


def _random(g, seed=0):
    return generate_field(g, "solenoidal", seed=seed, band=4)


class TestCaloricExtension:
    def test_single_mode_decay(self, g16):
        x, y = g16.coords
        u0 = Field.from_values(g16, np.stack([np.cos(2 * x + y), -2 * np.cos(2 * x + y)]))
        T = TimeGrid.default(g16)
        U = caloric_extend(u0, T)
        exact = np.exp(-5 * T.times)[:, None, None, None] * u0.values
        assert np.abs(U.values - exact).max() < 1e-13

    def test_non_solenoidal_input_warns_and_projects(self, g16):
        u0 = generate_field(g16, "gradient", seed=1, band=4)
        with pytest.warns(UserWarning, match="divergence-free"):
            U = caloric_extend(u0)
        assert np.abs(U.coeffs).max() < 1e-13

    def test_solenoidal_input_is_silent(self, g16):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            caloric_extend(_random(g16))

    def test_scalar_rejected(self, g16):
        with pytest.raises(ValueError):
            caloric_extend(Field.zeros(g16, rank=0))


class TestInitialNorms:
    def test_zero_field(self, g16):
        z = Field.zeros(g16)
        assert bmo_minus1_norm(z) == 0 and besov_norm(z) == 0 and bmo_norm(z) == 0
        assert divergence_residual(z) == 0

    def test_constants_have_zero_norms(self, g16):
        c = Field.from_values(g16, np.ones((2,) + g16.shape) * 3.0)
        assert bmo_norm(c) < 1e-13
        assert bmo_minus1_norm(c) == 0 and besov_norm(c) < 1e-13

    def test_homogeneous_of_degree_one(self, g16):
        u = _random(g16, 4)
        for fn in (bmo_minus1_norm, besov_norm, bmo_norm):
            assert fn(u * 2.5) == pytest.approx(2.5 * fn(u), rel=1e-12)

    def test_besov_controlled_by_bmo_minus1(self, g16):
        ratios = [besov_norm(u) / bmo_minus1_norm(u) for u in (_random(g16, s) for s in range(4))]
        assert max(ratios) < 10 * min(ratios)


class TestPicard:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(tol=0)
        with pytest.raises(ValueError):
            SolverConfig(max_iters=0)

    def test_zero_data_converges_immediately(self, g16, cfg16):
        u, tr = picard_solve(Field.zeros(g16), cfg16)
        assert tr.converged and tr.iterations == 1 and np.all(u.coeffs == 0)

    def test_taylor_green_is_a_fixed_point_of_the_heat_flow(self, g16, cfg16):
        u0 = taylor_green(g16, 0.7)
        u, tr = picard_solve(u0, cfg16)
        assert tr.converged and tr.final_residual < 1e-14
        U0 = caloric_extend(u0, cfg16.times)
        assert (u - U0).l2_norm() < 1e-14 * U0.l2_norm()

    def test_small_data_converges_with_contraction(self, g16, cfg16):
        u0 = _random(g16, 2)
        u0 = u0 * (0.5 / bmo_minus1_norm(u0, cfg16.family, cfg16.times))
        u, tr = picard_solve(u0, cfg16)
        assert tr.converged
        assert max(tr.ratios) < 0.5
        assert residual(u, u0, cfg16) < 2 * cfg16.tol

    def test_residual_of_zero_is_caloric_norm(self, g16, cfg16):
        u0 = _random(g16, 3)
        zero = SpaceTimeField.zeros(g16, cfg16.times)
        U0 = caloric_extend(u0, cfg16.times)
        assert residual(zero, u0, cfg16) == pytest.approx(x_norm(U0, cfg16.family), rel=1e-13)

    def test_large_data_diverges(self, g16, cfg16):
        u0 = _random(g16, 2)
        u0 = u0 * (200.0 / bmo_minus1_norm(u0, cfg16.family, cfg16.times))
        u, tr = picard_solve(u0, cfg16)
        assert tr.status == "diverged"
        assert np.all(np.isfinite(u.coeffs))

    def test_deterministic(self, g16, cfg16):
        u0 = _random(g16, 6) * 0.3
        a, ta = picard_solve(u0, cfg16)
        b, tb = picard_solve(u0, cfg16)
        assert np.array_equal(a.coeffs, b.coeffs) and ta.to_json() == tb.to_json()

    def test_trace_ratios(self):
        tr = PicardTrace()
        for r in (1.0, 0.25, 0.05):
            tr.record(1.0, r)
        assert tr.ratios == pytest.approx([0.25, 0.2])
        assert tr.final_residual == 0.05 and not tr.converged


class TestSmallnessSearch:
    def test_degenerate_direction_rejected(self, g16, cfg16):
        with pytest.raises(ValueError):
            smallness_search(Field.zeros(g16), cfg16)

    def test_bracket_resolution(self, g16, cfg16):
        res = smallness_search(_random(g16, 2), cfg16, lo_exp=-4, hi_exp=8, bits=1)
        assert res.boundary is None
        conv = [a for a, ok in res.probes if ok]
        fail = [a for a, ok in res.probes if not ok]
        assert res.threshold == max(conv)
        assert np.log2(min(fail) / res.threshold) <= 0.5 + 1e-12


class TestScaling:
    def test_round_trip_is_exact(self, g16, cfg16):
        U = caloric_extend(_random(g16), cfg16.times)
        back = scaling_transform(scaling_transform(U, 4.0), 0.25)
        assert back.grid == U.grid and np.array_equal(back.coeffs, U.coeffs)

    def test_x_norm_invariant(self, g16, cfg16):
        U = caloric_extend(_random(g16), cfg16.times)
        V = scaling_transform(U, 2.0)
        assert x_norm(V, BallFamily.default(V.grid)) == pytest.approx(
            x_norm(U, cfg16.family), rel=1e-12)

    def test_caloric_extension_commutes(self, g16, cfg16):
        u0 = _random(g16)
        U = caloric_extend(u0, cfg16.times)
        V = scaling_transform(U, 2.0)
        u0s = Field(V.grid, u0.coeffs * 2.0)
        W = caloric_extend(u0s, V.times)
        assert np.abs(W.coeffs - V.coeffs).max() < 1e-13

    @pytest.mark.parametrize("lam", [3.0, 0.0, -2.0, 32.0])
    def test_invalid_factors(self, g16, cfg16, lam):
        U = caloric_extend(_random(g16), cfg16.times)
        with pytest.raises(ValueError):
            scaling_transform(U, lam)

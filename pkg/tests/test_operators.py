"""Heat semigroup, Leray projector and the tensor multipliers."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tentlab.corpus import generate_field, vector_corpus
from tentlab.grid import Field, differentiate, make_grid
from tentlab.operators import (MultiplierOp, ball_mask, heat_evolve, kts_apply, kts_operator_norm,
                               leray_project, offdiag_probe, oseen_kernel_check, pdiv_apply,
                               phi_regularized, set_distance, ts_apply, ts_operator_norm,
                               ts_symbol_bound)
from tentlab.solver import divergence_residual


class TestHeat:
    def test_single_mode_decay(self, grid32):
        x, y = grid32.coords
        f = Field.from_values(grid32, np.sin(2 * x) * np.cos(3 * y))
        assert np.allclose(heat_evolve(f, 0.1).values, np.exp(-1.3) * f.values, atol=1e-14)

    def test_zero_time_identity_and_negative_rejected(self, grid32, rng):
        f = Field.from_values(grid32, rng.standard_normal(grid32.shape))
        assert heat_evolve(f, 0.0) is f
        with pytest.raises(ValueError):
            heat_evolve(f, -1.0)

    def test_kernel_matches_periodized_gaussian(self):
        g = make_grid(2, 64)
        t = 0.05
        delta = np.zeros(g.shape)
        delta[0, 0] = 1 / g.cell_volume
        out = MultiplierOp.heat(t).apply(Field.from_values(g, delta)).values
        x = np.minimum(g.coords[0], g.box - g.coords[0])
        y = np.minimum(g.coords[1], g.box - g.coords[1])
        gauss = np.zeros(g.shape)
        for a in (-1, 0, 1):
            for b in (-1, 0, 1):
                gauss += np.exp(-((x + a * g.box) ** 2 + (y + b * g.box) ** 2) / (4 * t))
        gauss /= 4 * np.pi * t
        assert np.abs(out - gauss).max() < 1e-8 * gauss.max()

    @given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
    @settings(max_examples=20, deadline=None)
    def test_semigroup_law(self, t, s):
        g = make_grid(2, 16)
        f = generate_field(g, "random", seed=3, band=5)
        lhs = heat_evolve(heat_evolve(f, t), s)
        assert (lhs - heat_evolve(f, t + s)).norm() <= 1e-12 * f.norm()


class TestLeray:
    @given(st.integers(0, 10**6), st.sampled_from([2, 3]))
    @settings(max_examples=20, deadline=None)
    def test_idempotent_and_solenoidal(self, seed, dim):
        g = make_grid(dim, 16)
        u = generate_field(g, "random", seed=seed, band=5)
        p = leray_project(u)
        assert (leray_project(p) - p).spectral_norm() <= 1e-12 * p.spectral_norm()
        assert divergence_residual(p) <= 1e-12

    def test_annihilates_gradients(self, grid32):
        g = generate_field(grid32, "gradient", seed=1)
        assert leray_project(g).spectral_norm() <= 1e-13 * g.spectral_norm()

    def test_commutes_with_heat(self, grid32):
        u = generate_field(grid32, "random", seed=2)
        a = heat_evolve(leray_project(u), 0.3)
        b = leray_project(heat_evolve(u, 0.3))
        assert (a - b).norm() <= 1e-13 * u.norm()

    def test_mean_passes_through(self, grid32):
        vals = np.ones((2,) + grid32.shape)
        assert np.allclose(leray_project(Field.from_values(grid32, vals)).values, 1.0)

    def test_matrix_symbol_agrees(self, grid32):
        u = generate_field(grid32, "random", seed=4)
        assert np.allclose(MultiplierOp.leray().apply(u).coeffs, leray_project(u).coeffs, atol=1e-15)

    def test_rejects_scalar(self, grid32):
        with pytest.raises(ValueError):
            leray_project(Field.zeros(grid32, rank=0))


class TestTensorMultipliers:
    def test_phi_continuous_at_switch(self):
        r = np.array([1e-6 * (1 - 1e-9), 1e-6 * (1 + 1e-9)])
        v = phi_regularized(r)
        assert abs(v[0] - v[1]) < 1e-12
        assert phi_regularized(0.0) == 2.0

    def test_symbol_bound_value(self):
        r = np.linspace(1e-6, 5, 2_000_001)
        assert ts_symbol_bound() == pytest.approx(((1 - np.exp(-2 * r)) / np.sqrt(r)).max(), rel=1e-10)
        assert ts_symbol_bound() == pytest.approx(0.9025124681566, rel=1e-11)

    @pytest.mark.parametrize("s", [0.01, 0.1, 1.0])
    def test_ts_norm_attained_and_bounded(self, grid32, s):
        # v (x) k/|k| with v orthogonal to k at the maximizing mode attains the norm
        g = grid32
        sym = np.sqrt(g.kd2 * s) * phi_regularized(s * g.k2)
        m = np.unravel_index(np.argmax(sym), g.shape)
        khat = np.array([g.kd[a][m] for a in range(2)])
        khat /= np.linalg.norm(khat)
        v = np.array([-khat[1], khat[0]])
        c = np.zeros((2, 2) + g.shape, complex)
        neg = tuple((-np.array(m)) % g.size)
        c[(slice(None), slice(None)) + m] = 0.5 * np.outer(v, khat)
        c[(slice(None), slice(None)) + neg] = 0.5 * np.outer(v, khat)
        F = Field(g, c)
        ratio = ts_apply(F, s).norm() / F.norm()
        assert ratio == pytest.approx(ts_operator_norm(g, s), rel=1e-12)
        assert ts_operator_norm(g, s) <= ts_symbol_bound() * (1 + 1e-12)

    def test_kts_norm_bounds_random_inputs(self, grid32, rng):
        t, s = 0.05, 0.2
        bound = kts_operator_norm(grid32, t, s)
        for _ in range(5):
            F = Field.from_values(grid32, rng.standard_normal((2, 2) + grid32.shape))
            assert kts_apply(F, t, s).norm() <= bound * F.norm() * (1 + 1e-12)

    def test_kts_pointwise_kernel_bound(self, grid64):
        # ||K_{t,s}|| s^{1/2} (t+s)^{1/2} <= (2e)^{-1/2}
        for t in (0.001, 0.1, 3.0):
            for s in (0.002, 0.5, 10.0):
                val = kts_operator_norm(grid64, t, s) * np.sqrt(s * (t + s))
                assert val <= (2 * np.e) ** -0.5 * (1 + 1e-12)

    def test_pdiv_output_is_solenoidal(self, grid32, rng):
        F = Field.from_values(grid32, rng.standard_normal((2, 2) + grid32.shape))
        out = pdiv_apply(F, 0.01)
        assert np.abs(differentiate(out, "divergence").coeffs).max() < 1e-14

    def test_argument_validation(self, grid32):
        F = Field.zeros(grid32, rank=2)
        with pytest.raises(ValueError):
            pdiv_apply(F, 0.0)
        with pytest.raises(ValueError):
            ts_apply(F, -1.0)
        with pytest.raises(ValueError):
            kts_apply(F, -0.1, 1.0)
        with pytest.raises(ValueError):
            ts_apply(Field.zeros(grid32), 1.0)

    def test_compose_matrix_with_scalar(self, grid32):
        u = generate_field(grid32, "random", seed=5)
        op = MultiplierOp.leray().compose(MultiplierOp.heat(0.2))
        ref = leray_project(heat_evolve(u, 0.2))
        assert np.allclose(op(u).coeffs, ref.coeffs, atol=1e-15)


class TestKernelProbes:
    def test_oseen_ratio_bounded_across_times(self, grid64):
        bounds = [oseen_kernel_check(grid64, t).bound for t in (0.01, 0.05, 0.2)]
        assert all(np.isfinite(bounds))
        assert max(bounds) / min(bounds) < 10

    def test_oseen_rejects_nonpositive_time(self, grid32):
        with pytest.raises(ValueError):
            oseen_kernel_check(grid32, 0.0)

    def test_offdiag_decay_order(self, grid64):
        E = ball_mask(grid64, (16, 32), grid64.box / 16)
        F = ball_mask(grid64, (48, 32), grid64.box / 16)
        d = set_distance(grid64, E, F)
        rep = offdiag_probe(MultiplierOp.lap_heat, E, F, d**2 / np.array([4, 16, 64.0]),
                            vector_corpus(grid64, 2, 0))
        assert rep.fitted_order >= 2
        assert len(rep.rows()) == 3

    def test_offdiag_overlap_rejected(self, grid32):
        E = ball_mask(grid32, (8, 8), 1.0)
        with pytest.raises(ValueError):
            offdiag_probe(MultiplierOp.lap_heat, E, E, [0.1], vector_corpus(grid32, 1, 0))

    def test_set_distance_oracle(self, grid32):
        E = np.zeros(grid32.shape, bool)
        F = np.zeros(grid32.shape, bool)
        E[0, 0] = True
        F[3, 4] = True
        assert set_distance(grid32, E, F) == pytest.approx(5 * grid32.h)

"""Duhamel integrals, the three-term splitting and the bound probes."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tentlab.bilinear import (OperatorNormReport, QuadratureScheme, a2_apply, a2_apply_direct,
                              a3_apply, a3_via_r, bilinear_B, desimon_check, duhamel_A,
                              maxreg_apply, pairing, pointwise_bound_check, r_apply, schur_check,
                              with_drift, z_apply, z_tent_check)
from tentlab.corpus import spacetime_corpus, taylor_green, tensor_corpus
from tentlab.grid import SpaceTimeField, TimeGrid, make_grid
from tentlab.harness import _defect, single_mode_error
from tentlab.solver import caloric_extend


@pytest.fixture(scope="module")
def small():
    g = make_grid(2, 16)
    return g, TimeGrid.default(g, per_octave=2)


@pytest.fixture(scope="module")
def small_corpus(small):
    g, T = small
    return tensor_corpus(g, T, 2, seed=5, band=4)


class TestQuadratureScheme:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            QuadratureScheme(nodes_per_half=0)
        with pytest.raises(ValueError):
            QuadratureScheme(nodes_per_half=60, grading_panels=8)
        with pytest.raises(ValueError):
            QuadratureScheme(split=1.0)

    def test_unit_rule_integrates_polynomials(self):
        u, w = QuadratureScheme().unit_rule()
        assert np.all((u > 0) & (u < 1))
        for p in range(0, 12):
            assert np.dot(w, u**p) == pytest.approx(1 / (p + 1), rel=1e-13)

    @given(st.floats(1e-6, 1e3))
    @settings(max_examples=40, deadline=None)
    def test_nodes_weights_sum_to_t(self, t):
        s, w = QuadratureScheme().nodes(t)
        assert np.all((s > 0) & (s < t)) and np.all(w > 0)
        assert w.sum() == pytest.approx(t, rel=1e-12)

    def test_endpoint_singularities_are_resolved(self):
        # int_0^t s^{-1/2} (t - s)^{-1/2} ds = pi for every t
        s, w = QuadratureScheme().nodes(2.0)
        assert np.dot(w, 1 / np.sqrt(s * (2.0 - s))) == pytest.approx(np.pi, rel=1e-12)

    def test_panel_weights_cover_sample_span(self, small):
        _, T = small
        s, w, j, theta = QuadratureScheme().panels(T)
        assert w.sum() == pytest.approx(T.times[-1] - T.times[0], rel=1e-12)
        assert np.all((theta > 0) & (theta < 1))


class TestDuhamel:
    def test_single_mode_closed_form(self, grid32, times32):
        for mode in [(1, 0), (3, 2), (10, 15)]:
            assert single_mode_error(grid32, times32, mode, QuadratureScheme()) < 1e-8

    def test_rejects_vector_input(self, small):
        g, T = small
        with pytest.raises(ValueError):
            duhamel_A(SpaceTimeField.zeros(g, T, rank=1))

    def test_output_is_divergence_free(self, small_corpus):
        A = duhamel_A(small_corpus[0])
        div = np.einsum("ti...,i...->t...", A.coeffs, 1j * A.grid.kd)
        assert np.abs(div).max() < 1e-14 * np.abs(A.coeffs).max()

    def test_taylor_green_is_a_steady_euler_flow(self, grid32, times32):
        u = caloric_extend(taylor_green(grid32), times32)
        assert np.abs(bilinear_B(u, u).coeffs).max() < 1e-14

    def test_bilinear_is_symmetric_in_swap_of_divergence_free_inputs(self, small):
        g, T = small
        u, v = (caloric_extend(taylor_green(g, a), T) for a in (1.0, 0.5))
        assert (bilinear_B(u, v) - bilinear_B(v, u)).l2_norm() < 1e-14


class TestMaximalRegularity:
    def test_time_constant_mode_closed_form(self, small):
        g, T = small
        x, y = g.coords
        f0 = np.sin(2 * x + y)
        f = SpaceTimeField.from_values(g, T, np.broadcast_to(f0, (T.count,) + g.shape))
        out = maxreg_apply(f).values
        exact = np.expm1(-5.0 * T.times)[:, None, None] * f0
        assert np.abs(out - exact).max() < 1e-9

    def test_desimon_ratio_below_bound(self, small):
        g, T = small
        data = spacetime_corpus(g, T, 4, seed=3, rank=1, band=4)
        rep = desimon_check(data)
        assert rep.finite and rep.max_ratio <= 2.05


class TestSplitting:
    def test_defect_small(self, small_corpus):
        assert _defect(small_corpus[0], QuadratureScheme()) < 1e-3

    def test_defect_shrinks_with_nodes(self, small_corpus):
        a = small_corpus[0]
        coarse = _defect(a, QuadratureScheme(nodes_per_half=16))
        fine = _defect(a, QuadratureScheme(nodes_per_half=64))
        assert fine < 0.5 * coarse

    def test_tail_term_two_routes(self, small_corpus):
        a = small_corpus[1]
        ref = a2_apply(a)
        assert (a2_apply_direct(a) - ref).l2_norm() / ref.l2_norm() < 1e-10

    def test_third_term_via_kernel_operator(self, small_corpus):
        a = small_corpus[0]
        ref = a3_apply(a)
        assert (a3_via_r(a) - ref).l2_norm() / ref.l2_norm() < 1e-10

    def test_r_of_scaled_input_converges_to_third_term(self, small):
        # interpolating s^{1/2} alpha instead of alpha differs at second order in the log step
        g, _ = small
        gaps = []
        for per_octave in (2, 4):
            T = TimeGrid.default(g, per_octave=per_octave)
            a = tensor_corpus(g, T, 1, seed=5, band=4)[0]
            ref = a3_apply(a)
            gaps.append((r_apply(a.scale_time(0.5)) - ref).l2_norm() / ref.l2_norm())
        assert gaps[0] < 1e-2 and gaps[1] < 0.35 * gaps[0]


class TestProbes:
    def test_z_maps_tensors_to_vectors(self, small_corpus):
        out = z_apply(small_corpus[0])
        assert out.rank == 1 and len(out) == len(small_corpus[0])
        assert z_tent_check(small_corpus).finite

    def test_pointwise_bound_finite(self, small_corpus):
        assert pointwise_bound_check(small_corpus).finite

    def test_zero_inputs_are_skipped(self, small):
        g, T = small
        rep = z_tent_check([SpaceTimeField.zeros(g, T, rank=2)])
        assert rep.per_sample == [] and not rep.finite

    def test_drift_attaches_ratio(self):
        fine = OperatorNormReport("Z", "a", "b", 0, [1.0, 3.0])
        coarse = OperatorNormReport("Z", "a", "b", 0, [2.0])
        assert with_drift(fine, coarse).drift == pytest.approx(1.5)
        assert fine.to_json()["drift"] == pytest.approx(1.5)

    def test_pairing_is_symmetric(self, small_corpus):
        a, b = small_corpus
        assert pairing(a, b) == pytest.approx(pairing(b, a), rel=1e-13)
        assert pairing(a, a) > 0


class TestSchur:
    def test_beta_range_enforced(self, small):
        g, T = small
        for beta in (0.0, -0.5, 0.3):
            with pytest.raises(ValueError):
                schur_check(g, T, beta)

    def test_kernel_constant_bounded(self, small):
        g, T = small
        rep = schur_check(g, T, -0.25)
        assert rep.kernel_constant <= (2 * np.e) ** -0.5 * (1 + 1e-12)
        assert np.isfinite(rep.sup_over_s) and np.isfinite(rep.sup_over_t)

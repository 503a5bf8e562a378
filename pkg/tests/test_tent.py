"""Tent norms, cone functionals, Carleson functionals and stopping heights."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tentlab.corpus import spacetime_corpus
from tentlab.grid import SpaceTimeField, TimeGrid, make_grid, torus_distance2
from tentlab.tent import (BallFamily, ConeIndex, ball_averages, carleson_embedding_check,
                          carleson_functional, carleson_tent_comparison, cauchy_schwarz_check,
                          default_nu, hl_maximal, nontangential_max, pairing_check,
                          set_tent_distance, square_function, stopping_height,
                          stopping_set_fraction, tent_masses, tent_membership, tent_norm,
                          truncated_square_functions, x_norm, y_norm)


def _const(grid, times, value):
    return SpaceTimeField.from_values(grid, times, np.full((times.count,) + grid.shape, value))


def _field(grid, times, seed, kind="mixed"):
    return spacetime_corpus(grid, times, 1, seed, rank=1, kind=kind, band=5)[0]


class TestBallFamily:
    def test_default_radii_double_to_half_box(self, grid32):
        fam = BallFamily.default(grid32)
        assert fam.radii[0] == pytest.approx(2 * grid32.h)
        assert fam.radii[-1] == pytest.approx(grid32.box / 2)
        assert np.allclose(np.diff(np.log2(fam.radii)), 1)
        assert fam.stride == 2

    def test_validation(self, grid32):
        with pytest.raises(ValueError):
            BallFamily(grid32, 3, (1.0,))
        with pytest.raises(ValueError):
            BallFamily(grid32, 2, ())
        with pytest.raises(ValueError):
            BallFamily(grid32, 2, (grid32.box,))

    def test_ball_is_open(self, grid32):
        fam = BallFamily.default(grid32)
        offs = fam.disc_offsets(2 * grid32.h)
        assert len(offs) == 9  # |m|^2 < 4: the 3x3 block

    def test_ball_averages_of_constant(self, grid32, family32):
        assert np.allclose(ball_averages(np.full(grid32.shape, 2.5), family32), 2.5)

    def test_maximal_function_dominates(self, grid32, family32, rng):
        f = rng.standard_normal(grid32.shape)
        assert np.all(hl_maximal(f, family32) >= ball_averages(np.abs(f), family32).min() - 1e-12)


class TestTentNorm:
    def test_constant_exact(self, grid32, times32, family32):
        F = _const(grid32, times32, 3.0)
        R = grid32.box / 2
        assert tent_norm(F, 2, family32).value == pytest.approx(3 * R, rel=1e-12)
        assert tent_norm(F, 1, family32).value == pytest.approx(3 * R**2, rel=1e-12)

    def test_table_and_json(self, grid32, times32, family32, tmp_path):
        rep = tent_norm(_field(grid32, times32, 1), 2, family32)
        assert rep.table.shape == (len(family32.radii), len(family32.centers))
        assert rep.to_json()["norm"] == "T^inf,2"
        rep.write_table(tmp_path / "t.csv")
        assert len((tmp_path / "t.csv").read_text().splitlines()) == rep.table.size + 1

    def test_rejects_other_exponents(self, grid32, times32, family32):
        with pytest.raises(ValueError):
            tent_norm(_const(grid32, times32, 1.0), 3, family32)

    def test_brute_force_single_ball(self, grid32, times32, family32):
        F = _field(grid32, times32, 2)
        rep = tent_norm(F, 2, family32)
        i, c = 2, 5
        R, center = family32.radii[i], family32.centers[c]
        idx = np.argwhere(np.ones(grid32.shape, bool))
        inside = (torus_distance2(grid32, idx, center) < R * R * (1 - 1e-12)).reshape(grid32.shape)
        w = times32.interval_weights(R * R)
        dens = np.tensordot(w, F.magnitude() ** 2, axes=1)
        assert rep.table[i, c] == pytest.approx(dens[inside].mean(), rel=1e-12)

    def test_x_and_y_norms_nonnegative(self, grid32, times32, family32):
        F = _field(grid32, times32, 3)
        assert x_norm(F, family32) > 0
        assert y_norm(F, family32) > 0
        assert x_norm(F * 0.0, family32) == 0


class TestConeFunctionals:
    def test_square_function_matches_fft_route(self, grid32, times32):
        F = _field(grid32, times32, 4)
        assert np.allclose(square_function(F), truncated_square_functions(F)[-1], rtol=1e-12)

    def test_square_function_brute_force(self, grid32, times32):
        F = _field(grid32, times32, 5)
        S = square_function(F)
        w = times32.cell_weights()
        mag2 = F.magnitude() ** 2
        idx = np.argwhere(np.ones(grid32.shape, bool))
        for x in ([0, 0], [7, 19]):
            d2 = torus_distance2(grid32, idx, np.array(x)).reshape(grid32.shape)
            tot = sum(w[j] * times32.times[j] ** -1 * mag2[j][d2 <= times32.times[j] * (1 + 1e-12)].sum()
                      for j in range(times32.count)) * grid32.cell_volume
            assert S[tuple(x)] == pytest.approx(np.sqrt(tot), rel=1e-12)

    def test_nontangential_max_brute_force(self, grid32, times32):
        F = _field(grid32, times32, 6)
        Nf = nontangential_max(F)
        mag = F.magnitude()
        idx = np.argwhere(np.ones(grid32.shape, bool))
        d2 = torus_distance2(grid32, idx, np.array([3, 11])).reshape(grid32.shape)
        ref = max(mag[j][d2 <= times32.times[j] * (1 + 1e-12)].max(initial=0) for j in range(times32.count))
        assert Nf[3, 11] == pytest.approx(ref, rel=1e-14)

    def test_constant_nontangential_max(self, grid32, times32):
        assert np.allclose(nontangential_max(_const(grid32, times32, 2.0)), 2.0)

    def test_cone_first_level_monotone_in_distance(self, grid32, times32):
        cone = ConeIndex(grid32, times32)
        d2 = torus_distance2(grid32, cone.offsets, np.zeros(2, int))
        ok = cone.first_level >= 0
        order = np.argsort(d2[ok])
        assert np.all(np.diff(cone.first_level[ok][order]) >= 0)

    @given(st.integers(0, 10**6), st.integers(0, 10**6))
    @settings(max_examples=10, deadline=None)
    def test_cauchy_schwarz_exact(self, s1, s2):
        g = make_grid(2, 16)
        T = TimeGrid.default(g)
        F = spacetime_corpus(g, T, 1, s1, rank=1, band=5)[0]
        G = spacetime_corpus(g, T, 1, s2, rank=1, band=5)[0]
        assert cauchy_schwarz_check(F, G) <= 1 + 1e-10


class TestTents:
    def test_membership_brute_force(self, grid32, times32):
        R = 5 * grid32.h
        mem = tent_membership(grid32, times32, R)
        offs = grid32.offsets()
        d = np.sqrt(torus_distance2(grid32, offs, np.zeros(2, int)))
        outside = d >= R * (1 - 1e-12)
        dist = np.array([np.sqrt(torus_distance2(grid32, offs[outside], o).min()) for o in offs])
        ref = times32.times[:, None] <= dist[None] ** 2 * (1 + 1e-12)
        assert np.array_equal(mem.reshape(times32.count, -1), ref)

    def test_full_set_has_infinite_distance(self, grid32):
        assert np.all(np.isinf(set_tent_distance(grid32, np.ones(grid32.shape, bool))))

    def test_masses_of_unit_density(self, grid32, times32, family32):
        mu = np.ones((times32.count,) + grid32.shape)
        masses = tent_masses(mu, times32, family32)
        R = family32.radii[2]
        mem = tent_membership(grid32, times32, R)
        w = times32.cell_weights() * grid32.cell_volume
        assert masses[2, 0] == pytest.approx(float(np.sum(mem * w[:, None, None])), rel=1e-12)

    def test_carleson_of_constant_below_tent_norm(self, grid32, times32, family32):
        F = _const(grid32, times32, 1.0)
        c = carleson_functional(F, family32).max()
        assert c <= tent_norm(F, 1, family32).value

    def test_comparison_with_half_radius_family(self, grid64):
        T = TimeGrid.default(grid64)
        fam = BallFamily.default(grid64)
        F = spacetime_corpus(grid64, T, 1, 7, rank=1)[0]
        r = carleson_tent_comparison(F, fam)
        assert 0.25 <= r <= 4

    def test_embedding_and_pairing_finite(self, grid32, times32, family32):
        F, G = _field(grid32, times32, 8), _field(grid32, times32, 9)
        emb = carleson_embedding_check(F, G.magnitude() ** 2, family32)
        pair = pairing_check(F, G, family32)
        assert np.isfinite(emb.ratio) and np.isfinite(pair.ratio)
        assert not emb.vacuous

    def test_zero_denominator_is_vacuous(self, grid32, times32, family32):
        Z = _const(grid32, times32, 0.0)
        res = pairing_check(Z, Z, family32)
        assert res.vacuous and np.isnan(res.ratio)


class TestStoppingHeight:
    def test_default_nu(self):
        assert default_nu(2) == 900.0 and default_nu(3) == 2700.0

    def test_huge_nu_reaches_top(self, grid32, times32, family32):
        F = _field(grid32, times32, 10, kind="caloric")
        h = stopping_height(F, nu=1e12, family=family32)
        assert np.allclose(h, np.sqrt(times32.t_max))

    def test_default_nu_covers_family_balls(self, grid32, times32, family32):
        F = _field(grid32, times32, 11, kind="caloric")
        h = stopping_height(F, family=family32)
        assert stopping_set_fraction(h, family32).min() >= 0.99

    def test_rejects_nonpositive_nu(self, grid32, times32, family32):
        with pytest.raises(ValueError):
            stopping_height(_field(grid32, times32, 1), nu=0.0, family=family32)

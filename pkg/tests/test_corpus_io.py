"""Seeded field generators and serialization round trips."""
import numpy as np
import pytest

from tentlab.corpus import (KINDS, generate_field, random_scalar, spacetime_corpus, taylor_green,
                            vector_corpus)
from tentlab.grid import Field, TimeGrid, make_grid
from tentlab.io import (field_from_bytes, field_from_json, field_to_bytes, field_to_json,
                        read_field, read_spacetime, write_field, write_spacetime)
from tentlab.solver import divergence_residual


class TestGenerators:
    @pytest.mark.parametrize("kind", KINDS)
    def test_kinds_are_real_and_mean_free(self, grid32, kind):
        f = generate_field(grid32, kind, seed=2)
        assert f.rank == 1
        assert np.abs(f.coeffs[(slice(None), 0, 0)]).max() < 1e-15
        assert np.allclose(f.values.imag if np.iscomplexobj(f.values) else 0, 0)

    def test_solenoidal_and_gradient(self, grid32):
        assert divergence_residual(generate_field(grid32, "solenoidal", seed=1)) < 1e-14
        assert divergence_residual(taylor_green(grid32)) < 1e-14
        g = generate_field(grid32, "gradient", seed=1)
        curl = g.grid.kd[0] * g.coeffs[1] - g.grid.kd[1] * g.coeffs[0]
        assert np.abs(curl).max() < 1e-14

    def test_unit_rms(self, grid32):
        f = generate_field(grid32, "random", seed=3)
        assert np.sqrt(np.sum(np.abs(f.coeffs) ** 2)) == pytest.approx(1.0, rel=1e-13)

    def test_deterministic_and_seed_sensitive(self, grid32):
        a, b = generate_field(grid32, "random", 7), generate_field(grid32, "random", 7)
        c = generate_field(grid32, "random", 8)
        assert np.array_equal(a.coeffs, b.coeffs) and not np.allclose(a.coeffs, c.coeffs)

    def test_same_continuum_field_at_every_resolution(self, grid32, grid64):
        a = generate_field(grid32, "solenoidal", seed=4)
        b = generate_field(grid64, "solenoidal", seed=4)
        assert np.allclose(a.values, b.values[:, ::2, ::2], atol=1e-14)

    def test_unknown_kind_and_unresolved_band(self, grid32):
        with pytest.raises(ValueError):
            generate_field(grid32, "vortex")
        with pytest.raises(ValueError):
            random_scalar(grid32, 0, band=11)
        with pytest.raises(ValueError):
            spacetime_corpus(grid32, TimeGrid.default(grid32), 1, 0, kind="other")

    def test_vector_corpus_size(self, grid32):
        fields = vector_corpus(grid32, 3, seed=1, kind="solenoidal")
        assert len(fields) == 3 and not np.allclose(fields[0].coeffs, fields[1].coeffs)

    @pytest.mark.parametrize("rank", [0, 1, 2])
    def test_spacetime_ranks(self, grid32, times32, rank):
        (u,) = spacetime_corpus(grid32, times32, 1, seed=0, rank=rank)
        assert u.rank == rank and len(u) == times32.count

    def test_caloric_corpus_solves_heat_equation(self, grid32, times32):
        (u,) = spacetime_corpus(grid32, times32, 1, seed=0, rank=0, kind="caloric")
        decay = np.exp(-(times32.times[1] - times32.times[0]) * grid32.k2)
        assert np.allclose(u.coeffs[1], decay * u.coeffs[0], atol=1e-15)


class TestSerialization:
    def _fields(self):
        g2, g3 = make_grid(2, 16, 3.0), make_grid(3, 8)
        rng = np.random.default_rng(0)
        return [Field.from_values(g2, rng.standard_normal((16, 16))),
                Field.from_values(g2, rng.standard_normal((2, 16, 16))),
                Field.from_values(g3, rng.standard_normal((3, 3, 8, 8, 8)))]

    def test_binary_round_trip(self):
        for f in self._fields():
            back = field_from_bytes(field_to_bytes(f))
            assert back.grid == f.grid and np.allclose(back.values, f.values, atol=1e-14)

    def test_binary_layout(self):
        f = self._fields()[1]
        raw = np.frombuffer(field_to_bytes(f), dtype="<f8")
        assert list(raw[:4]) == [2, 16, 3.0, 2]
        assert np.array_equal(raw[4:].reshape(2, 16, 16), f.values)

    def test_truncated_and_trailing_rejected(self):
        data = field_to_bytes(self._fields()[0])
        with pytest.raises(ValueError, match="truncated"):
            field_from_bytes(data[:-8])
        with pytest.raises(ValueError, match="trailing"):
            field_from_bytes(data + bytes(8))

    def test_bad_component_count(self):
        raw = np.array([2, 4, 1.0, 3] + [0.0] * 48, dtype="<f8").tobytes()
        with pytest.raises(ValueError):
            field_from_bytes(raw)

    def test_file_round_trip(self, tmp_path):
        f = self._fields()[2]
        write_field(tmp_path / "f.bin", f)
        assert np.allclose(read_field(tmp_path / "f.bin").values, f.values, atol=1e-14)

    def test_json_round_trip_and_shape_check(self):
        f = self._fields()[1]
        assert np.allclose(field_from_json(field_to_json(f)).values, f.values, atol=1e-14)
        bad = field_to_json(f).replace('"components": 2', '"components": 4')
        with pytest.raises(ValueError):
            field_from_json(bad)

    def test_spacetime_round_trip(self, tmp_path, grid32, times32):
        (u,) = spacetime_corpus(grid32, times32, 1, seed=1, rank=1)
        write_spacetime(tmp_path / "u.bin", u)
        back = read_spacetime(tmp_path / "u.bin")
        assert back.times == u.times and np.allclose(back.coeffs, u.coeffs, atol=1e-15)
        with open(tmp_path / "u.bin", "ab") as fh:
            fh.write(bytes(8))
        with pytest.raises(ValueError):
            read_spacetime(tmp_path / "u.bin")

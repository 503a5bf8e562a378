"""Seeded test fields.

Random fields are drawn on a fixed band of integer modes ``|m_i| <= band``
independently of the grid size, so the same seed yields the same continuum
field at every resolution that resolves the band.
"""
from __future__ import annotations

import numpy as np

from .grid import Field, Grid, SpaceTimeField, TimeGrid
from .operators import heat_coeffs, leray_coeffs

__all__ = ["KINDS", "generate_field", "random_scalar", "spacetime_corpus", "tensor_corpus",
           "vector_corpus", "taylor_green"]

KINDS = ("random", "taylor-green", "gradient", "solenoidal")
DEFAULT_BAND = 8


def _band_coeffs(grid: Grid, rng: np.random.Generator, ncomp: int, spectrum_exp: float,
                 band: int) -> np.ndarray:
    if band > grid.size // 3:
        raise ValueError(f"band {band} is not resolved by N={grid.size}")
    n = grid.dim
    m = np.arange(-band, band + 1)
    shape = (ncomp,) + (len(m),) * n
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mesh = np.meshgrid(*([m] * n), indexing="ij")
    kmag = np.sqrt(sum(mm.astype(float) ** 2 for mm in mesh)) * 2 * np.pi / grid.box
    safe = np.where(kmag > 0, kmag, 1.0)
    amp = np.where(kmag > 0, safe ** (-spectrum_exp), 0.0)
    raw *= amp
    c = np.zeros((ncomp,) + grid.shape, dtype=complex)
    idx = np.ix_(*([m % grid.size] * n))
    c[(slice(None),) + idx] = raw
    neg = (slice(None),) + grid.conj_index
    c = 0.5 * (c + np.conj(c[neg]))
    c[(slice(None),) + (0,) * n] = 0
    return c


def _unit_rms(c: np.ndarray, grid: Grid) -> np.ndarray:
    rms = np.sqrt(np.sum(np.abs(c) ** 2))
    return c / rms if rms > 0 else c


def random_scalar(grid: Grid, seed: int, spectrum_exp: float | None = None,
                  band: int = DEFAULT_BAND) -> Field:
    exp = (grid.dim + 1) / 2 if spectrum_exp is None else spectrum_exp
    rng = np.random.default_rng(seed)
    return Field(grid, _unit_rms(_band_coeffs(grid, rng, 1, exp, band), grid)[0])


def taylor_green(grid: Grid, amplitude: float = 1.0) -> Field:
    """``A (sin x1 cos x2, -cos x1 sin x2[, 0])`` scaled to the box (times ``cos x3`` in 3D)."""
    x = grid.coords * (2 * np.pi / grid.box)
    if grid.dim == 2:
        v = np.stack([np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1])])
    else:
        cz = np.cos(x[2])
        v = np.stack([np.sin(x[0]) * np.cos(x[1]) * cz, -np.cos(x[0]) * np.sin(x[1]) * cz,
                      np.zeros(grid.shape)])
    return Field.from_values(grid, amplitude * v)


def generate_field(grid: Grid, kind: str, seed: int = 0, spectrum_exp: float | None = None,
                   band: int = DEFAULT_BAND) -> Field:
    """Seeded vector field of the given ``kind`` with unit RMS coefficient norm.

    ``random`` has coefficients ``|k|^{-spectrum_exp}`` (default ``(n+1)/2``)
    with seeded complex Gaussian factors, Hermitian-symmetrized and mean-zero;
    ``solenoidal`` is its Leray projection; ``gradient`` is the gradient of a
    random scalar.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown field kind {kind!r}; expected one of {KINDS}")
    if kind == "taylor-green":
        return taylor_green(grid)
    exp = (grid.dim + 1) / 2 if spectrum_exp is None else spectrum_exp
    rng = np.random.default_rng(seed)
    if kind == "gradient":
        phi = _band_coeffs(grid, rng, 1, exp + 1, band)[0]
        return Field(grid, _unit_rms(1j * grid.kd * phi, grid))
    c = _band_coeffs(grid, rng, grid.dim, exp, band)
    if kind == "solenoidal":
        c = leray_coeffs(c, grid)
    return Field(grid, _unit_rms(c, grid))


def _profiles(times: TimeGrid, count: int, rng) -> np.ndarray:
    """Smooth time profiles in ``log t``: ``1, cos(a log t + b), ...``."""
    lt = np.log(times.times)
    rows = [np.ones_like(lt)]
    for _ in range(count - 1):
        a, b = rng.uniform(0.2, 0.8), rng.uniform(0, 2 * np.pi)
        rows.append(np.cos(a * lt + b))
    return np.stack(rows)


def spacetime_corpus(grid: Grid, times: TimeGrid, size: int, seed: int, rank: int = 2,
                     kind: str = "mixed", band: int = DEFAULT_BAND,
                     spectrum_exp: float | None = None) -> list[SpaceTimeField]:
    """Smooth random space-time fields.

    ``kind="mixed"``: ``sum_i c_i(log t) g_i`` with three random fields ``g_i``;
    ``kind="caloric"``: ``exp(t Lap) g``. ``rank`` selects scalar, vector or
    tensor values.
    """
    if kind not in ("mixed", "caloric"):
        raise ValueError(f"unknown space-time kind {kind!r}")
    exp = (grid.dim + 1) / 2 if spectrum_exp is None else spectrum_exp
    ncomp = (1, grid.dim, grid.dim * grid.dim)[rank]
    comp_shape = ((), (grid.dim,), (grid.dim, grid.dim))[rank]
    out = []
    for i in range(size):
        rng = np.random.default_rng([seed, i])
        if kind == "caloric":
            g = _unit_rms(_band_coeffs(grid, rng, ncomp, exp, band), grid).reshape(comp_shape + grid.shape)
            c = heat_coeffs(np.broadcast_to(g, (times.count,) + g.shape), grid, times.times)
        else:
            gs = [_unit_rms(_band_coeffs(grid, rng, ncomp, exp, band), grid).reshape(comp_shape + grid.shape)
                  for _ in range(3)]
            prof = _profiles(times, 3, rng)
            c = np.einsum("it,i...->t...", prof, np.stack(gs))
        out.append(SpaceTimeField(grid, times, c))
    return out


def tensor_corpus(grid: Grid, times: TimeGrid, size: int, seed: int, **kw) -> list[SpaceTimeField]:
    return spacetime_corpus(grid, times, size, seed, rank=2, **kw)


def vector_corpus(grid: Grid, size: int, seed: int, kind: str = "random", **kw) -> list[Field]:
    return [generate_field(grid, kind, seed=seed * 1000 + i, **kw) for i in range(size)]

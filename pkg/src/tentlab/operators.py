"""Semigroup-type Fourier multipliers and kernel probes.

Every operator acts on coefficient arrays whose trailing ``dim`` axes are the
spectral grid. Odd symbols (derivatives, the Leray projector) use the
Nyquist-free wavevector ``grid.kd``; even symbols (the heat semigroup) use the
full ``|k|**2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import Field, Grid, torus_distance2

__all__ = [
    "MultiplierOp",
    "OffDiagReport",
    "KernelReport",
    "heat_evolve",
    "leray_project",
    "pdiv_apply",
    "ts_apply",
    "kts_apply",
    "oseen_kernel_check",
    "offdiag_probe",
    "phi_regularized",
    "ts_symbol_bound",
    "ts_operator_norm",
    "kts_operator_norm",
    "heat_coeffs",
    "leray_coeffs",
    "pdiv_coeffs",
    "ball_mask",
]


def _spatial(grid: Grid, arr: np.ndarray, lead: int) -> np.ndarray:
    """Reshape a spatial symbol to broadcast against ``lead`` leading axes."""
    return arr.reshape((1,) * lead + arr.shape)


def heat_coeffs(c: np.ndarray, grid: Grid, t) -> np.ndarray:
    """Multiply coefficients by ``exp(-t |k|^2)``; ``t`` may be a vector over axis 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("heat time must be non-negative")
    if t.ndim == 0:
        return c * np.exp(-float(t) * grid.k2)
    sym = np.exp(-t.reshape((-1,) + (1,) * grid.dim) * grid.k2)
    return c * sym.reshape((len(t),) + (1,) * (c.ndim - 1 - grid.dim) + grid.shape)


def leray_coeffs(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Apply ``I - kk^T/|k|^2`` to vector coefficients (component axis at ``-dim-1``)."""
    kd, kd2 = grid.kd, grid.kd2
    inv = np.divide(1.0, kd2, out=np.zeros_like(kd2), where=kd2 > 0)
    lead = c.ndim - grid.dim - 1
    kk = _spatial(grid, kd, lead)
    dot = np.sum(kk * c, axis=lead, keepdims=True)
    return c - kk * (dot * inv)


def _div_rows(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Row-wise divergence of tensor coefficients, ``sum_j i k_j c_ij``."""
    lead = c.ndim - grid.dim - 2
    ik = 1j * _spatial(grid, grid.kd, lead)
    return np.sum(c * ik[(slice(None),) * lead + (None,)], axis=lead + 1)


def pdiv_coeffs(c: np.ndarray, grid: Grid) -> np.ndarray:
    """``P div`` on tensor coefficients, rows contracted."""
    return leray_coeffs(_div_rows(c, grid), grid)


def _check_rank(f: Field, rank: int, name: str):
    if f.rank != rank:
        raise ValueError(f"{name} expects a rank-{rank} field, got rank {f.rank}")


def heat_evolve(f: Field, t: float) -> Field:
    """Heat semigroup ``exp(t Laplacian)`` applied componentwise."""
    if t < 0:
        raise ValueError(f"heat time must be non-negative, got {t}")
    if t == 0:
        return f
    return f.with_coeffs(heat_coeffs(f.coeffs, f.grid, t))


def leray_project(u: Field) -> Field:
    """Leray projection onto divergence-free fields; the mean passes through."""
    _check_rank(u, 1, "leray_project")
    return u.with_coeffs(leray_coeffs(u.coeffs, u.grid))


def pdiv_apply(alpha: Field, tau: float) -> Field:
    """``exp(tau Laplacian) P div alpha`` as a single multiplier."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    _check_rank(alpha, 2, "pdiv_apply")
    return alpha.with_coeffs(heat_coeffs(pdiv_coeffs(alpha.coeffs, alpha.grid), alpha.grid, tau))


def phi_regularized(r: np.ndarray) -> np.ndarray:
    """``(1 - exp(-2r)) / r`` with its limit 2 at ``r = 0``; series below 1e-6."""
    r = np.asarray(r, dtype=float)
    small = r < 1e-6
    safe = np.where(small, 1.0, r)
    out = -np.expm1(-2.0 * safe) / safe
    series = 2.0 - 2.0 * r + (4.0 / 3.0) * r**2
    return np.where(small, series, out)


def ts_coeffs(c: np.ndarray, grid: Grid, s: float) -> np.ndarray:
    """Regularized multiplier ``P s^{1/2} div (s Lap)^{-1} (I - exp(2 s Lap))``."""
    factor = -phi_regularized(s * grid.k2) * np.sqrt(s)
    return leray_coeffs(_div_rows(c * factor, grid), grid)


def ts_apply(f: Field, s: float) -> Field:
    """Apply the regularized operator at scale ``s`` to a tensor field (rows)."""
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    _check_rank(f, 2, "ts_apply")
    return f.with_coeffs(ts_coeffs(f.coeffs, f.grid, s))


def kts_coeffs(c: np.ndarray, grid: Grid, t: float, s: float) -> np.ndarray:
    return heat_coeffs(pdiv_coeffs(c, grid), grid, t + s) / np.sqrt(s)


def kts_apply(f: Field, t: float, s: float) -> Field:
    """``exp((t+s) Lap) P s^{-1/2} div`` on a tensor field."""
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    _check_rank(f, 2, "kts_apply")
    return f.with_coeffs(kts_coeffs(f.coeffs, f.grid, t, s))


def ts_symbol_bound() -> float:
    """``sup_{r>0} (1 - exp(-2r)) / sqrt(r)``."""
    res = minimize_scalar(lambda r: -(-np.expm1(-2 * r)) / np.sqrt(r),
                          bounds=(1e-3, 10.0), method="bounded",
                          options={"xatol": 1e-12})
    return float(-res.fun)


def ts_operator_norm(grid: Grid, s: float) -> float:
    """Exact L2 operator norm of the regularized multiplier on the discrete mode set."""
    sym = np.sqrt(grid.kd2 * s) * phi_regularized(s * grid.k2)
    return float(sym.max())


def kts_operator_norm(grid: Grid, t: float, s: float) -> float:
    """Exact L2 operator norm ``s^{-1/2} max |k| exp(-(t+s)|k|^2)`` over the mode set."""
    sym = np.sqrt(grid.kd2) * np.exp(-(t + s) * grid.k2)
    return float(sym.max() / np.sqrt(s))


@dataclass(frozen=True)
class MultiplierOp:
    """A Fourier multiplier given by its symbol on a grid.

    ``symbol(grid)`` returns a scalar array of the grid shape or an ``(n, n)``
    matrix array ``(n, n, N, ..., N)`` acting on vector coefficients.
    """

    symbol: Callable[[Grid], np.ndarray]
    label: str = "multiplier"

    def apply(self, f: Field) -> Field:
        sym = self.symbol(f.grid)
        if sym.shape == f.grid.shape:
            return f.with_coeffs(f.coeffs * sym)
        if f.rank != 1:
            raise ValueError("matrix symbols act on vector fields")
        return f.with_coeffs(np.einsum("ij...,j...->i...", sym, f.coeffs))

    def compose(self, other: "MultiplierOp") -> "MultiplierOp":
        """``self o other``."""
        def sym(grid):
            a, b = self.symbol(grid), other.symbol(grid)
            if a.shape == grid.shape or b.shape == grid.shape:
                return a * b
            return np.einsum("ij...,jk...->ik...", a, b)
        return MultiplierOp(sym, f"{self.label}*{other.label}")

    __call__ = apply

    @staticmethod
    def heat(t: float) -> "MultiplierOp":
        return MultiplierOp(lambda g: np.exp(-t * g.k2), f"heat({t:g})")

    @staticmethod
    def leray() -> "MultiplierOp":
        def sym(g):
            inv = np.divide(1.0, g.kd2, out=np.zeros_like(g.kd2), where=g.kd2 > 0)
            eye = np.eye(g.dim).reshape((g.dim, g.dim) + (1,) * g.dim)
            return eye - g.kd[:, None] * g.kd[None, :] * inv
        return MultiplierOp(sym, "leray")

    @staticmethod
    def lap_heat(t: float) -> "MultiplierOp":
        """``t Lap exp(t Lap)``."""
        return MultiplierOp(lambda g: -t * g.k2 * np.exp(-t * g.k2), f"tLap-heat({t:g})")


def ball_mask(grid: Grid, center, radius: float) -> np.ndarray:
    """Open torus ball ``dist(x, center) < radius``; ``center`` in index units."""
    idx = np.stack(np.indices(grid.shape), axis=-1)
    d2 = torus_distance2(grid, idx, np.asarray(center))
    return d2 < radius**2 * (1 - 1e-12)


@dataclass
class KernelReport:
    """Rows ``{t, d, ratio, bound}`` of a kernel evaluation."""

    t: float
    distances: np.ndarray
    values: np.ndarray
    ratios: np.ndarray
    bound: float

    def rows(self) -> list[dict]:
        return [{"t": self.t, "d": float(d), "ratio": float(r), "bound": self.bound}
                for d, r in zip(self.distances, self.ratios)]

    def tail_monotone(self, start: float, slack: float = 0.1) -> bool:
        """Ratios (as a function of distance) beyond ``start`` never rise by more than ``slack``."""
        keep = self.distances > start
        d, r = self.distances[keep], self.ratios[keep]
        order = np.argsort(d, kind="stable")
        r = r[order]
        running = np.minimum.accumulate(r)
        return bool(np.all(r <= running * (1 + slack) + 1e-300))


def oseen_kernel_check(grid: Grid, t: float, sample_points=None) -> KernelReport:
    """Evaluate the periodized kernel of ``exp(t Lap) P`` and its weighted size.

    The kernel is the response to a unit-mass delta at the origin; its matrix
    norm at ``x`` is weighted by ``t^{n/2} (1 + |x|/sqrt(t))^n``. ``sample_points``
    are lattice index tuples; by default all points with ``|x| <= L/4`` are used.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    n = grid.dim
    sym = MultiplierOp.leray().symbol(grid) * np.exp(-t * grid.k2) / grid.volume
    kern = np.fft.ifftn(sym * grid.size**n, axes=tuple(range(2, 2 + n))).real
    mag = np.linalg.norm(kern.reshape(n * n, *grid.shape), axis=0)
    if sample_points is None:
        offs = grid.offsets()
        offs = offs[np.sum(offs.astype(float) ** 2, axis=1) * grid.h**2 <= (grid.box / 4) ** 2]
    else:
        offs = np.atleast_2d(np.asarray(sample_points, dtype=np.int64))
    d = np.sqrt(torus_distance2(grid, offs, np.zeros(n, dtype=np.int64)))
    vals = mag[tuple((offs % grid.size).T)]
    ratios = vals * t ** (n / 2) * (1 + d / np.sqrt(t)) ** n
    return KernelReport(t, d, vals, ratios, float(ratios.max()))


@dataclass
class OffDiagReport:
    """Off-diagonal decay of ``1_E T_t 1_F`` as a function of ``d^2/t``."""

    separation: float
    times: np.ndarray
    ratios: np.ndarray
    fitted_order: float

    @property
    def separations(self) -> np.ndarray:
        return np.full(len(self.times), self.separation)

    def rows(self) -> list[dict]:
        return [{"t": float(t), "d": self.separation, "ratio": float(r),
                 "bound": float((1 + self.separation**2 / t) ** (-self.fitted_order))}
                for t, r in zip(self.times, self.ratios)]


def set_distance(grid: Grid, E: np.ndarray, F: np.ndarray) -> float:
    """Torus distance between two point sets given as boolean masks."""
    pe = np.argwhere(E)
    pf = np.argwhere(F)
    best = np.inf
    for chunk in np.array_split(pe, max(1, len(pe) // 256 + 1)):
        if len(chunk):
            d2 = torus_distance2(grid, chunk[:, None, :], pf[None, :, :])
            best = min(best, float(d2.min()))
    return float(np.sqrt(best))


def offdiag_probe(
    op_family: Callable[[float], MultiplierOp],
    E: np.ndarray,
    F: np.ndarray,
    t_list: Sequence[float],
    corpus: Sequence[Field],
) -> OffDiagReport:
    """Measure ``max_f ||1_E T_t 1_F f|| / ||1_F f||`` over ``corpus`` for each ``t``.

    ``E`` and ``F`` are boolean masks (use :func:`ball_mask` for balls). The
    order ``M`` is fitted by least squares to ``ratio ~ C (1 + d^2/t)^{-M}``.
    """
    E = np.asarray(E, dtype=bool)
    F = np.asarray(F, dtype=bool)
    if np.any(E & F):
        raise ValueError("E and F overlap")
    grid = corpus[0].grid
    d = set_distance(grid, E, F)
    times = np.asarray(t_list, dtype=float)
    ratios = np.zeros(len(times))
    for i, t in enumerate(times):
        op = op_family(t)
        best = 0.0
        for f in corpus:
            fF = Field.from_values(grid, f.values * F)
            den = fF.norm()
            if den == 0:
                continue
            out = op.apply(fF).values * E
            best = max(best, float(np.sqrt(np.sum(out**2) * grid.cell_volume)) / den)
        ratios[i] = best
    x = np.log1p(d**2 / times)
    y = np.log(np.maximum(ratios, 1e-300))
    slope = np.polyfit(x, y, 1)[0] if len(times) > 1 else np.nan
    return OffDiagReport(d, times, ratios, float(-slope))

"""Duhamel-type time integrals: the operator A, its three-term splitting, the
maximal-regularity operator and the bound probes.

Inputs are space-time fields sampled on a geometric time grid. Between samples
they are interpolated linearly in ``log t`` per coefficient, held at the first
sample on ``[0, t_min]`` and set to zero above ``t_max``. Because every
multiplier involved is radial, per-mode time weights are computed once per
distinct ``|k|^2`` and then scattered to the grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import Grid, SpaceTimeField, TimeGrid
from .operators import (
    heat_coeffs,
    kts_coeffs,
    kts_operator_norm,
    pdiv_coeffs,
    phi_regularized,
    ts_coeffs,
)
from .tent import BallFamily, tent_norm, y_norm

__all__ = [
    "QuadratureScheme",
    "OperatorNormReport",
    "SchurReport",
    "duhamel_A",
    "bilinear_B",
    "a1_apply",
    "a2_apply",
    "a2_apply_direct",
    "a2_sampled",
    "a3_apply",
    "a3_via_r",
    "calMprime",
    "maxreg_apply",
    "z_apply",
    "r_apply",
    "desimon_check",
    "maxreg_tent_check",
    "z_tent_check",
    "r_tent_check",
    "schur_check",
    "pointwise_bound_check",
    "tent_bound_check",
    "pairing",
]


@dataclass(frozen=True)
class QuadratureScheme:
    """Graded Gauss-Legendre rule for ``int_0^t ds`` with square-root substitutions.

    ``[0, split*t]`` uses ``s = sigma^2`` and ``[split*t, t]`` uses
    ``s = t - sigma^2``. In each half the ``sigma`` range is cut into
    ``grading_panels`` panels shrinking by half toward ``sigma = 0`` and the
    ``nodes_per_half`` nodes are shared evenly among them. ``panel_nodes`` is
    the per-interval order of the rule for integrals over the sampled span
    (nodes in ``log s``).
    """

    nodes_per_half: int = 64
    split: float = 0.5
    panel_nodes: int = 16
    grading_panels: int = 8

    def __post_init__(self):
        if self.nodes_per_half < 1 or self.panel_nodes < 1 or self.grading_panels < 1:
            raise ValueError("node counts must be positive")
        if self.nodes_per_half % self.grading_panels:
            raise ValueError("nodes_per_half must be a multiple of grading_panels")
        if not 0 < self.split < 1:
            raise ValueError("split must lie in (0, 1)")

    def unit_rule(self) -> tuple[np.ndarray, np.ndarray]:
        """Graded nodes and weights on ``[0, 1]``."""
        P = self.grading_panels
        x, w = np.polynomial.legendre.leggauss(self.nodes_per_half // P)
        edges = np.concatenate([[0.0], 2.0 ** -np.arange(P - 1, -1, -1.0)])
        a, b = edges[:-1, None], edges[1:, None]
        return (a + (b - a) * (x + 1) / 2).ravel(), (w * (b - a) / 2).ravel()

    def nodes(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``s`` in ``(0, t)`` and positive weights summing to ``t``."""
        u, w = self.unit_rule()
        lo_len = np.sqrt(self.split * t)
        hi_len = np.sqrt((1 - self.split) * t)
        s_lo, s_hi = lo_len * u, hi_len * u
        w_lo = w * lo_len * 2 * s_lo
        w_hi = w * hi_len * 2 * s_hi
        return np.concatenate([s_lo**2, t - s_hi**2]), np.concatenate([w_lo, w_hi])

    def panels(self, times: TimeGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Nodes on every sample interval: ``(s, weight, interval index, theta)``."""
        x, w = np.polynomial.legendre.leggauss(self.panel_nodes)
        lr = np.log(times.ratio)
        u = (x + 1) / 2
        j = np.repeat(np.arange(times.count - 1), len(x))
        theta = np.tile(u, times.count - 1)
        s = times.times[j] * times.ratio**theta
        wt = np.tile(w / 2, times.count - 1) * lr * s
        return s, wt, j, theta


class _Modes:
    """Distinct ``|k|^2`` values of a grid and the map back to the grid."""

    _cache: dict = {}

    def __new__(cls, grid: Grid):
        obj = cls._cache.get(grid)
        if obj is None:
            obj = super().__new__(cls)
            obj.kappa, inv = np.unique(grid.k2.ravel(), return_inverse=True)
            obj.inverse = inv.reshape(grid.shape)
            cls._cache[grid] = obj
        return obj


def _time_matrix(times: TimeGrid, t: float, scheme: QuadratureScheme, kappa: np.ndarray,
                 factor: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """``C[j, kappa] = sum_nodes w exp(-(t - s) kappa) factor(s, kappa) hat_j(s)``."""
    s, w = scheme.nodes(t)
    j, theta, inside = times.locate(s)
    e = np.exp(-np.outer(t - s, kappa)) * factor(s[:, None], kappa[None, :])
    e *= (w * inside)[:, None]
    C = np.zeros((times.count, len(kappa)))
    np.add.at(C, j, (1 - theta)[:, None] * e)
    if times.count > 1:
        np.add.at(C, np.minimum(j + 1, times.count - 1), theta[:, None] * e)
    return C


def _contract(C: np.ndarray, modes: _Modes, data: np.ndarray) -> np.ndarray:
    """``sum_j C[j, kappa(k)] * data[j, ..., k]``."""
    full = C[:, modes.inverse]
    lead = data.ndim - 1 - full.ndim + 1
    full = full.reshape((full.shape[0],) + (1,) * lead + full.shape[1:])
    return np.sum(full * data, axis=0)


def _duhamel(data: np.ndarray, grid: Grid, times: TimeGrid, scheme: QuadratureScheme,
             factor, targets: TimeGrid | None = None) -> np.ndarray:
    """``int_0^t exp((t - s) Lap) factor(s, |k|^2) data(s) ds`` at every target sample."""
    targets = times if targets is None else targets
    modes = _Modes(grid)
    out = np.empty((targets.count,) + data.shape[1:], dtype=complex)
    for i, t in enumerate(targets.times):
        out[i] = _contract(_time_matrix(times, t, scheme, modes.kappa, factor), modes, data)
    return out


def _one(s, kappa):
    return np.ones(np.broadcast(s, kappa).shape)


def _check_tensor(alpha: SpaceTimeField):
    if alpha.rank != 2:
        raise ValueError("expected a tensor space-time field")


def duhamel_A(alpha: SpaceTimeField, scheme: QuadratureScheme | None = None) -> SpaceTimeField:
    """``A(alpha)(t) = int_0^t exp((t - s) Lap) P div alpha(s) ds`` on the sample grid."""
    scheme = QuadratureScheme() if scheme is None else scheme
    _check_tensor(alpha)
    D = pdiv_coeffs(alpha.coeffs, alpha.grid)
    return SpaceTimeField(alpha.grid, alpha.times, _duhamel(D, alpha.grid, alpha.times, scheme, _one))


def bilinear_B(u: SpaceTimeField, v: SpaceTimeField,
               scheme: QuadratureScheme | None = None) -> SpaceTimeField:
    """``B(u, v) = A(u (x) v)`` with the de-aliased slicewise tensor product."""
    if u.grid != v.grid or u.times != v.times:
        raise ValueError("u and v must share grid and time grid")
    g = u.grid
    prod = u.values[:, :, None] * v.values[:, None, :]
    axes = tuple(range(3, 3 + g.dim))
    c = np.fft.fftn(prod, axes=axes) / g.size**g.dim * g.dealias_mask
    alpha = SpaceTimeField(g, u.times, c)
    return duhamel_A(alpha, scheme)


def maxreg_apply(f: SpaceTimeField, scheme: QuadratureScheme | None = None) -> SpaceTimeField:
    """``M+ f(t) = int_0^t exp((t - s) Lap) Lap f(s) ds``."""
    scheme = QuadratureScheme() if scheme is None else scheme
    out = _duhamel(f.coeffs, f.grid, f.times, scheme, lambda s, kappa: -kappa * np.ones_like(s))
    return f.with_coeffs(out)


def z_apply(F: SpaceTimeField) -> SpaceTimeField:
    """Slicewise regularized operator ``Z F (s) = T_s F(s)``."""
    _check_tensor(F)
    out = np.stack([ts_coeffs(F.coeffs[j], F.grid, s) for j, s in enumerate(F.times.times)])
    return SpaceTimeField(F.grid, F.times, out)


def a1_apply(alpha: SpaceTimeField, scheme: QuadratureScheme | None = None) -> SpaceTimeField:
    """``A1(alpha) = M+ Z (s^{1/2} alpha)``, composed inside the quadrature.

    At each node the integrand is ``Lap T_s (s^{1/2} alpha(s))``; the radial
    part of ``T_s`` is ``-s^{1/2} phi(s |k|^2)`` so per mode the integrand is
    ``(-|k|^2) (-s^{1/2} phi) s^{1/2} P div alpha(s)``.
    """
    scheme = QuadratureScheme() if scheme is None else scheme
    _check_tensor(alpha)
    D = pdiv_coeffs(alpha.coeffs, alpha.grid)

    def factor(s, kappa):
        ts_radial = -np.sqrt(s) * phi_regularized(s * kappa)
        return (-kappa) * ts_radial * np.sqrt(s)

    return SpaceTimeField(alpha.grid, alpha.times, _duhamel(D, alpha.grid, alpha.times, scheme, factor))


def _panel_integrals(D: np.ndarray, grid: Grid, times: TimeGrid, scheme: QuadratureScheme,
                     extra=None, hold: bool = True) -> np.ndarray:
    """``I_j = int_{t_j}^{t_{j+1}} exp(s Lap) extra(s, |k|^2) D(s) ds`` per interval.

    With ``hold`` the piece ``int_0^{t_min}`` (integrand held at the first
    sample, no ``extra`` factor) is appended as the last entry.
    """
    modes = _Modes(grid)
    kappa = modes.kappa
    s, w, j, theta = scheme.panels(times)
    e = np.exp(-np.outer(s, kappa)) * w[:, None]
    if extra is not None:
        e = e * extra(s[:, None], kappa[None, :])
    n_int = times.count - 1
    p = scheme.panel_nodes
    out = np.empty((n_int + int(hold),) + D.shape[1:], dtype=complex)
    for i in range(n_int):
        blk = slice(i * p, (i + 1) * p)
        c0 = np.sum(((1 - theta[blk])[:, None]) * e[blk], axis=0)
        c1 = np.sum((theta[blk][:, None]) * e[blk], axis=0)
        out[i] = _contract(np.stack([c0, c1]), modes, D[i : i + 2])
    if hold:
        t0 = times.t_min
        safe = np.where(kappa > 0, kappa, 1.0)
        piece = np.where(kappa > 0, -np.expm1(-t0 * kappa) / safe, t0)
        out[n_int] = _contract(piece[None], modes, D[:1])
    return out


def _tails(I: np.ndarray) -> np.ndarray:
    """``sum_{j >= i} I_j`` for every sample ``i`` (zero at the last sample)."""
    tails = np.cumsum(I[::-1], axis=0)[::-1]
    return np.concatenate([tails, np.zeros_like(tails[:1])])


def calMprime(alpha: SpaceTimeField, scheme: QuadratureScheme | None = None) -> np.ndarray:
    """Coefficients of ``int_0^inf exp(s Lap) P div alpha(s) ds`` (panel rule)."""
    scheme = QuadratureScheme() if scheme is None else scheme
    D = pdiv_coeffs(alpha.coeffs, alpha.grid)
    I = _panel_integrals(D, alpha.grid, alpha.times, scheme)
    return np.sum(I, axis=0)


def a2_apply(alpha: SpaceTimeField, scheme: QuadratureScheme | None = None) -> SpaceTimeField:
    """``A2(alpha)(t) = exp(t Lap) int_0^inf exp(s Lap) P div alpha(s) ds``."""
    _check_tensor(alpha)
    m = calMprime(alpha, scheme)
    T = alpha.times
    return SpaceTimeField(alpha.grid, T, heat_coeffs(np.broadcast_to(m, (T.count,) + m.shape),
                                                     alpha.grid, T.times))


def a2_apply_direct(alpha: SpaceTimeField, scheme: QuadratureScheme | None = None) -> SpaceTimeField:
    """Second route for ``A2``: ``exp((t + s) Lap)`` is applied under the integral per target."""
    scheme = QuadratureScheme() if scheme is None else scheme
    _check_tensor(alpha)
    g, T = alpha.grid, alpha.times
    D = pdiv_coeffs(alpha.coeffs, g)
    out = np.empty((T.count,) + D.shape[1:], dtype=complex)
    for i, t in enumerate(T.times):
        I = _panel_integrals(heat_coeffs(D, g, t), g, T, scheme)
        out[i] = np.sum(I, axis=0)
    return SpaceTimeField(g, T, out)


def a3_apply(alpha: SpaceTimeField, scheme: QuadratureScheme | None = None) -> SpaceTimeField:
    """``A3(alpha)(t) = int_t^inf exp((t + s) Lap) P div alpha(s) ds`` (panel rule)."""
    scheme = QuadratureScheme() if scheme is None else scheme
    _check_tensor(alpha)
    g, T = alpha.grid, alpha.times
    D = pdiv_coeffs(alpha.coeffs, g)
    I = _panel_integrals(D, g, T, scheme, hold=False)
    return SpaceTimeField(g, T, heat_coeffs(_tails(I), g, T.times))


def r_apply(F: SpaceTimeField, scheme: QuadratureScheme | None = None) -> SpaceTimeField:
    """``R F(t) = int_t^inf K_{t,s} F(s) ds`` with ``K_{t,s} = exp((t+s) Lap) P s^{-1/2} div``."""
    scheme = QuadratureScheme() if scheme is None else scheme
    _check_tensor(F)
    g, T = F.grid, F.times
    D = pdiv_coeffs(F.coeffs, g)
    I = _panel_integrals(D, g, T, scheme, extra=lambda s, kappa: s ** -0.5 * np.ones_like(kappa),
                         hold=False)
    return SpaceTimeField(g, T, heat_coeffs(_tails(I), g, T.times))


def a3_via_r(alpha: SpaceTimeField, scheme: QuadratureScheme | None = None) -> SpaceTimeField:
    """``A3(alpha) = R(s^{1/2} alpha)`` evaluated node by node with the ``K_{t,s}`` multiplier.

    This route forms ``s^{1/2} alpha(s)`` at each quadrature node and applies
    the full operator there, independently of the per-mode contraction used by
    :func:`a3_apply`.
    """
    scheme = QuadratureScheme() if scheme is None else scheme
    _check_tensor(alpha)
    g, T = alpha.grid, alpha.times
    s, w, j, theta = scheme.panels(T)
    out = np.zeros((T.count, g.dim) + g.shape, dtype=complex)
    for node in range(len(s)):
        a = (1 - theta[node]) * alpha.coeffs[j[node]] + theta[node] * alpha.coeffs[j[node] + 1]
        Fs = np.sqrt(s[node]) * a
        for i in range(j[node] + 1):
            out[i] += w[node] * kts_coeffs(Fs, g, T.times[i], s[node])
    return SpaceTimeField(g, T, out)


def a2_sampled(F: SpaceTimeField) -> SpaceTimeField:
    """Sampled tail operator ``sum_j W_j exp((t_i + s_j) Lap) P div F(s_j)``.

    Paired with the cell-weighted inner product this is the exact adjoint of
    :func:`~tentlab.atoms.a2star_apply`.
    """
    _check_tensor(F)
    g, T = F.grid, F.times
    w = T.cell_weights()
    D = heat_coeffs(pdiv_coeffs(F.coeffs, g), g, T.times)
    m = np.tensordot(w, D, axes=1)
    return SpaceTimeField(g, T, heat_coeffs(np.broadcast_to(m, (T.count,) + m.shape), g, T.times))


def pairing(F: SpaceTimeField, G: SpaceTimeField) -> float:
    """Cell-weighted real inner product ``sum_j W_j <F_j, G_j>_{L^2}``."""
    w = F.times.cell_weights()
    per = np.real(np.sum(F.coeffs * np.conj(G.coeffs), axis=tuple(range(1, F.coeffs.ndim))))
    return float(np.dot(w, per) * F.grid.volume)


# ---------------------------------------------------------------------------
# reports and probes


@dataclass
class OperatorNormReport:
    """Measured ratios of an operator over a seeded corpus."""

    op: str
    in_norm: str
    out_norm: str
    corpus_seed: int
    per_sample: list
    drift: float | None = None
    coarse_max: float | None = None

    @property
    def max_ratio(self) -> float:
        vals = [r for r in self.per_sample if np.isfinite(r)]
        return float(max(vals)) if vals else float("nan")

    @property
    def finite(self) -> bool:
        return bool(self.per_sample) and all(np.isfinite(r) for r in self.per_sample)

    def to_json(self) -> dict:
        return {"op": self.op, "in_norm": self.in_norm, "out_norm": self.out_norm,
                "corpus_seed": self.corpus_seed, "corpus_size": len(self.per_sample),
                "max_ratio": self.max_ratio, "per_sample": [float(r) for r in self.per_sample],
                "drift": self.drift}


def with_drift(fine: OperatorNormReport, coarse: OperatorNormReport) -> OperatorNormReport:
    """Attach ``drift = max_ratio(fine) / max_ratio(coarse)`` to the fine report."""
    fine.coarse_max = coarse.max_ratio
    fine.drift = fine.max_ratio / coarse.max_ratio
    return fine


def desimon_check(corpus: Sequence[SpaceTimeField], scheme: QuadratureScheme | None = None,
                  seed: int = 0) -> OperatorNormReport:
    """``||M+ f||_{L^2} / ||f||_{L^2}`` in space-time over a corpus."""
    ratios = []
    for f in corpus:
        den = f.l2_norm()
        ratios.append(maxreg_apply(f, scheme).l2_norm() / den if den > 0 else float("nan"))
    return OperatorNormReport("M+", "L2", "L2", seed, ratios)


def _tent_ratio(op, corpus, family, label, seed) -> OperatorNormReport:
    ratios = []
    for F in corpus:
        fam = BallFamily.default(F.grid) if family is None else family
        den = tent_norm(F, 2, fam).value
        if den == 0:
            continue
        ratios.append(tent_norm(op(F), 2, fam).value / den)
    return OperatorNormReport(label, "T^inf,2", "T^inf,2", seed, ratios)


def maxreg_tent_check(corpus, family=None, scheme=None, seed=0) -> OperatorNormReport:
    return _tent_ratio(lambda F: maxreg_apply(F, scheme), corpus, family, "M+", seed)


def z_tent_check(corpus, family=None, seed=0) -> OperatorNormReport:
    return _tent_ratio(z_apply, corpus, family, "Z", seed)


def r_tent_check(corpus, family=None, scheme=None, seed=0) -> OperatorNormReport:
    return _tent_ratio(lambda F: r_apply(F, scheme), corpus, family, "R", seed)


def pointwise_bound_check(corpus, family=None, scheme=None, seed=0) -> OperatorNormReport:
    """``max_{t,x} t^{1/2} |A(alpha)(t,x)| / ||alpha||_Y``."""
    ratios = []
    for alpha in corpus:
        fam = BallFamily.default(alpha.grid) if family is None else family
        den = y_norm(alpha, fam)
        if den == 0:
            continue
        A = duhamel_A(alpha, scheme)
        num = float(np.max(np.sqrt(A.times.times) * A.magnitude().reshape(len(A), -1).max(axis=1)))
        ratios.append(num / den)
    return OperatorNormReport("A", "Y", "t^1/2 L^inf", seed, ratios)


def tent_bound_check(corpus, family=None, scheme=None, seed=0) -> OperatorNormReport:
    """``||A alpha||_{T^{inf,2}} / (||alpha||_{T^{inf,1}} + ||s^{1/2} alpha||_{T^{inf,2}})``."""
    ratios = []
    for alpha in corpus:
        fam = BallFamily.default(alpha.grid) if family is None else family
        den = tent_norm(alpha, 1, fam).value + tent_norm(alpha.scale_time(0.5), 2, fam).value
        if den == 0:
            continue
        ratios.append(tent_norm(duhamel_A(alpha, scheme), 2, fam).value / den)
    return OperatorNormReport("A", "T^inf,1 + T^inf,2", "T^inf,2", seed, ratios)


@dataclass
class SchurReport:
    """Both Schur suprema for the kernel ``||K_{t,s}|| 1_{s > t}`` with weight ``t^beta``."""

    beta: float
    sup_over_s: float
    sup_over_t: float
    kernel_constant: float

    def to_json(self) -> dict:
        return {"beta": self.beta, "sup_over_s": self.sup_over_s,
                "sup_over_t": self.sup_over_t, "kernel_constant": self.kernel_constant}


def schur_check(grid: Grid, times: TimeGrid, beta: float = -0.25) -> SchurReport:
    """Schur test sums on the sample grid with the exact discrete operator norms.

    ``kernel_constant`` is ``max ||K_{t,s}|| s^{1/2} (t + s)^{1/2}`` over ``s > t``.
    """
    if not -0.5 < beta < 0:
        raise ValueError(f"beta must lie in (-1/2, 0), got {beta}")
    t = times.times
    K = np.zeros((times.count, times.count))
    for i, ti in enumerate(t):
        for j in range(i + 1, times.count):
            K[i, j] = kts_operator_norm(grid, ti, t[j])
    w = times.cell_weights()
    p = t**beta
    over_s = np.max((w * p) @ K / p)
    over_t = np.max(K @ (w * p) / p)
    ti, sj = np.meshgrid(t, t, indexing="ij")
    mask = sj > ti
    const = float(np.max(K[mask] * np.sqrt(sj[mask]) * np.sqrt(ti[mask] + sj[mask])))
    return SchurReport(beta, float(over_s), float(over_t), const)

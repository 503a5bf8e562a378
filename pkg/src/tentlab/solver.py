"""Fixed-point solver for the mild formulation ``u = exp(t Lap) u0 - B(u, u)``."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bilinear import QuadratureScheme, bilinear_B
from .grid import Field, Grid, SpaceTimeField, TimeGrid
from .operators import heat_coeffs, leray_coeffs
from .tent import BallFamily, tent_norm, x_norm

__all__ = ["SolverConfig", "PicardTrace", "SearchResult", "caloric_extend", "bmo_minus1_norm",
           "besov_norm", "bmo_norm", "picard_solve", "residual", "smallness_search",
           "scaling_transform", "divergence_residual"]

DIV_TOL = 1e-10


@dataclass
class SolverConfig:
    """Picard loop settings. ``times`` and ``family`` default to the grid's standard choices."""

    max_iters: int = 30
    tol: float = 1e-8
    scheme: QuadratureScheme = field(default_factory=QuadratureScheme)
    times: TimeGrid | None = None
    family: BallFamily | None = None
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    def resolve(self, grid: Grid) -> tuple[TimeGrid, BallFamily]:
        times = TimeGrid.default(grid) if self.times is None else self.times
        family = BallFamily.default(grid) if self.family is None else self.family
        return times, family


@dataclass
class PicardTrace:
    """Per-iteration X-norms, X-residuals and contraction ratios."""

    x_norms: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    status: str = "max_iters"

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def record(self, xn: float, res: float) -> None:
        if self.residuals and self.residuals[-1] > 0:
            self.ratios.append(res / self.residuals[-1])
        self.x_norms.append(xn)
        self.residuals.append(res)

    def to_json(self) -> dict:
        return {"status": self.status, "iterations": self.iterations,
                "x_norms": [float(v) for v in self.x_norms],
                "residuals": [float(v) for v in self.residuals],
                "ratios": [float(v) for v in self.ratios]}


def divergence_residual(f: Field) -> float:
    """``||div f||_2 / ||grad f||_2`` (zero for the zero field)."""
    g = f.grid
    div = np.sum(1j * g.kd * f.coeffs, axis=0)
    scale = np.sqrt(np.sum(g.kd2 * np.abs(f.coeffs) ** 2))
    return float(np.sqrt(np.sum(np.abs(div) ** 2)) / scale) if scale > 0 else 0.0


def caloric_extend(u0: Field, times: TimeGrid | None = None) -> SpaceTimeField:
    """``U(t) = exp(t Lap) u0`` sampled on ``times``; projects (with a warning) if ``u0`` is not solenoidal."""
    if u0.rank != 1:
        raise ValueError("caloric_extend expects a vector field")
    times = TimeGrid.default(u0.grid) if times is None else times
    c = u0.coeffs
    if divergence_residual(u0) > DIV_TOL:
        warnings.warn("initial field is not divergence-free; applying the Leray projection",
                      stacklevel=2)
        c = leray_coeffs(c, u0.grid)
    c = np.broadcast_to(c, (times.count,) + c.shape)
    return SpaceTimeField(u0.grid, times, heat_coeffs(c, u0.grid, times.times))


def _mean_free(u0: Field) -> Field:
    c = u0.coeffs.copy()
    c[(slice(None),) * (c.ndim - u0.grid.dim) + (0,) * u0.grid.dim] = 0
    return u0.with_coeffs(c)


def bmo_minus1_norm(u0: Field, family: BallFamily | None = None,
                    times: TimeGrid | None = None) -> float:
    """Tent norm (p = 2) of the caloric extension of the mean-free part of ``u0``."""
    family = BallFamily.default(u0.grid) if family is None else family
    times = TimeGrid.default(u0.grid) if times is None else times
    c = _mean_free(u0).coeffs
    U = SpaceTimeField(u0.grid, times,
                       heat_coeffs(np.broadcast_to(c, (times.count,) + c.shape), u0.grid, times.times))
    return tent_norm(U, 2, family).value


def besov_norm(u0: Field, times: TimeGrid | None = None) -> float:
    """``max_t t^{1/2} sup |exp(t Lap) u0|`` over the sample times (mean removed)."""
    times = TimeGrid.default(u0.grid) if times is None else times
    c = _mean_free(u0).coeffs
    best = 0.0
    for t in times.times:
        v = u0.with_coeffs(heat_coeffs(c, u0.grid, t)).magnitude()
        best = max(best, math.sqrt(t) * float(v.max()))
    return best


def bmo_norm(v: Field, family: BallFamily | None = None) -> float:
    """``max`` over family balls of the average of ``|v - v_B|``."""
    g = v.grid
    family = BallFamily.default(g) if family is None else family
    vals = v.values.reshape((-1,) + g.shape)
    centers = family.centers
    best = 0.0
    for R in family.radii:
        off = family.disc_offsets(R)
        idx = (centers[:, None, :] + off[None, :, :]) % g.size
        pts = vals[(slice(None),) + tuple(idx[..., a] for a in range(g.dim))]
        dev = pts - pts.mean(axis=2, keepdims=True)
        osc = np.sqrt(np.sum(dev**2, axis=0)).mean(axis=1)
        best = max(best, float(osc.max()))
    return best


def residual(u: SpaceTimeField, u0: Field, config: SolverConfig | None = None) -> float:
    """``x_norm(u - exp(t Lap) u0 + B(u, u))``."""
    config = SolverConfig() if config is None else config
    _, family = config.resolve(u.grid)
    U0 = caloric_extend(u0, u.times)
    return x_norm(u - U0 + bilinear_B(u, u, config.scheme), family)


def _finite(u: SpaceTimeField) -> bool:
    return bool(np.all(np.isfinite(u.coeffs)))


def picard_solve(u0: Field, config: SolverConfig | None = None) -> tuple[SpaceTimeField, PicardTrace]:
    """Iterate ``u_{k+1} = U0 - B(u_k, u_k)`` from the caloric extension ``U0``.

    Stops when the X-residual drops to ``tol`` (converged), after ``max_iters``,
    or when the residual grows three iterations in a row or turns non-finite
    (diverged; the last finite iterate is returned).
    """
    config = SolverConfig() if config is None else config
    times, family = config.resolve(u0.grid)
    U0 = caloric_extend(u0, times)
    u = U0
    trace = PicardTrace()
    growth = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.max_iters):
            nxt = U0 - bilinear_B(u, u, config.scheme)
            if not _finite(nxt):
                trace.status = "diverged"
                return u, trace
            res = x_norm(nxt - u, family)
            xn = x_norm(nxt, family)
            if not (np.isfinite(res) and np.isfinite(xn)):
                trace.status = "diverged"
                return u, trace
            prev = trace.residuals[-1] if trace.residuals else None
            trace.record(xn, res)
            u = nxt
            if res <= config.tol:
                trace.status = "converged"
                return u, trace
            growth = growth + 1 if prev is not None and res > prev else 0
            if growth >= 3:
                trace.status = "diverged"
                return u, trace
    trace.status = "max_iters"
    return u, trace


@dataclass
class SearchResult:
    """Outcome of :func:`smallness_search`; ``boundary`` names a bracket end when no sign change was found."""

    threshold: float
    boundary: str | None
    probes: list

    def to_json(self) -> dict:
        return {"threshold": self.threshold, "boundary": self.boundary,
                "probes": [[float(a), bool(ok)] for a, ok in self.probes]}


def smallness_search(direction: Field, config: SolverConfig | None = None,
                     lo_exp: float = -20.0, hi_exp: float = 4.0, bits: int = 2) -> SearchResult:
    """Largest converging amplitude along ``direction`` (normalized to unit BMO^-1 norm).

    Bisection in ``log2`` amplitude over ``[2^lo_exp, 2^hi_exp]`` until the
    bracket is narrower than ``2^-bits``.
    """
    config = SolverConfig() if config is None else config
    times, family = config.resolve(direction.grid)
    norm = bmo_minus1_norm(direction, family, times)
    if not norm > 0:
        raise ValueError("degenerate direction: zero BMO^-1 norm")
    d = direction * (1.0 / norm)
    probes = []

    def ok(e: float) -> bool:
        a = 2.0**e
        _, tr = picard_solve(d * a, config)
        probes.append((a, tr.converged))
        return tr.converged

    if ok(hi_exp):
        return SearchResult(2.0**hi_exp, "upper", probes)
    if not ok(lo_exp):
        return SearchResult(2.0**lo_exp, "lower", probes)
    lo, hi = lo_exp, hi_exp
    while hi - lo > 2.0**-bits:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return SearchResult(2.0**lo, None, probes)


def _power_of_two(lam: float) -> int:
    e = math.log2(lam) if lam > 0 else float("nan")
    if not np.isfinite(e) or e != round(e):
        raise ValueError(f"scaling factor must be a power of two, got {lam}")
    return int(round(e))


def scaling_transform(u: SpaceTimeField, lam: float = 2.0) -> SpaceTimeField:
    """``u_lam(t, x) = lam u(lam^2 t, lam x)`` on the box ``L / lam``.

    The lattice values are unchanged up to the factor ``lam``; only the box and
    the time labels are rescaled, so the map is exactly invertible.
    """
    e = _power_of_two(lam)
    g = u.grid
    if 2 ** abs(e) > g.size:
        raise ValueError(f"scaling factor {lam} exceeds the grid size {g.size}")
    grid = Grid(g.dim, g.size, g.box / lam)
    times = TimeGrid(u.times.t_min / lam**2, u.times.ratio, u.times.count)
    return SpaceTimeField(grid, times, u.coeffs * lam)

"""Tent-space functionals on the discrete torus.

Space-time integrals use the cell weights of the :class:`~tentlab.grid.TimeGrid`
(exact for constants on ``[t_min, t_max]``) times the cell volume ``h**n``.
Balls are open (``dist < R``), cones are closed (``dist <= sqrt(t)``); all
distances are torus distances between lattice points. Ball volumes are lattice
counts times ``h**n``, so ball averages of constants are exact.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.ndimage import distance_transform_edt

from ._kernels import stencil_reduce
from .grid import Grid, SpaceTimeField, TimeGrid

__all__ = [
    "BallFamily",
    "ConeIndex",
    "TentNormReport",
    "RatioResult",
    "tent_norm",
    "x_norm",
    "y_norm",
    "nontangential_max",
    "t1inf_norm",
    "square_function",
    "t12_norm",
    "truncated_square_functions",
    "carleson_functional",
    "c2_functional",
    "tent_masses",
    "tent_membership",
    "carleson_embedding_check",
    "cauchy_schwarz_check",
    "stopping_height",
    "stopping_set_fraction",
    "pairing_check",
    "hl_maximal",
    "ball_averages",
    "spacetime_integral",
    "default_nu",
    "tent_mask",
    "ball_mask_at",
    "ball_volume_at",
    "carleson_tent_comparison",
]

_TOL = 1e-12


def _offset_dist2(grid: Grid, offsets: np.ndarray) -> np.ndarray:
    """Squared lengths of minimal-image offsets, physical units."""
    return np.sum(offsets.astype(float) ** 2, axis=1) * grid.h**2


@dataclass(frozen=True)
class BallFamily:
    """Open torus balls centred on a stride sublattice with dyadic radii.

    Parameters
    ----------
    grid : Grid
    stride : int
        Centre spacing in lattice units.
    radii : tuple of float
        Ball radii, each at most ``L/2``.
    """

    grid: Grid
    stride: int
    radii: tuple

    def __post_init__(self):
        if not self.radii:
            raise ValueError("empty ball family")
        if self.stride < 1 or self.grid.size % self.stride:
            raise ValueError(f"stride {self.stride} must divide N={self.grid.size}")
        if max(self.radii) > self.grid.box / 2 * (1 + _TOL):
            raise ValueError("radii must not exceed L/2")
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))

    @classmethod
    def default(cls, grid: Grid, stride: int | None = None, r_min: float | None = None) -> "BallFamily":
        """Stride ``N/16`` (at least 1) and radii ``2h, 4h, ..., L/2``."""
        stride = max(1, grid.size // 16) if stride is None else stride
        r = 2 * grid.h if r_min is None else r_min
        radii = []
        while r <= grid.box / 2 * (1 + _TOL):
            radii.append(r)
            r *= 2
        return cls(grid, stride, tuple(radii))

    def subfamily(self, radii=None, stride=None) -> "BallFamily":
        return BallFamily(self.grid, self.stride if stride is None else stride,
                          self.radii if radii is None else tuple(radii))

    @cached_property
    def centers(self) -> np.ndarray:
        """Centre indices, shape ``(C, dim)``."""
        ax = np.arange(0, self.grid.size, self.stride)
        mesh = np.meshgrid(*([ax] * self.grid.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def disc_offsets(self, radius: float) -> np.ndarray:
        """Offsets of the open ball of ``radius`` about the origin."""
        offs = self.grid.offsets()
        return offs[_offset_dist2(self.grid, offs) < radius**2 * (1 - _TOL)]

    def count(self, radius: float) -> int:
        return len(self.disc_offsets(radius))

    def volume(self, radius: float) -> float:
        """Discrete ball volume: lattice count times ``h**n``."""
        return self.count(radius) * self.grid.cell_volume

    def describe(self) -> dict:
        return {"stride": self.stride, "radii": list(self.radii), "centers": len(self.centers)}


class ConeIndex:
    """Closed parabolic cones ``{(t_j, y): dist(x, y) <= sqrt(t_j)}`` as offset levels.

    ``first_level[k]`` is the first time index whose cone slice contains
    ``offsets[k]``; ``-1`` marks offsets outside every slice.
    """

    def __init__(self, grid: Grid, times: TimeGrid):
        self.grid = grid
        self.times = times
        self.offsets = grid.offsets()
        d2 = _offset_dist2(grid, self.offsets)
        t = times.times
        lev = np.searchsorted(t * (1 + _TOL), d2, side="left")
        self.first_level = np.where(lev < times.count, lev, -1).astype(np.int64)

    def slice(self, j: int) -> np.ndarray:
        """Offsets in the cone slice at ``t_j``."""
        keep = (self.first_level >= 0) & (self.first_level <= j)
        return self.offsets[keep]


def _all_points(grid: Grid) -> np.ndarray:
    mesh = np.meshgrid(*([np.arange(grid.size)] * grid.dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def spacetime_integral(density: np.ndarray, times: TimeGrid, grid: Grid) -> float:
    """``sum_j W_j sum_y density_j(y) h**n`` with the cell time weights."""
    w = times.cell_weights()
    return float(np.tensordot(w, density.reshape(len(w), -1).sum(axis=1), axes=1) * grid.cell_volume)


def _magnitude(F) -> np.ndarray:
    return F.magnitude() if isinstance(F, SpaceTimeField) else np.abs(np.asarray(F, dtype=float))


# ---------------------------------------------------------------------------
# ball averages, Hardy-Littlewood maximal function, spreading


def ball_averages(values: np.ndarray, family: BallFamily) -> np.ndarray:
    """Averages of ``values`` over every family ball, shape ``(radii, centers)``."""
    g = family.grid
    stack = np.asarray(values, dtype=float).reshape((1,) + g.shape)
    out = np.empty((len(family.radii), len(family.centers)))
    for i, r in enumerate(family.radii):
        offs = family.disc_offsets(r)
        s = stencil_reduce(stack, offs, np.zeros(len(offs), dtype=np.int64), family.centers)
        out[i] = s / len(offs)
    return out


def _spread_max(table: np.ndarray, family: BallFamily) -> np.ndarray:
    """``out(x) = max over family balls containing x of table[ball]``."""
    g = family.grid
    pts = _all_points(g)
    out = np.full(len(pts), -np.inf)
    for i, r in enumerate(family.radii):
        grid_vals = np.full(g.shape, -np.inf)
        grid_vals[tuple(family.centers.T)] = table[i]
        offs = family.disc_offsets(r)
        red = stencil_reduce(grid_vals.reshape((1,) + g.shape), offs,
                             np.zeros(len(offs), dtype=np.int64), pts, use_max=True)
        np.maximum(out, red, out=out)
    return out.reshape(g.shape)


def hl_maximal(f: np.ndarray, family: BallFamily) -> np.ndarray:
    """Centred-family Hardy-Littlewood maximal function of ``|f|``.

    ``Mf(x)`` is the largest average of ``|f|`` over family balls containing ``x``.
    """
    return _spread_max(ball_averages(np.abs(f), family), family)


# ---------------------------------------------------------------------------
# tent norms


@dataclass
class TentNormReport:
    """Sup over family balls of ``(|B|^{-1} int_{B x [0, R^2]} |F|^p)^{1/p}``."""

    p: int
    value: float
    argmax: dict
    table: np.ndarray
    family: BallFamily

    def to_json(self) -> dict:
        return {
            "norm": f"T^inf,{self.p}",
            "p": self.p,
            "value": self.value,
            "argmax": self.argmax,
            "family": {"stride": self.family.stride, "radii": list(self.family.radii)},
        }

    def write_table(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["center", "radius", "average"])
            for i, r in enumerate(self.family.radii):
                for c, v in zip(self.family.centers, self.table[i]):
                    w.writerow([" ".join(map(str, c)), r, v])


def tent_norm(F, p: int, family: BallFamily, times: TimeGrid | None = None) -> TentNormReport:
    """Discrete ``T^{inf,p}`` norm of a space-time field over a ball family.

    For a ball of radius ``R`` the time integral runs over ``[0, R^2]`` with
    the interval weights of the time grid (the integrand is held constant on
    ``[0, t_min]``).
    """
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    if isinstance(F, SpaceTimeField):
        times = F.times
    elif times is None:
        raise ValueError("times required for raw magnitude arrays")
    mag = _magnitude(F) ** p
    g = family.grid
    table = np.empty((len(family.radii), len(family.centers)))
    flat = mag.reshape(times.count, -1)
    for i, r in enumerate(family.radii):
        w = times.interval_weights(r * r)
        dens = (w @ flat).reshape((1,) + g.shape)
        offs = family.disc_offsets(r)
        s = stencil_reduce(dens, offs, np.zeros(len(offs), dtype=np.int64), family.centers)
        table[i] = s / len(offs)
    i, c = np.unravel_index(int(np.argmax(table)), table.shape)
    value = float(table[i, c]) ** (1.0 / p)
    argmax = {"center": [int(v) for v in family.centers[c]], "radius": family.radii[i]}
    return TentNormReport(p, value, argmax, table, family)


def _sup_weighted(F: SpaceTimeField, power: float) -> float:
    mag = F.magnitude().reshape(len(F), -1).max(axis=1)
    return float(np.max(F.times.times**power * mag))


def x_norm(u: SpaceTimeField, family: BallFamily | None = None) -> float:
    """``max_t t^{1/2} sup|u(t)| + ||u||_{T^{inf,2}}``."""
    family = BallFamily.default(u.grid) if family is None else family
    return _sup_weighted(u, 0.5) + tent_norm(u, 2, family).value


def y_norm(alpha: SpaceTimeField, family: BallFamily | None = None) -> float:
    """``max_t t sup|alpha(t)| + ||alpha||_{T^{inf,1}}``."""
    family = BallFamily.default(alpha.grid) if family is None else family
    return _sup_weighted(alpha, 1.0) + tent_norm(alpha, 1, family).value


# ---------------------------------------------------------------------------
# cone functionals


def nontangential_max(u, times: TimeGrid | None = None, grid: Grid | None = None) -> np.ndarray:
    """``N(u)(x) = max over the closed cone at x of |u|``."""
    mag = _magnitude(u)
    if isinstance(u, SpaceTimeField):
        times, grid = u.times, u.grid
    cone = ConeIndex(grid, times)
    suffix = np.maximum.accumulate(mag[::-1], axis=0)[::-1]
    out = stencil_reduce(suffix, cone.offsets, cone.first_level, _all_points(grid), use_max=True)
    return out.reshape(grid.shape)


def t1inf_norm(u) -> float:
    """L1 norm of the non-tangential maximal function."""
    return float(np.sum(nontangential_max(u)) * u.grid.cell_volume)


def _cone_density(mag2: np.ndarray, times: TimeGrid, grid: Grid) -> np.ndarray:
    w = times.cell_weights() * times.times ** (-grid.dim / 2) * grid.cell_volume
    return mag2 * w.reshape((-1,) + (1,) * grid.dim)


def square_function(u, height: float | None = None, times: TimeGrid | None = None,
                    grid: Grid | None = None) -> np.ndarray:
    """Parabolic square function, optionally truncated to cones of height ``height``.

    ``S(u)(x)^2 = sum over cone samples of W_j t_j^{-n/2} |u(t_j, y)|^2 h^n``.
    """
    mag = _magnitude(u)
    if isinstance(u, SpaceTimeField):
        times, grid = u.times, u.grid
    dens = _cone_density(mag**2, times, grid)
    if height is not None:
        dens = dens * (times.times <= height**2 * (1 + _TOL)).reshape((-1,) + (1,) * grid.dim)
    suffix = np.cumsum(dens[::-1], axis=0)[::-1]
    cone = ConeIndex(grid, times)
    out = stencil_reduce(suffix, cone.offsets, cone.first_level, _all_points(grid))
    return np.sqrt(np.maximum(out, 0.0)).reshape(grid.shape)


def t12_norm(u) -> float:
    """L1 norm of the square function."""
    return float(np.sum(square_function(u)) * u.grid.cell_volume)


def _closed_disc_sums(values: np.ndarray, grid: Grid, radii2: np.ndarray) -> np.ndarray:
    """FFT sums of ``values[j]`` over closed discs of squared radius ``radii2[j]``."""
    offs = grid.offsets()
    d2 = _offset_dist2(grid, offs).reshape(grid.shape)
    axes = tuple(range(1, 1 + grid.dim))
    fv = np.fft.fftn(values, axes=axes)
    masks = (d2[None] <= radii2.reshape((-1,) + (1,) * grid.dim) * (1 + _TOL)).astype(float)
    return np.fft.ifftn(fv * np.conj(np.fft.fftn(masks, axes=axes)), axes=axes).real


def truncated_square_functions(u) -> np.ndarray:
    """``S_h(u)`` for every sampled height ``h = sqrt(t_J)``, shape ``(T, N, ..., N)``.

    Evaluated with FFT disc sums, independently of the stencil kernel.
    """
    dens = _cone_density(u.magnitude() ** 2, u.times, u.grid)
    sums = _closed_disc_sums(dens, u.grid, u.times.times)
    return np.sqrt(np.maximum(np.cumsum(sums, axis=0), 0.0))


def cauchy_schwarz_check(F: SpaceTimeField, G: SpaceTimeField) -> float:
    """``int |F||G| / int S(F) S(G)``; at most 1 on the lattice."""
    lhs = spacetime_integral(F.magnitude() * G.magnitude(), F.times, F.grid)
    rhs = float(np.sum(square_function(F) * square_function(G)) * F.grid.cell_volume)
    return lhs / rhs if rhs > 0 else 0.0


# ---------------------------------------------------------------------------
# tents and Carleson functionals


def _complement_distance(grid: Grid, radius: float) -> np.ndarray:
    """Distance from each offset to the complement of the open ball ``B(0, radius)``."""
    offs = grid.offsets()
    inside = (_offset_dist2(grid, offs) < radius**2 * (1 - _TOL)).reshape(grid.shape)
    return set_tent_distance(grid, inside)


def tent_membership(grid: Grid, times: TimeGrid, radius: float) -> np.ndarray:
    """Boolean ``(T, N, ..., N)``: sample ``(t_j, delta)`` lies in the tent over ``B(0, radius)``.

    Offsets are stored in FFT order (index ``m`` means offset ``m`` modulo ``N``).
    """
    dist = _complement_distance(grid, radius)
    t = times.times.reshape((-1,) + (1,) * grid.dim)
    return t <= dist[None] ** 2 * (1 + _TOL)


def _tent_levels(grid: Grid, times: TimeGrid, radius: float):
    offs = grid.offsets()
    dist = _complement_distance(grid, radius).ravel()
    keep = dist > 0
    lev = np.searchsorted(times.times, dist[keep] ** 2 * (1 + _TOL), side="right") - 1
    return offs[keep], lev.astype(np.int64)


def tent_masses(mu: np.ndarray, times: TimeGrid, family: BallFamily) -> np.ndarray:
    """``mu(tent(B))`` for every family ball, shape ``(radii, centers)``.

    ``mu`` is a nonnegative density on the space-time samples; the measure of a
    sample is ``W_j h**n`` times the density.
    """
    g = family.grid
    w = times.cell_weights() * g.cell_volume
    prefix = np.cumsum(mu * w.reshape((-1,) + (1,) * g.dim), axis=0)
    out = np.empty((len(family.radii), len(family.centers)))
    for i, r in enumerate(family.radii):
        offs, lev = _tent_levels(g, times, r)
        out[i] = stencil_reduce(prefix, offs, lev, family.centers)
    return out


def carleson_functional(mu, family: BallFamily, times: TimeGrid | None = None) -> np.ndarray:
    """``C(mu)(x)``: largest ``mu(tent(B))/|B|`` over family balls containing ``x``."""
    if isinstance(mu, SpaceTimeField):
        times = mu.times
    dens = _magnitude(mu)
    vols = np.array([family.volume(r) for r in family.radii])
    table = tent_masses(dens, times, family) / vols[:, None]
    return _spread_max(table, family)


def c2_functional(F: SpaceTimeField, family: BallFamily) -> np.ndarray:
    """``C(|F|^2)^{1/2}``."""
    return np.sqrt(carleson_functional(F.magnitude() ** 2, family, F.times))


@dataclass
class RatioResult:
    """A measured ratio; ``vacuous`` when the denominator vanishes."""

    ratio: float
    numerator: float
    denominator: float

    @property
    def vacuous(self) -> bool:
        return self.denominator == 0

    def to_json(self) -> dict:
        return {"ratio": self.ratio, "numerator": self.numerator,
                "denominator": self.denominator, "vacuous": self.vacuous}


def _ratio(num: float, den: float) -> RatioResult:
    return RatioResult(num / den if den > 0 else float("nan"), num, den)


def carleson_embedding_check(H: SpaceTimeField, mu: np.ndarray, family: BallFamily) -> RatioResult:
    """``int |H| dmu / int N(H) C(mu) dx``."""
    g = H.grid
    num = spacetime_integral(H.magnitude() * mu, H.times, g)
    den = float(np.sum(nontangential_max(H) * carleson_functional(mu, family, H.times)) * g.cell_volume)
    return _ratio(num, den)


def default_nu(dim: int) -> float:
    return 3.0**dim * 100.0


def stopping_height(F: SpaceTimeField, nu: float | None = None,
                    family: BallFamily | None = None) -> np.ndarray:
    """Largest sampled height ``h`` with ``S_h(F)(x) <= nu C_2(F)(x)``; 0 if none."""
    nu = default_nu(F.grid.dim) if nu is None else nu
    if not nu > 0:
        raise ValueError("nu must be positive")
    family = BallFamily.default(F.grid) if family is None else family
    sh = truncated_square_functions(F)
    c2 = c2_functional(F, family)
    ok = sh <= nu * c2[None] * (1 + 1e-9) + 1e-300
    heights = np.sqrt(F.times.times)
    # S_h grows with h, so admissible heights form a prefix
    count = np.sum(np.cumprod(ok, axis=0), axis=0)
    return np.where(count > 0, heights[np.maximum(count - 1, 0)], 0.0)


def stopping_set_fraction(hgt: np.ndarray, family: BallFamily) -> np.ndarray:
    """Per ball ``B(c, R)``: fraction of ``B`` where the stopping height is at least ``R``."""
    out = np.empty((len(family.radii), len(family.centers)))
    for i, r in enumerate(family.radii):
        ind = (hgt >= r * (1 - 1e-9)).astype(float)
        out[i] = ball_averages(ind, family.subfamily(radii=(r,)))[0]
    return out


def pairing_check(F: SpaceTimeField, G: SpaceTimeField, family: BallFamily) -> RatioResult:
    """``int |F||G| / int C_2(F) S(G) dx``."""
    g = F.grid
    num = spacetime_integral(F.magnitude() * G.magnitude(), F.times, g)
    den = float(np.sum(c2_functional(F, family) * square_function(G)) * g.cell_volume)
    return _ratio(num, den)


def ball_mask_at(grid: Grid, center, radius: float) -> np.ndarray:
    """Open torus ball about a physical ``center`` (need not be a lattice point)."""
    c = np.asarray(center, dtype=float)
    d2 = np.zeros(grid.shape)
    for ax in range(grid.dim):
        x = grid.h * np.arange(grid.size) - c[ax]
        x = np.abs(x) % grid.box
        x = np.minimum(x, grid.box - x)
        sh = [1] * grid.dim
        sh[ax] = grid.size
        d2 = d2 + (x**2).reshape(sh)
    return d2 < radius**2 * (1 - _TOL)


def ball_volume_at(grid: Grid, center, radius: float) -> float:
    return float(np.count_nonzero(ball_mask_at(grid, center, radius)) * grid.cell_volume)


def set_tent_distance(grid: Grid, mask: np.ndarray) -> np.ndarray:
    """Euclidean torus distance from each lattice point to the complement of ``mask``.

    Infinite everywhere when the complement is empty.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        return np.full(grid.shape, np.inf)
    tiled = np.tile(mask, (3,) * grid.dim)
    dist = distance_transform_edt(tiled, sampling=grid.h)
    core = tuple(slice(grid.size, 2 * grid.size) for _ in range(grid.dim))
    return dist[core]


def tent_mask(grid: Grid, times: TimeGrid, mask: np.ndarray) -> np.ndarray:
    """Samples ``(t_j, y)`` with ``dist(y, complement) >= sqrt(t_j)``; shape ``(T, N, ..., N)``."""
    dist = set_tent_distance(grid, mask)
    t = times.times.reshape((-1,) + (1,) * grid.dim)
    return t <= dist[None] ** 2 * (1 + _TOL)


def carleson_tent_comparison(F: SpaceTimeField, family: BallFamily) -> float:
    """``||C(F)||_inf`` over ``||F||_{T^{inf,1}}`` measured on the half-radius family.

    Comparing the tent over ``B(x, 2r)`` with the cylinder over ``B(x, r)`` is
    what the inclusion of cylinders in tents controls, so the denominator uses
    the radii whose doubles belong to ``family``.
    """
    half = [r for r in family.radii if any(abs(2 * r - q) < 1e-9 * q for q in family.radii)]
    if not half:
        raise ValueError("family has no radius pair (r, 2r)")
    den = tent_norm(F, 1, family.subfamily(radii=half)).value
    num = float(carleson_functional(F, family).max())
    return num / den if den > 0 else float("nan")

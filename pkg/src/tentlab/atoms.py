"""Whitney covers, tent-space atoms, Hardy norms and molecules.

Space-time fields here are handled through physical values of shape
``(T, components..., N, ..., N)`` so that supports stay exact; integrals use
the cell time weights and the lattice cell volume.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_cdt

from ._kernels import stencil_reduce
from .grid import Field, Grid, SpaceTimeField, TimeGrid
from .operators import heat_coeffs, leray_coeffs
from .tent import (
    BallFamily,
    _all_points,
    ball_mask_at,
    ball_volume_at,
    hl_maximal,
    nontangential_max,
    square_function,
    tent_mask,
)

__all__ = [
    "WhitneyCover",
    "whitney_decompose",
    "Atom",
    "AtomicDecomposition",
    "AtomCheck",
    "atomic_decompose",
    "atom_validate",
    "gamma_upper",
    "overlap_deficit",
    "hardy_maximal",
    "hardy_norm",
    "MoleculeReport",
    "molecule_validate",
    "calM_apply",
    "heat_extension_check",
    "a2star_apply",
    "measure_lower_bound",
    "scaled_atom",
]

_TOL = 1e-12


# ---------------------------------------------------------------------------
# Whitney decomposition


@dataclass
class WhitneyCover:
    """Disjoint periodic dyadic cubes covering a lattice set.

    ``cubes`` holds ``(corner, side)`` pairs in lattice units; ``balls`` holds
    ``(center, radius)`` pairs in physical units. Cube size and distance are
    measured in the sup-norm: a cube of ``side`` points has diameter
    ``side * h`` and its distance to the complement lies in
    ``[diameter, 4 * diameter]``.
    """

    grid: Grid
    cubes: list
    balls: list
    distances: np.ndarray

    def labels(self) -> np.ndarray:
        """Cube index of every lattice point, ``-1`` outside the cover."""
        lab = np.full(self.grid.shape, -1, dtype=np.int64)
        for i, (corner, side) in enumerate(self.cubes):
            lab[_cube_slices(self.grid, corner, side)] = i
        return lab

    def sandwich_ok(self) -> np.ndarray:
        h = self.grid.h
        sides = np.array([s for _, s in self.cubes], dtype=float) * h
        d = self.distances
        return (sides <= d * (1 + _TOL)) & (d <= 4 * sides * (1 + _TOL))


def _cube_slices(grid: Grid, corner, side):
    return tuple(slice(c, c + side) for c in corner)


def _sup_distance(grid: Grid, mask: np.ndarray) -> np.ndarray:
    """Sup-norm lattice distance (physical units) to the complement of ``mask``."""
    tiled = np.tile(mask, (3,) * grid.dim)
    d = distance_transform_cdt(tiled, metric="chessboard").astype(float)
    core = tuple(slice(grid.size, 2 * grid.size) for _ in range(grid.dim))
    return d[core] * grid.h


def whitney_decompose(grid: Grid, O: np.ndarray) -> WhitneyCover:
    """Largest-first greedy Whitney cover of a proper nonempty lattice set ``O``."""
    O = np.asarray(O, dtype=bool)
    if O.shape != grid.shape:
        raise ValueError("mask does not match the grid")
    if not O.any():
        raise ValueError("cannot decompose an empty set")
    if O.all():
        raise ValueError("cannot decompose the whole torus: complement is empty")
    n, N, h = grid.dim, grid.size, grid.h
    dist = _sup_distance(grid, O)
    covered = np.zeros(grid.shape, dtype=bool)
    cubes, balls, dists = [], [], []
    side = N // 2
    while side >= 1:
        m = N // side
        blocks = dist.reshape(sum(((m, side) for _ in range(n)), ())).min(axis=tuple(range(1, 2 * n, 2)))
        cov = covered.reshape(sum(((m, side) for _ in range(n)), ())).any(axis=tuple(range(1, 2 * n, 2)))
        s = side * h
        ok = (blocks >= s * (1 - _TOL)) & (blocks <= 4 * s * (1 + _TOL)) & ~cov
        for idx in np.argwhere(ok):
            corner = tuple(int(i) * side for i in idx)
            covered[_cube_slices(grid, corner, side)] = True
            cubes.append((corner, side))
            center = (np.array(corner) + (side - 1) / 2) * h
            balls.append((center, 1.5 * np.sqrt(n) * s))
            dists.append(float(blocks[tuple(idx)]))
        side //= 2
    if not np.array_equal(covered, O):
        raise RuntimeError("Whitney selection did not cover the set")
    return WhitneyCover(grid, cubes, balls, np.array(dists))


# ---------------------------------------------------------------------------
# atoms


def overlap_deficit(dim: int) -> float:
    """Largest ``|B(x,r) \\ B(y,r)| / |B|`` over ``|x - y| <= r``."""
    if dim == 2:
        return 1 - (2 * np.pi / 3 - np.sqrt(3) / 2) / np.pi
    if dim == 3:
        return 1 - 5 / 16
    raise ValueError("dim must be 2 or 3")


def gamma_upper(dim: int) -> float:
    """Upper end of the admissible dilation parameter range ``(0, 1 - eps_n)``."""
    return 1 - overlap_deficit(dim)


@dataclass
class Atom:
    """One atom: region (flat sample indices), ball, coefficient."""

    level: int
    cube: tuple
    center: np.ndarray
    radius: float
    volume: float
    coefficient: float
    region: np.ndarray

    def to_json(self) -> dict:
        return {"level": self.level, "ball": {"center": [float(c) for c in self.center],
                                              "radius": self.radius},
                "lambda": self.coefficient, "region_size": int(len(self.region))}


@dataclass
class AtomicDecomposition:
    """Atoms ``a = G 1_region / lambda`` with ``sum lambda a = G``."""

    grid: Grid
    times: TimeGrid
    values: np.ndarray
    atoms: list
    gamma: float
    levels: list
    dilated_sets: dict = field(default_factory=dict)
    level_sets: dict = field(default_factory=dict)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([a.coefficient for a in self.atoms])

    def _sample_shape(self):
        return (self.times.count,) + self.grid.shape

    def atom_values(self, i: int) -> np.ndarray:
        atom = self.atoms[i]
        mask = np.zeros(int(np.prod(self._sample_shape())), dtype=bool)
        mask[atom.region] = True
        mask = mask.reshape(self._sample_shape())
        comp = self.values.ndim - 1 - self.grid.dim
        m = mask.reshape((mask.shape[0],) + (1,) * comp + self.grid.shape)
        return np.where(m, self.values, 0.0) / atom.coefficient

    def _flat_samples(self, values: np.ndarray) -> np.ndarray:
        """View ``(T, comp..., N...)`` as ``(T * N^n, comp)`` rows indexed like atom regions."""
        comp = values.ndim - 1 - self.grid.dim
        moved = np.moveaxis(values, tuple(range(1, 1 + comp)), tuple(range(-comp, 0)))
        return moved.reshape(int(np.prod(self._sample_shape())), -1)

    def reconstruct(self) -> np.ndarray:
        """``sum lambda a`` accumulated over each atom's region."""
        src = self._flat_samples(self.values)
        acc = np.zeros_like(src)
        for a in self.atoms:
            acc[a.region] += a.coefficient * (src[a.region] / a.coefficient)
        comp = self.values.ndim - 1 - self.grid.dim
        shaped = acc.reshape(self._sample_shape() + self.values.shape[1 : 1 + comp])
        return np.moveaxis(shaped, tuple(range(-comp, 0)), tuple(range(1, 1 + comp))) if comp else \
            shaped.reshape(self.values.shape)

    def region_masks_disjoint(self) -> bool:
        seen = np.zeros(int(np.prod(self._sample_shape())), dtype=np.int64)
        for a in self.atoms:
            seen[a.region] += 1
        return bool(seen.max(initial=0) <= 1)

    def manifest(self) -> dict:
        return {"params": {"gamma": self.gamma, "levels": self.levels},
                "atoms": [a.to_json() for a in self.atoms]}

    def write_manifest(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2)


def _values(G) -> tuple[np.ndarray, Grid, TimeGrid]:
    if isinstance(G, SpaceTimeField):
        return np.array(G.values), G.grid, G.times
    raise TypeError("expected a SpaceTimeField")


def _sample_magnitude(values: np.ndarray, grid: Grid) -> np.ndarray:
    comp = values.ndim - 1 - grid.dim
    if comp == 0:
        return np.abs(values)
    return np.sqrt(np.sum(values**2, axis=tuple(range(1, 1 + comp))))


def atomic_decompose(G: SpaceTimeField, gamma: float = 0.25, family: BallFamily | None = None,
                     values: np.ndarray | None = None) -> AtomicDecomposition:
    """Level-set atomic decomposition of a tent-space field.

    Parameters
    ----------
    G : SpaceTimeField
        Field to decompose. ``values`` may override its physical samples
        (used for exactly supported inputs).
    gamma : float
        Dilation parameter in ``(0, 1 - eps_n)``.
    family : BallFamily, optional
        Family for the maximal function defining the dilated level sets.
    """
    grid, times = G.grid, G.times
    if not 0 < gamma < gamma_upper(grid.dim):
        raise ValueError(f"gamma must lie in (0, {gamma_upper(grid.dim):.4f}), got {gamma}")
    family = BallFamily.default(grid) if family is None else family
    vals = np.array(G.values) if values is None else np.asarray(values, dtype=float)
    mag = _sample_magnitude(vals, grid)
    S = square_function(mag, times=times, grid=grid)
    dec = AtomicDecomposition(grid, times, vals, [], gamma, [])
    pos = S[S > 0]
    if pos.size == 0:
        return dec
    k_lo = int(np.floor(np.log2(pos.min()))) - 1
    k_hi = int(np.floor(np.log2(pos.max())))
    w = times.cell_weights() * grid.cell_volume
    dens = mag**2 * w.reshape((-1,) + (1,) * grid.dim)
    support = mag > 0

    def dilate(k):
        Ok = S > 2.0**k
        if not Ok.any():
            return Ok, Ok
        return Ok, Ok | (hl_maximal(Ok.astype(float), family) > 1 - gamma)

    tents = {}
    for k in range(k_lo, k_hi + 2):
        Ok, Ostar = dilate(k)
        dec.level_sets[k] = Ok
        dec.dilated_sets[k] = Ostar
        tents[k] = tent_mask(grid, times, Ostar) if Ostar.any() else np.zeros(support.shape, bool)
    dec.levels = list(range(k_lo, k_hi + 1))
    for k in dec.levels:
        delta = tents[k] & ~tents[k + 1] & support
        if not delta.any():
            continue
        Ostar = dec.dilated_sets[k]
        if Ostar.all():
            cubes = [((0,) * grid.dim, grid.size)]
            labels = np.zeros(grid.shape, dtype=np.int64)
            base = [(np.full(grid.dim, (grid.size - 1) / 2 * grid.h), grid.box)]
        else:
            cover = whitney_decompose(grid, Ostar)
            cubes, labels, base = cover.cubes, cover.labels(), cover.balls
        tj, *ys = np.nonzero(delta)
        lab = labels[tuple(ys)]
        ys = np.stack(ys, axis=1)
        flat = np.ravel_multi_index((tj,) + tuple(ys.T), delta.shape)
        for j in np.unique(lab):
            sel = lab == j
            center, r0 = base[j]
            # torus offsets from the cube centre
            d = np.abs(ys[sel] * grid.h - center) % grid.box
            d = np.minimum(d, grid.box - d)
            reach = np.sqrt(times.times[tj[sel]]) + np.sqrt(np.sum(d**2, axis=1))
            radius = max(r0, float(reach.max()) * (1 + 1e-9))
            mu = float(np.sum(dens.ravel()[flat[sel]]))
            if mu == 0:
                continue
            vol = ball_volume_at(grid, center, radius)
            dec.atoms.append(Atom(k, cubes[j], np.asarray(center), radius, vol,
                                  float(np.sqrt(vol * mu)), flat[sel]))
    return dec


@dataclass
class AtomCheck:
    """Outcome of :func:`atom_validate`."""

    support_ok: bool
    norm: float
    bound: float
    outside_mass: float

    @property
    def norm_ok(self) -> bool:
        return self.norm <= self.bound * (1 + 1e-10)

    @property
    def passed(self) -> bool:
        return self.support_ok and self.norm_ok

    @property
    def margin(self) -> float:
        return self.bound - self.norm

    @property
    def reason(self) -> str:
        if not self.support_ok:
            return "support"
        if not self.norm_ok:
            return "norm"
        return "ok"


def atom_validate(a, times: TimeGrid, grid: Grid, center, radius: float,
                  rtol: float = 1e-12) -> AtomCheck:
    """Check that ``a`` lives in the tent over ``B(center, radius)`` with
    ``||a||_{L^2} <= |B|^{-1/2}``.

    ``a`` is a SpaceTimeField or physical samples ``(T, comp..., N, ..., N)``.
    Samples below ``rtol * max|a|`` count as zero (spectral round-off).
    """
    vals = np.array(a.values) if isinstance(a, SpaceTimeField) else np.asarray(a, dtype=float)
    mag = _sample_magnitude(vals, grid)
    ball = ball_mask_at(grid, center, radius)
    tent = tent_mask(grid, times, ball)
    peak = float(mag.max(initial=0.0))
    outside = mag * ~tent
    support_ok = bool(np.all(outside <= rtol * peak))
    w = times.cell_weights() * grid.cell_volume
    norm = float(np.sqrt(np.sum(mag**2 * w.reshape((-1,) + (1,) * grid.dim))))
    bound = float(np.count_nonzero(ball) * grid.cell_volume) ** -0.5
    return AtomCheck(support_ok, norm, bound, float(outside.max(initial=0.0)))


def measure_lower_bound(dec: AtomicDecomposition, samples: int = 64, seed: int = 0) -> float:
    """Spot-check ``t^{n/2} <= C |B(y, sqrt t) ∩ B_j ∩ O_{k+1}^c|`` and return the largest ``C``.

    Samples ``x`` in ``B_j ∩ O_{k+1}^c``, a time ``t_j`` and ``y`` with
    ``|x - y| <= sqrt(t)``; the ball about ``y`` is taken closed on the lattice.
    """
    grid, times = dec.grid, dec.times
    rng = np.random.default_rng(seed)
    worst = 0.0
    pts = _all_points(grid)
    for atom in dec.atoms:
        upper = dec.level_sets.get(atom.level + 1, np.zeros(grid.shape, bool))
        F = ball_mask_at(grid, atom.center, atom.radius) & ~upper
        cand = np.argwhere(F)
        if len(cand) == 0:
            continue
        for _ in range(max(1, samples // max(1, len(dec.atoms)))):
            x = cand[rng.integers(len(cand))]
            j = int(rng.integers(times.count))
            t = times.times[j]
            r = np.sqrt(t) / grid.h
            off = rng.uniform(-r, r, size=grid.dim)
            off *= min(1.0, r / max(np.linalg.norm(off), 1e-300))
            step = np.round(off).astype(int)
            if np.sum(step.astype(float) ** 2) * grid.h**2 > t * (1 + _TOL):
                continue
            y = (x + step) % grid.size
            d = np.abs(pts - y) % grid.size
            d = np.minimum(d, grid.size - d)
            near = (np.sum(d.astype(float) ** 2, axis=1) * grid.h**2 <= t * (1 + _TOL)).reshape(grid.shape)
            meas = np.count_nonzero(near & F) * grid.cell_volume
            worst = max(worst, t ** (grid.dim / 2) / meas)
    return worst


def scaled_atom(grid: Grid, times: TimeGrid, center, radius: float,
                component: int = 0) -> np.ndarray:
    """Vector atom ``phi(t/R^2, (x - c)/R)`` normalized to ``||a|| = |B|^{-1/2}``.

    The profile ``(1 - |z| - sqrt(tau))_+^2`` lives in the unit tent, so the
    samples lie in the tent over ``B(center, radius)``.
    """
    c = np.asarray(center, dtype=float)
    d2 = np.zeros(grid.shape)
    for ax in range(grid.dim):
        x = np.abs(grid.h * np.arange(grid.size) - c[ax]) % grid.box
        x = np.minimum(x, grid.box - x)
        sh = [1] * grid.dim
        sh[ax] = grid.size
        d2 = d2 + (x**2).reshape(sh)
    z = np.sqrt(d2)[None] / radius
    tau = (times.times / radius**2).reshape((-1,) + (1,) * grid.dim)
    prof = np.clip(1 - z - np.sqrt(tau), 0, None) ** 2
    vals = np.zeros((times.count, grid.dim) + grid.shape)
    vals[:, component] = prof
    w = times.cell_weights() * grid.cell_volume
    norm = np.sqrt(np.sum(prof**2 * w.reshape((-1,) + (1,) * grid.dim)))
    if norm == 0:
        raise ValueError("atom scale is not resolved by the time grid")
    vol = ball_volume_at(grid, c, radius)
    return vals / (norm * np.sqrt(vol))


# ---------------------------------------------------------------------------
# Hardy space, molecules, and the operator M


def hardy_maximal(f: np.ndarray, grid: Grid, times: TimeGrid) -> np.ndarray:
    """Gaussian non-tangential maximal function of a scalar ``f`` (physical values).

    ``M*f(x) = max over tau in {0} ∪ times and |y - x| < sqrt(tau)`` of
    ``|exp(tau Lap) f (y)|``.
    """
    c = np.fft.fftn(f)
    ext = np.fft.ifftn(heat_coeffs(np.broadcast_to(c, (times.count,) + c.shape), grid, times.times),
                       axes=tuple(range(1, 1 + grid.dim))).real
    stack = np.concatenate([np.abs(f)[None], np.abs(ext)], axis=0)
    suffix = np.maximum.accumulate(stack[::-1], axis=0)[::-1]
    offs = grid.offsets()
    d2 = np.sum(offs.astype(float) ** 2, axis=1) * grid.h**2
    # open balls: offset enters at the first tau strictly above |offset|^2
    lev = np.searchsorted(times.times, d2 * (1 + _TOL), side="right") + 1
    lev = np.where(d2 == 0, 0, lev)
    lev = np.where(lev <= times.count, lev, -1).astype(np.int64)
    out = stencil_reduce(suffix, offs, lev, _all_points(grid), use_max=True)
    return out.reshape(grid.shape)


def _components(f, grid: Grid) -> np.ndarray:
    vals = np.array(f.values) if isinstance(f, Field) else np.asarray(f, dtype=float)
    return vals.reshape((-1,) + grid.shape)


def hardy_norm(f, grid: Grid, times: TimeGrid | None = None) -> float:
    """``||M* f||_{L^1}``, summed over components."""
    times = TimeGrid.default(grid) if times is None else times
    return float(sum(np.sum(hardy_maximal(c, grid, times)) for c in _components(f, grid))
                 * grid.cell_volume)


@dataclass
class MoleculeReport:
    """Weighted-norm triple and moment residuals of a candidate molecule."""

    p: float
    q: float
    b: float
    theta: float
    norm_triple: float
    lq_norm: float
    weighted_lq_norm: float
    moment_residuals: list
    moment_tolerance: float

    @property
    def moments_ok(self) -> bool:
        return all(r <= self.moment_tolerance for r in self.moment_residuals)

    def to_json(self) -> dict:
        return {"p": self.p, "q": self.q, "b": self.b, "theta": self.theta,
                "norm_triple": self.norm_triple, "lq_norm": self.lq_norm,
                "weighted_lq_norm": self.weighted_lq_norm,
                "moment_residuals": self.moment_residuals, "moments_ok": self.moments_ok}


def molecule_validate(m, grid: Grid, x0, q: float = 1.25, b: float | None = None,
                      p: float = 1.0, rtol: float = 1e-10) -> MoleculeReport:
    """Molecule diagnostics for ``p = 1``.

    ``|||m||| = ||m||_q^{1-theta} || |x - x0|^{n b} m ||_q^theta`` with
    ``theta = (1 - 1/q)/b``; the only moment is the mean. Matrix or vector
    fields use the pointwise Euclidean norm and per-component means.
    """
    n = grid.dim
    if p != 1:
        raise ValueError("only p = 1 is supported")
    if not 1 < q < n / (n - 1):
        raise ValueError(f"q must lie in (1, {n / (n - 1)}), got {q}")
    b = 2 * (q - 1) / q if b is None else b
    gap = 1 / p - 1 / q
    if not b > gap:
        raise ValueError(f"b must exceed {gap}, got {b}")
    theta = gap / b
    comps = _components(m, grid)
    mag = np.sqrt(np.sum(comps**2, axis=0))
    c = np.asarray(x0, dtype=float)
    d2 = np.zeros(grid.shape)
    for ax in range(n):
        x = np.abs(grid.h * np.arange(grid.size) - c[ax]) % grid.box
        x = np.minimum(x, grid.box - x)
        sh = [1] * n
        sh[ax] = grid.size
        d2 = d2 + (x**2).reshape(sh)
    dv = grid.cell_volume
    lq = float(np.sum(mag**q) * dv) ** (1 / q)
    wlq = float(np.sum((mag * d2 ** (n * b / 2)) ** q) * dv) ** (1 / q)
    triple = lq ** (1 - theta) * wlq**theta if lq > 0 else 0.0
    means = [abs(float(np.sum(cc) * dv)) for cc in comps]
    scale = float(np.sum(mag) * dv)
    return MoleculeReport(p, q, b, theta, triple, lq, wlq, means, rtol * max(scale, 1e-300))


def calM_apply(G: SpaceTimeField) -> Field:
    """``sum_j W_j grad P exp(t_j Lap) G(t_j)`` for a vector field ``G``.

    The gradient of a vector ``v`` is the tensor ``(grad v)_{ij} = d_j v_i``,
    the negative adjoint of the row-wise divergence.
    """
    if G.rank != 1:
        raise ValueError("calM_apply expects a vector space-time field")
    grid = G.grid
    w = G.times.cell_weights()
    c = leray_coeffs(heat_coeffs(G.coeffs, grid, G.times.times), grid)
    acc = np.tensordot(w, c, axes=1)
    grad = acc[:, None] * (1j * grid.kd)[None]
    return Field(grid, grad)


def a2star_apply(G: SpaceTimeField, times: TimeGrid | None = None) -> SpaceTimeField:
    """Adjoint of the sampled tail operator: ``s -> -exp(s Lap) M G``.

    The sign comes from the divergence in the forward operator; with it the
    pairing identity holds exactly for the cell-weighted inner product.
    """
    times = G.times if times is None else times
    m = calM_apply(G)
    return SpaceTimeField(G.grid, times, -heat_coeffs(
        np.broadcast_to(m.coeffs, (times.count,) + m.coeffs.shape), G.grid, times.times))


def heat_extension_check(h: Field, times: TimeGrid | None = None) -> float:
    """``||N(exp(s Lap) h)||_1 / ||h||_{H^1}`` (NaN when ``h = 0``)."""
    grid = h.grid
    times = TimeGrid.default(grid) if times is None else times
    hn = hardy_norm(h, grid, times)
    if hn == 0:
        return float("nan")
    U = SpaceTimeField(grid, times, heat_coeffs(
        np.broadcast_to(h.coeffs, (times.count,) + h.coeffs.shape), grid, times.times))
    num = float(np.sum(nontangential_max(U)) * grid.cell_volume)
    return num / hn

"""Periodic grids, spectral fields and time grids.

Fields are real periodic functions on the torus ``[0, L)^n`` stored by their
normalised Fourier coefficients ``c_m = fftn(f) / N**n``, so that a constant
``c`` has ``c_0 = c`` and ``cos(x_1)`` has ``c_{(+-1, 0)} = 1/2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "TimeGrid",
    "Field",
    "SpaceTimeField",
    "make_grid",
    "transform",
    "differentiate",
    "tensor_product",
    "torus_distance2",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``size`` points per axis on a box of side ``box``."""

    dim: int
    size: int
    box: float

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        n = self.size
        if n < 8 or n & (n - 1):
            raise ValueError(f"size must be a power of two >= 8, got {n}")
        if not self.box > 0:
            raise ValueError(f"box must be positive, got {self.box}")

    @property
    def h(self) -> float:
        return self.box / self.size

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.size,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def volume(self) -> float:
        return self.box**self.dim

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer wave numbers along one axis, FFT ordering."""
        return np.fft.fftfreq(self.size, 1.0 / self.size).astype(np.int64)

    @cached_property
    def k(self) -> np.ndarray:
        """Wavevectors, shape ``(dim, N, ..., N)``."""
        k1 = 2 * np.pi / self.box * self.modes
        return np.stack(np.meshgrid(*([k1] * self.dim), indexing="ij"))

    @cached_property
    def kd(self) -> np.ndarray:
        """Wavevectors for odd symbols (derivatives, Leray); Nyquist component zeroed.

        An odd symbol cannot be real on the self-conjugate Nyquist plane, so that
        component is dropped to keep every output real.
        """
        k1 = 2 * np.pi / self.box * self.modes
        k1 = np.where(self.modes == -self.size // 2, 0.0, k1)
        return np.stack(np.meshgrid(*([k1] * self.dim), indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.k**2, axis=0)

    @cached_property
    def kd2(self) -> np.ndarray:
        return np.sum(self.kd**2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.abs(self.modes) <= self.size // 3
        mask = np.ones(self.shape, dtype=bool)
        for ax in range(self.dim):
            sh = [1] * self.dim
            sh[ax] = self.size
            mask &= keep.reshape(sh)
        return mask

    @cached_property
    def coords(self) -> np.ndarray:
        x1 = self.h * np.arange(self.size)
        return np.stack(np.meshgrid(*([x1] * self.dim), indexing="ij"))

    @cached_property
    def conj_index(self) -> tuple[np.ndarray, ...]:
        """Index arrays mapping mode ``m`` to ``-m``."""
        neg = (-np.arange(self.size)) % self.size
        return np.ix_(*([neg] * self.dim))

    def offsets(self) -> np.ndarray:
        """Minimal-image lattice offsets, shape ``(N**dim, dim)``, in index units."""
        m = np.arange(self.size)
        m = np.where(m >= self.size // 2, m - self.size, m)
        mesh = np.meshgrid(*([m] * self.dim), indexing="ij")
        return np.stack([a.ravel() for a in mesh], axis=1)


def make_grid(dim: int, size: int, box: float = 2 * np.pi) -> Grid:
    return Grid(int(dim), int(size), float(box))


def torus_distance2(grid: Grid, a, b) -> np.ndarray:
    """Squared torus distance between points given in index units (broadcasting)."""
    d = np.abs(np.asarray(a) - np.asarray(b)) % grid.size
    d = np.minimum(d, grid.size - d)
    return np.sum(d.astype(float) ** 2, axis=-1) * grid.h**2


def _hermitian(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    lead = (slice(None),) * (coeffs.ndim - grid.dim)
    flipped = np.conj(coeffs[lead + grid.conj_index])
    return 0.5 * (coeffs + flipped)


def _to_spectral(values: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(values.ndim - grid.dim, values.ndim))
    c = np.fft.fftn(values, axes=axes) / grid.size**grid.dim
    return _hermitian(c, grid)


def _to_physical(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(coeffs.ndim - grid.dim, coeffs.ndim))
    return np.fft.ifftn(coeffs * grid.size**grid.dim, axes=axes).real


@dataclass(frozen=True, eq=False)
class Field:
    """Real field of rank 0 (scalar), 1 (vector) or 2 (tensor) on ``grid``."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        g = self.grid
        if c.shape[c.ndim - g.dim:] != g.shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {g.shape}")
        comp = c.shape[: c.ndim - g.dim]
        if comp not in ((), (g.dim,), (g.dim, g.dim)):
            raise ValueError(f"unsupported component shape {comp}")
        c = np.array(c, copy=True)
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_values(cls, grid: Grid, values) -> "Field":
        return cls(grid, _to_spectral(np.asarray(values, dtype=float), grid))

    @classmethod
    def zeros(cls, grid: Grid, rank: int = 1) -> "Field":
        comp = ((), (grid.dim,), (grid.dim, grid.dim))[rank]
        return cls(grid, np.zeros(comp + grid.shape, dtype=complex))

    @property
    def rank(self) -> int:
        return self.coeffs.ndim - self.grid.dim

    @property
    def components(self) -> tuple[int, ...]:
        return self.coeffs.shape[: self.rank]

    @cached_property
    def values(self) -> np.ndarray:
        v = _to_physical(self.coeffs, self.grid)
        v.flags.writeable = False
        return v

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean (Frobenius for tensors) norm in physical space."""
        v = self.values
        if self.rank == 0:
            return np.abs(v)
        return np.sqrt(np.sum(v**2, axis=tuple(range(self.rank))))

    def norm(self) -> float:
        """Physical L2 norm."""
        return float(np.sqrt(np.sum(self.values**2) * self.grid.cell_volume))

    def spectral_norm(self) -> float:
        """L2 norm from coefficients (Parseval)."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2) * self.grid.volume))

    def mean(self) -> np.ndarray:
        idx = (slice(None),) * self.rank + (0,) * self.grid.dim
        return self.coeffs[idx].real

    def with_coeffs(self, coeffs) -> "Field":
        return Field(self.grid, coeffs)

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self.grid, other.grid)
        return Field(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self.grid, other.grid)
        return Field(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "Field":
        return Field(self.grid, a * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.coeffs)


def _same_grid(a: Grid, b: Grid):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def transform(f, direction: str, grid: Grid | None = None):
    """Discrete Fourier transform pair.

    ``direction="forward"`` maps physical values (requires ``grid``) to a
    :class:`Field`; ``"inverse"`` maps a :class:`Field` to its physical values.
    """
    if direction == "forward":
        if grid is None:
            raise ValueError("forward transform needs a grid")
        return Field.from_values(grid, f)
    if direction == "inverse":
        return np.array(f.values)
    raise ValueError(f"unknown direction {direction!r}")


def differentiate(f: Field, mode: str, axis: int | None = None) -> Field:
    """Spectral derivative: ``mode`` in ``{"partial", "gradient", "divergence"}``.

    Divergence of a tensor is taken row-wise, ``div(A)_i = sum_j d_j A_ij``.
    """
    g = f.grid
    ik = 1j * g.kd
    if mode == "partial":
        if axis is None or not 0 <= axis < g.dim:
            raise ValueError("partial derivative needs a valid axis")
        return f.with_coeffs(ik[axis] * f.coeffs)
    if mode == "gradient":
        if f.rank != 0:
            raise ValueError("gradient requires a scalar field")
        return f.with_coeffs(ik * f.coeffs)
    if mode == "divergence":
        if f.rank == 1:
            return f.with_coeffs(np.sum(ik * f.coeffs, axis=0))
        if f.rank == 2:
            return f.with_coeffs(np.sum(ik[None] * f.coeffs, axis=1))
        raise ValueError("divergence requires a vector or tensor field")
    raise ValueError(f"unknown mode {mode!r}")


def tensor_product(u: Field, v: Field) -> Field:
    """``(u (x) v)_ij = u_i v_j`` in physical space, de-aliased by the 2/3 rule."""
    _same_grid(u.grid, v.grid)
    if u.rank != 1 or v.rank != 1:
        raise ValueError("tensor_product needs two vector fields")
    prod = u.values[:, None] * v.values[None, :]
    c = _to_spectral(prod, u.grid) * u.grid.dealias_mask
    return Field(u.grid, c)


@dataclass(frozen=True)
class TimeGrid:
    """Geometric time samples ``t_j = t_min * ratio**j``, ``j < count``."""

    t_min: float
    ratio: float
    count: int

    def __post_init__(self):
        if not self.t_min > 0:
            raise ValueError("t_min must be positive")
        if not self.ratio > 1:
            raise ValueError("ratio must exceed 1")
        if self.count < 1:
            raise ValueError("count must be >= 1")

    @classmethod
    def default(cls, grid: Grid, per_octave: int = 4, t_max: float | None = None,
                t_min: float | None = None) -> "TimeGrid":
        """Parabolic scale of one cell up to one box: ``h**2 .. L**2``."""
        t_min = grid.h**2 if t_min is None else t_min
        t_max = grid.box**2 if t_max is None else t_max
        octaves = np.log2(t_max / t_min)
        count = int(np.floor(octaves * per_octave + 1e-9)) + 1
        return cls(t_min, 2.0 ** (1.0 / per_octave), count)

    @cached_property
    def times(self) -> np.ndarray:
        return self.t_min * self.ratio ** np.arange(self.count)

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def scaled(self, factor: float) -> "TimeGrid":
        return TimeGrid(self.t_min * factor, self.ratio, self.count)

    def cell_weights(self, upper: float | None = None) -> np.ndarray:
        """Quadrature weights for integrals over ``[t_min, upper]``.

        The integrand is interpolated linearly in ``log t`` between samples and
        integrated exactly against ``dt``; constants are integrated exactly.
        Samples above ``upper`` get weight zero.
        """
        t = self.times
        last = self.count - 1 if upper is None else int(np.sum(t <= upper * (1 + 1e-12))) - 1
        w = np.zeros(self.count)
        if last < 1:
            return w
        lr = np.log(self.ratio)
        ta, tb = t[:last], t[1 : last + 1]
        w[:last] += (tb - ta) / lr - ta
        w[1 : last + 1] += tb - (tb - ta) / lr
        return w

    def interval_weights(self, upper: float) -> np.ndarray:
        """Weights for ``int_0^upper``: cell weights plus ``[0, t_min]`` held at ``t_min``."""
        w = self.cell_weights(upper)
        if upper >= self.t_min * (1 - 1e-12):
            w[0] += self.t_min
        return w

    def locate(self, s: np.ndarray):
        """Interpolation stencil for times ``s``: ``(j, theta, inside)``.

        ``value(s) = (1 - theta) * v[j] + theta * v[j + 1]`` (linear in ``log s``);
        below ``t_min`` the first sample is held, above ``t_max`` ``inside`` is False.
        """
        s = np.atleast_1d(np.asarray(s, dtype=float))
        pos = np.log(np.maximum(s, self.t_min) / self.t_min) / np.log(self.ratio)
        inside = s <= self.t_max * (1 + 1e-12)
        if self.count == 1:
            return np.zeros(s.shape, dtype=np.int64), np.zeros(s.shape), inside
        j = np.clip(np.floor(pos).astype(np.int64), 0, self.count - 2)
        theta = np.clip(pos - j, 0.0, 1.0)
        return j, theta, inside


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """A field sampled on a :class:`TimeGrid`; ``coeffs`` has the time axis first."""

    grid: Grid
    times: TimeGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape[0] != self.times.count:
            raise ValueError(f"{c.shape[0]} slices for {self.times.count} time samples")
        if c.shape[c.ndim - self.grid.dim:] != self.grid.shape:
            raise ValueError("slices do not match the grid")
        c = np.array(c, copy=True)
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_slices(cls, times: TimeGrid, slices) -> "SpaceTimeField":
        slices = list(slices)
        grid = slices[0].grid
        for s in slices:
            _same_grid(grid, s.grid)
        return cls(grid, times, np.stack([s.coeffs for s in slices]))

    @classmethod
    def from_values(cls, grid: Grid, times: TimeGrid, values) -> "SpaceTimeField":
        return cls(grid, times, _to_spectral(np.asarray(values, dtype=float), grid))

    @classmethod
    def zeros(cls, grid: Grid, times: TimeGrid, rank: int = 1) -> "SpaceTimeField":
        comp = ((), (grid.dim,), (grid.dim, grid.dim))[rank]
        return cls(grid, times, np.zeros((times.count,) + comp + grid.shape, dtype=complex))

    @property
    def rank(self) -> int:
        return self.coeffs.ndim - 1 - self.grid.dim

    def slice(self, j: int) -> Field:
        return Field(self.grid, self.coeffs[j])

    def __len__(self) -> int:
        return self.times.count

    @cached_property
    def values(self) -> np.ndarray:
        v = _to_physical(self.coeffs, self.grid)
        v.flags.writeable = False
        return v

    def magnitude(self) -> np.ndarray:
        """``|u(t, x)|``, shape ``(T, N, ..., N)``."""
        v = self.values
        if self.rank == 0:
            return np.abs(v)
        return np.sqrt(np.sum(v**2, axis=tuple(range(1, 1 + self.rank))))

    def with_coeffs(self, coeffs) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.times, coeffs)

    def scale_time(self, power: float) -> "SpaceTimeField":
        """Multiply slice ``t`` by ``t**power``."""
        w = self.times.times**power
        return self.with_coeffs(self.coeffs * w.reshape((-1,) + (1,) * (self.coeffs.ndim - 1)))

    def l2_norm(self) -> float:
        """Space-time L2 norm with the cell time weights."""
        w = self.times.cell_weights()
        per = np.sum(np.abs(self.coeffs) ** 2, axis=tuple(range(1, self.coeffs.ndim)))
        return float(np.sqrt(np.sum(w * per) * self.grid.volume))

    def interpolate(self, s) -> np.ndarray:
        """Coefficients at arbitrary times ``s`` (log-linear, held below ``t_min``,
        zero above ``t_max``); shape ``(len(s),) + slice shape``."""
        j, theta, inside = self.times.locate(s)
        c = self.coeffs
        if self.times.count == 1:
            out = np.repeat(c[:1], len(j), axis=0)
        else:
            sh = (-1,) + (1,) * (c.ndim - 1)
            th = theta.reshape(sh)
            out = (1 - th) * c[j] + th * c[j + 1]
        out[~inside] = 0
        return out

    def __add__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        _same_grid(self.grid, other.grid)
        if self.times != other.times:
            raise ValueError("time grid mismatch")
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        _same_grid(self.grid, other.grid)
        if self.times != other.times:
            raise ValueError("time grid mismatch")
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "SpaceTimeField":
        return self.with_coeffs(a * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "SpaceTimeField":
        return self.with_coeffs(-self.coeffs)

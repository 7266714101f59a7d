"""Periodic lattices, grid functions and the discrete Fourier transform.

The torus ``(R / L Z)^dim`` sampled at ``N`` points per axis stands in for
``R^n``.  Every double integral elsewhere in the package becomes a finite
double sum over lattice points with the minimum-image distance.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "TorusGrid",
    "GridFunction",
    "SpectralFunction",
    "min_image_distance",
    "dft",
    "idft",
    "bandlimited",
]


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic lattice with ``points`` samples per axis."""

    dim: int
    points: int
    period: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {self.dim}")
        if self.points < 8 or self.points & (self.points - 1):
            raise ConfigurationError(f"points must be a power of two >= 8, got {self.points}")
        if not self.period > 0:
            raise ConfigurationError("period must be positive")

    @property
    def spacing(self) -> float:
        return self.period / self.points

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    @property
    def cell_volume(self) -> float:
        """Quadrature weight ``h^dim`` of one lattice point."""
        return self.spacing**self.dim

    def refined(self, factor: int = 2) -> "TorusGrid":
        return TorusGrid(self.dim, self.points * factor, self.period)

    # Cached helpers below are derived from immutable fields only.

    @cached_property
    def _offset_distance(self) -> np.ndarray:
        idx = np.arange(self.points)
        wrapped = np.minimum(idx, self.points - idx) * self.spacing
        sq = sum(np.meshgrid(*([wrapped**2] * self.dim), indexing="ij"))
        out = np.sqrt(sq)
        out.setflags(write=False)
        return out

    def offset_distances(self) -> np.ndarray:
        """Torus distance of each index offset ``k``, shaped like the grid."""
        return self._offset_distance

    @cached_property
    def _multi_index(self) -> np.ndarray:
        out = np.array(np.unravel_index(np.arange(self.size), self.shape)).T
        out.setflags(write=False)
        return out

    def multi_index(self) -> np.ndarray:
        """``(size, dim)`` integer lattice indices in C order."""
        return self._multi_index

    def coordinates(self) -> np.ndarray:
        """``(size, dim)`` physical coordinates in ``[0, L)``."""
        return self.multi_index() * self.spacing

    def pair_distances(self, rows: slice | np.ndarray | None = None) -> np.ndarray:
        """Minimum-image distance matrix, optionally restricted to some rows."""
        mi = self.multi_index()
        r = mi if rows is None else mi[rows]
        off = (mi[None, :, :] - r[:, None, :]) % self.points
        return self.offset_distances()[tuple(off[..., a] for a in range(self.dim))]

    def wavenumbers(self) -> list[np.ndarray]:
        """Integer frequency per axis in FFT order, components in [-N/2, N/2)."""
        k = np.fft.fftfreq(self.points, d=1.0 / self.points).astype(int)
        return np.meshgrid(*([k] * self.dim), indexing="ij")

    def wavenumber_modulus(self) -> np.ndarray:
        return np.sqrt(sum(k.astype(float) ** 2 for k in self.wavenumbers()))

    def pair_blocks(self):
        """Iterate over blocks of off-diagonal pairs ``(x, y)``.

        Yields ``(idx, dist)``: ``idx`` has shape ``shape + (m,)`` and holds the
        flat index of ``y = x + k`` for ``m`` offsets ``k``; ``dist`` holds the
        torus distances ``|k|``.  Every pair with ``x != y`` is visited once,
        always in the same order.
        """
        n = self.points
        d = self.offset_distances()
        ar = np.arange(n)
        if self.dim == 1:
            k = ar[1:]
            yield (ar[:, None] + k[None, :]) % n, d[1:]
            return
        for a in range(n):
            b = ar[1:] if a == 0 else ar
            rows = (ar + a) % n
            cols = (ar[:, None] + b[None, :]) % n
            idx = rows[:, None, None] * n + cols[None, :, :]
            yield idx, d[a, b]

    def offsets(self, exclude_zero: bool = True):
        """Iterate over index offsets in a fixed (C) order."""
        for k in itertools.product(range(self.points), repeat=self.dim):
            if exclude_zero and not any(k):
                continue
            yield k

    def function(self, values) -> "GridFunction":
        return GridFunction(self, values)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape, dtype=complex))

    def constant(self, c: complex) -> "GridFunction":
        return GridFunction(self, np.full(self.shape, c, dtype=complex))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples on a :class:`TorusGrid` (read-only)."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex).reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - _vals(other))

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * _vals(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def conj(self):
        return GridFunction(self.grid, self.values.conj())

    def mean(self) -> complex:
        return complex(self.values.mean())

    def inner(self, other: "GridFunction") -> complex:
        """Discrete L2 pairing ``sum u conj(v) h^n``."""
        return complex(np.vdot(other.values, self.values) * self.grid.cell_volume)


def _vals(x):
    return x.values if isinstance(x, GridFunction) else x


@dataclass(frozen=True, eq=False)
class SpectralFunction:
    """Fourier coefficients ``c_k = h^n sum_x u(x) exp(-2 pi i k.x / L)``.

    Stored in FFT order; ``grid.wavenumbers()`` gives the matching integer
    frequencies.  With this normalization ``u = 1`` has ``c_0 = L^dim`` and
    Parseval reads ``sum |u|^2 h^n = L^-dim sum |c_k|^2``.
    """

    grid: TorusGrid
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex).reshape(self.grid.shape)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)


def min_image_distance(x, y, grid: TorusGrid) -> float:
    """Euclidean distance between lattice indices ``x`` and ``y`` on the torus."""
    x = np.atleast_1d(x)
    y = np.atleast_1d(y)
    if x.shape != (grid.dim,) or y.shape != (grid.dim,):
        raise ConfigurationError("index dimension does not match grid")
    d = np.abs(x - y) % grid.points
    d = np.minimum(d, grid.points - d) * grid.spacing
    return float(math.sqrt(float(np.sum(d * d))))


def dft(u: GridFunction) -> SpectralFunction:
    g = u.grid
    return SpectralFunction(g, np.fft.fftn(u.values) * g.cell_volume)


def idft(c: SpectralFunction) -> GridFunction:
    g = c.grid
    return GridFunction(g, np.fft.ifftn(c.coefficients) / g.cell_volume)


def bandlimited(grid: TorusGrid, rng: np.random.Generator, kmax: int = 4,
                decay: float = 1.0, real: bool = False, mean_zero: bool = False) -> GridFunction:
    """Random trigonometric polynomial with frequencies ``|k_i| <= kmax``.

    The coefficients depend only on ``rng``, ``kmax`` and ``dim``, so the same
    draw sampled on a refined grid is the same continuum function.
    """
    if 2 * kmax >= grid.points:
        raise ConfigurationError("kmax too large for this grid")
    ks = np.arange(-kmax, kmax + 1)
    box = (2 * kmax + 1,) * grid.dim
    coef = rng.standard_normal(box) + 1j * rng.standard_normal(box)
    kk = np.meshgrid(*([ks] * grid.dim), indexing="ij")
    coef = coef / (1.0 + sum(k.astype(float) ** 2 for k in kk)) ** (decay / 2)
    if mean_zero:
        coef[(kmax,) * grid.dim] = 0.0
    full = np.zeros(grid.shape, dtype=complex)
    full[tuple(k % grid.points for k in kk)] = coef
    vals = np.fft.ifftn(full) * grid.size
    if real:
        vals = vals.real
    return GridFunction(grid, vals)

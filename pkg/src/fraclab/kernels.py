"""Measurable coefficient kernels ``A(x, y)`` on the lattice.

Kernels are piecewise constant on blocks of ``cell_size`` lattice points per
axis, the roughest object a grid can hold.  No symmetry ``A(x,y) = A(y,x)``
is assumed anywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError
from .lattice import TorusGrid

__all__ = [
    "EllipticityWindow",
    "Constant",
    "Checkerboard",
    "CellRandom",
    "Table",
    "KernelSpec",
    "TimeKernelSpec",
    "KernelReport",
    "sample",
    "sample_matrix",
    "validate",
]


@dataclass(frozen=True)
class EllipticityWindow:
    """``lam <= Re A <= |A| <= 1/lam``; only ``0 < lam <= 1`` is non-empty."""

    lam: float

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ConfigurationError(f"ellipticity lambda must lie in (0, 1], got {self.lam}")

    def contains(self, a) -> np.ndarray:
        a = np.asarray(a)
        return (a.real >= self.lam) & (np.abs(a) <= 1.0 / self.lam)


@dataclass(frozen=True)
class Constant:
    value: complex = 1.0

    cell_size = 1


@dataclass(frozen=True)
class Checkerboard:
    """``value_a`` where the summed cell parity of ``(x, y)`` is even."""

    cell_size: int
    value_a: complex
    value_b: complex


@dataclass(frozen=True)
class CellRandom:
    """Independent draw per ordered cell pair from the window's admissible set.

    Law: ``Re A = lam + U1 (1/lam - lam)`` and
    ``Im A = (2 U2 - 1) sqrt(lam^-2 - (Re A)^2)``, with ``U1, U2`` uniform on
    [0, 1) produced by a counter-based hash of ``(seed, cell(x), cell(y))``.
    """

    cell_size: int
    seed: int


@dataclass(frozen=True, eq=False)
class Table:
    """Explicit values per ordered cell pair; NaN marks a missing entry."""

    cell_size: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ConfigurationError("table kernel needs a square cell-pair matrix")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class KernelSpec:
    """Order ``alpha`` plus a kernel variant; ``window`` is None for B-kernels."""

    order: float
    variant: Constant | Checkerboard | CellRandom | Table = Constant()
    window: EllipticityWindow | None = None

    def __post_init__(self):
        if not 0.0 < self.order < 1.0:
            raise ConfigurationError(f"kernel order must lie in (0, 1), got {self.order}")
        if isinstance(self.variant, CellRandom) and self.window is None:
            raise ConfigurationError("cell_random kernels need an ellipticity window")
        if self.variant.cell_size < 1:
            raise ConfigurationError("cell_size must be a positive integer")

    @property
    def lam(self) -> float | None:
        return None if self.window is None else self.window.lam

    def refined(self, factor: int = 2) -> "KernelSpec":
        """Same physical kernel on a grid refined by ``factor``."""
        v = self.variant
        if isinstance(v, Constant):
            return self
        return replace(self, variant=replace(v, cell_size=v.cell_size * factor))

    def with_order(self, order: float) -> "KernelSpec":
        return replace(self, order=order)

    @classmethod
    def constant(cls, order, value=1.0, lam=None):
        return cls(order, Constant(complex(value)), None if lam is None else EllipticityWindow(lam))

    @classmethod
    def checkerboard(cls, order, cell_size, value_a, value_b, lam=None):
        win = None if lam is None else EllipticityWindow(lam)
        return cls(order, Checkerboard(cell_size, complex(value_a), complex(value_b)), win)

    @classmethod
    def cell_random(cls, order, cell_size, seed, lam):
        return cls(order, CellRandom(cell_size, int(seed)), EllipticityWindow(lam))


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _uniform(seed: int, cx: np.ndarray, cy: np.ndarray, stream: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = _splitmix64(np.full(np.shape(cx), np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
        for part in (cx, cy, np.full(np.shape(cx), stream)):
            z = _splitmix64(z ^ np.asarray(part, dtype=np.uint64))
    return (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _cells(grid: TorusGrid, idx: np.ndarray, cell_size: int) -> np.ndarray:
    """Linear cell index of ``(m, dim)`` lattice indices."""
    if grid.points % cell_size:
        raise ConfigurationError(f"cell_size {cell_size} does not divide N={grid.points}")
    per_axis = grid.points // cell_size
    c = idx // cell_size
    lin = np.zeros(c.shape[0], dtype=np.int64)
    for a in range(grid.dim):
        lin = lin * per_axis + c[:, a]
    return lin


def _cell_random_values(seed: int, lam: float, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    u1 = _uniform(seed, cx, cy, 1)
    u2 = _uniform(seed, cx, cy, 2)
    re = lam + u1 * (1.0 / lam - lam)
    im_max = np.sqrt(np.maximum(lam**-2 - re**2, 0.0))
    # Shrink slightly so rounding never leaves the window.
    return re + 1j * (2.0 * u2 - 1.0) * im_max * (1.0 - 1e-12)


def _values(spec: KernelSpec, grid: TorusGrid, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    """Kernel values for all pairs of the index sets, shape ``(len(ix), len(iy))``."""
    v = spec.variant
    if isinstance(v, Constant):
        return np.full((len(ix), len(iy)), complex(v.value))
    cs = v.cell_size
    if isinstance(v, Checkerboard):
        px = (ix // cs).sum(axis=1) % 2
        py = (iy // cs).sum(axis=1) % 2
        even = (px[:, None] + py[None, :]) % 2 == 0
        return np.where(even, complex(v.value_a), complex(v.value_b))
    cx = _cells(grid, ix, cs)[:, None]
    cy = _cells(grid, iy, cs)[None, :]
    if isinstance(v, CellRandom):
        # Draw once per distinct cell pair, then expand to lattice pairs.
        ux, invx = np.unique(cx, return_inverse=True)
        uy, invy = np.unique(cy, return_inverse=True)
        cxx, cyy = np.meshgrid(ux, uy, indexing="ij")
        table = _cell_random_values(v.seed, spec.window.lam, cxx, cyy)
        return table[invx.reshape(-1)[:, None], invy.reshape(-1)[None, :]]
    if isinstance(v, Table):
        ncell = (grid.points // cs) ** grid.dim
        if v.values.shape != (ncell, ncell):
            raise ConfigurationError(
                f"table kernel has shape {v.values.shape}, grid needs {(ncell, ncell)}")
        out = v.values[cx, cy]
        if np.isnan(out).any():
            bad = np.argwhere(np.isnan(out))[0]
            raise ConfigurationError(
                f"table kernel has no entry for cell pair {(int(cx.flat[bad[0]]), int(cy.flat[bad[1]]))}")
        return out
    raise ConfigurationError(f"unknown kernel variant {v!r}")


def sample(spec: KernelSpec, x, y, grid: TorusGrid) -> complex:
    """Kernel value at lattice indices ``x``, ``y``."""
    ix = np.atleast_1d(np.asarray(x, dtype=np.int64)).reshape(1, grid.dim)
    iy = np.atleast_1d(np.asarray(y, dtype=np.int64)).reshape(1, grid.dim)
    return complex(_values(spec, grid, ix, iy)[0, 0])


def sample_matrix(spec: KernelSpec, grid: TorusGrid, rows=None) -> np.ndarray:
    """Kernel values ``A[i, j] = A(x_i, x_j)`` over (a row block of) the lattice."""
    mi = grid.multi_index()
    return _values(spec, grid, mi if rows is None else mi[rows], mi)


def sup_norm(spec: KernelSpec, grid: TorusGrid) -> float:
    """``||A||_inf`` over the realized lattice pairs."""
    if isinstance(spec.variant, Constant):
        return abs(complex(spec.variant.value))
    return float(np.abs(_cell_pair_values(spec, grid)[2]).max())


def _cell_pair_values(spec: KernelSpec, grid: TorusGrid):
    """One representative lattice pair per cell pair and the value there."""
    v = spec.variant
    cs = 1 if isinstance(v, Constant) else v.cell_size
    if grid.points % cs:
        raise ConfigurationError(f"cell_size {cs} does not divide N={grid.points}")
    per_axis = grid.points // cs
    reps = np.array(np.unravel_index(np.arange(per_axis**grid.dim), (per_axis,) * grid.dim)).T * cs
    vals = _values(spec, grid, reps, reps)
    return reps, reps, vals


@dataclass
class KernelReport:
    ok: bool
    worst_re: float
    worst_abs: float
    violations: list = field(default_factory=list)

    def to_dict(self):
        return {"ok": self.ok, "worst_re": self.worst_re, "worst_abs": self.worst_abs,
                "violations": [
                    {"x": list(map(int, x)), "y": list(map(int, y)), "value": [v.real, v.imag]}
                    for x, y, v in self.violations]}


def validate(spec: KernelSpec, grid: TorusGrid, max_violations: int = 20) -> KernelReport:
    """Scan every realized cell pair against the ellipticity window."""
    if spec.window is None:
        raise ConfigurationError("validate needs a windowed kernel")
    rx, ry, vals = _cell_pair_values(spec, grid)
    good = spec.window.contains(vals)
    report = KernelReport(bool(good.all()), float(vals.real.min()), float(np.abs(vals).max()))
    for i, j in np.argwhere(~good)[:max_violations]:
        report.violations.append((rx[i], ry[j], complex(vals[i, j])))
    return report


@dataclass(frozen=True)
class TimeKernelSpec:
    """Time-dependent kernel ``A(t, x, y)`` on ``[0, T]``, equal to 1 outside.

    ``mode``:
      * ``"static"``: the base kernel at every time;
      * ``"swap"``: checkerboard values exchanged on alternate time blocks;
      * ``"reseed"``: cell-random kernel with a fresh seed per time block.
    Time blocks have physical length ``time_cell``.
    """

    base: KernelSpec
    horizon: float
    mode: str = "static"
    time_cell: float = 0.25

    def __post_init__(self):
        if self.base.window is None:
            raise ConfigurationError("time kernels must carry an ellipticity window")
        if self.mode not in ("static", "swap", "reseed"):
            raise ConfigurationError(f"unknown time-kernel mode {self.mode!r}")
        if self.mode == "swap" and not isinstance(self.base.variant, Checkerboard):
            raise ConfigurationError("swap mode needs a checkerboard base kernel")
        if self.mode == "reseed" and not isinstance(self.base.variant, CellRandom):
            raise ConfigurationError("reseed mode needs a cell_random base kernel")
        if not self.time_cell > 0 or not self.horizon > 0:
            raise ConfigurationError("horizon and time_cell must be positive")

    @property
    def order(self) -> float:
        return self.base.order

    @property
    def lam(self) -> float:
        return self.base.window.lam

    def refined(self, factor: int = 2) -> "TimeKernelSpec":
        return replace(self, base=self.base.refined(factor))

    def block(self, t: float) -> int | None:
        """Time block index for ``t`` in ``[0, T]``, None outside."""
        if t < 0.0 or t > self.horizon:
            return None
        return min(int(math.floor(t / self.time_cell + 1e-9)),
                   int(math.ceil(self.horizon / self.time_cell)) - 1)

    def at(self, t: float) -> KernelSpec:
        b = self.block(t)
        if b is None:
            return KernelSpec(self.base.order, Constant(1.0), self.base.window)
        v = self.base.variant
        if self.mode == "swap" and b % 2:
            return replace(self.base, variant=replace(v, value_a=v.value_b, value_b=v.value_a))
        if self.mode == "reseed":
            with np.errstate(over="ignore"):
                seed = int(_splitmix64(np.uint64(v.seed) ^ np.uint64(b + 1)))
            return replace(self.base, variant=replace(v, seed=seed))
        return self.base

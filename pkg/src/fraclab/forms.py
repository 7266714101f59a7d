"""The Dirichlet form ``E_{alpha,A}``, the operator ``1 + L_{alpha,A}`` and
its Lax-Milgram solve.

Matrix conventions (``h^n`` the cell volume, ``W = d^-(n+2 alpha)``):

* ``K[x, y] = A(x, y) W(x, y) h^(2n)`` with zero diagonal;
* ``M = diag(rowsum K + colsum K) - K - K^T`` so that ``E(u, v) = v^H M u``;
* ``S = h^n I + M`` represents ``<(1 + L)u, v> = v^H S u``.

A functional ``F`` is stored as its load vector ``r`` with ``F(v) = v^H r``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SolverError
from .kernels import KernelSpec, sample_matrix, sup_norm
from .lattice import GridFunction, TorusGrid, bandlimited
from .norms import ExponentPair, gagliardo_seminorm, lebesgue_norm, sobolev_norm

__all__ = [
    "DENSE_LIMIT",
    "FormOperator",
    "DualFunctional",
    "SolveInfo",
    "DualNormEstimate",
    "fractional_symbol",
    "spectral_apply",
    "sobolev_gram_norm",
    "form_apply",
    "split_exponent_bound",
    "lax_milgram_solve",
    "dual_norm_estimate",
]

DENSE_LIMIT = 4096


def fractional_symbol(grid: TorusGrid, order: float) -> np.ndarray:
    """Multiplier ``m`` with ``M_{order, A=1} = F^-1 diag(h^n m) F``.

    ``m(k) = 2 h^n (sum_j w_j - Re fft(w)(k))`` with ``w_j = d_j^-(n+2 order)``.
    """
    d = grid.offset_distances()
    w = np.zeros(grid.shape)
    nz = d > 0
    w[nz] = d[nz] ** -(grid.dim + 2.0 * order)
    return 2.0 * grid.cell_volume * (w.sum() - np.fft.fftn(w).real)


def spectral_apply(symbol: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(symbol * np.fft.fftn(values.reshape(symbol.shape)))


def sobolev_gram_norm(u: GridFunction, s: float) -> float:
    """``||u||_{s,2}`` through the Fourier diagonalization of the Gram matrix."""
    g = u.grid
    m = fractional_symbol(g, s)
    uh = np.fft.fftn(u.values)
    return float(math.sqrt(g.cell_volume / g.size * np.sum((1.0 + m) * np.abs(uh) ** 2)))


@dataclass(frozen=True)
class FormOperator:
    """Discrete ``1 + L_{alpha,A}`` on a torus grid."""

    kernel: KernelSpec
    grid: TorusGrid
    mode: str = "auto"

    def __post_init__(self):
        if self.mode not in ("auto", "dense", "matvec"):
            raise ConfigurationError(f"unknown application mode {self.mode!r}")
        if self.mode == "dense" and self.grid.size > DENSE_LIMIT:
            raise ConfigurationError(f"dense assembly capped at {DENSE_LIMIT} unknowns")

    @property
    def order(self) -> float:
        return self.kernel.order

    @property
    def dense(self) -> bool:
        return self.mode == "dense" or (self.mode == "auto" and self.grid.size <= DENSE_LIMIT)

    @property
    def bound(self) -> float:
        """Upper bound for ``|A|``: ``1/lam`` for windowed kernels, else sup."""
        if self.kernel.window is not None:
            return 1.0 / self.kernel.window.lam
        return sup_norm(self.kernel, self.grid)

    def _coupling_rows(self, rows: slice) -> np.ndarray:
        g = self.grid
        d = g.pair_distances(rows)
        with np.errstate(divide="ignore"):
            w = np.where(d > 0, d ** -(g.dim + 2.0 * self.order), 0.0)
        return sample_matrix(self.kernel, g, rows) * w * g.cell_volume**2

    @cached_property
    def stiffness(self) -> np.ndarray:
        """Dense ``M`` (read-only)."""
        if not self.dense:
            raise ConfigurationError("stiffness matrix requested in matvec mode")
        size = self.grid.size
        k = np.empty((size, size), dtype=complex)
        step = max(1, 2**20 // size)
        for start in range(0, size, step):
            sl = slice(start, min(size, start + step))
            k[sl] = self._coupling_rows(sl)
        diag = k.sum(axis=1) + k.sum(axis=0)
        m = -k
        m -= k.T
        m[np.diag_indices(size)] += diag
        m.setflags(write=False)
        return m

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense ``S = h^n I + M`` (read-only)."""
        s = self.stiffness.copy()
        s[np.diag_indices(self.grid.size)] += self.grid.cell_volume
        s.setflags(write=False)
        return s

    def apply_stiffness(self, u: np.ndarray) -> np.ndarray:
        """``M u`` for a flat vector."""
        u = np.asarray(u, dtype=complex).reshape(-1)
        if self.dense:
            return self.stiffness @ u
        size = self.grid.size
        out = np.zeros(size, dtype=complex)
        step = max(1, 2**20 // size)
        for start in range(0, size, step):
            sl = slice(start, min(size, start + step))
            kb = self._coupling_rows(sl)
            # Rows x in sl: sum_y K_xy (u_x - u_y).
            out[sl] += kb.sum(axis=1) * u[sl] - kb @ u
            # Columns: sum_{y in sl} K_yx (u_x - u_y) for every x.
            out += kb.sum(axis=0) * u - kb.T @ u[sl]
        return out

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``S u`` for a flat vector."""
        u = np.asarray(u, dtype=complex).reshape(-1)
        return self.grid.cell_volume * u + self.apply_stiffness(u)

    def apply_adjoint(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=complex).reshape(-1)
        if self.dense:
            return self.matrix.conj().T @ v
        raise ConfigurationError("adjoint application needs dense mode")

    def linear_operator(self) -> spla.LinearOperator:
        n = self.grid.size
        return spla.LinearOperator((n, n), matvec=self.apply, dtype=complex)

    def with_kernel(self, kernel: KernelSpec) -> "FormOperator":
        return FormOperator(kernel, self.grid, self.mode)


@dataclass(frozen=True, eq=False)
class DualFunctional:
    """Conjugate-linear functional ``F(v) = sum conj(v_x) r_x``.

    Built from a density ``f`` (``r = f h^n``), a load vector, or an
    arbitrary conjugate-linear callable evaluated on the lattice basis.
    """

    grid: TorusGrid
    load: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = np.array(self.load, dtype=complex).reshape(-1)
        if r.size != self.grid.size:
            raise ConfigurationError("load vector does not match grid")
        r.setflags(write=False)
        object.__setattr__(self, "load", r)

    @classmethod
    def from_density(cls, f: GridFunction) -> "DualFunctional":
        return cls(f.grid, f.flat * f.grid.cell_volume)

    @classmethod
    def from_callable(cls, grid: TorusGrid, fn: Callable[[GridFunction], complex]) -> "DualFunctional":
        basis = np.zeros(grid.size, dtype=complex)
        r = np.empty(grid.size, dtype=complex)
        for i in range(grid.size):
            basis[i] = 1.0
            r[i] = fn(GridFunction(grid, basis))
            basis[i] = 0.0
        return cls(grid, r)

    @classmethod
    def zero(cls, grid: TorusGrid) -> "DualFunctional":
        return cls(grid, np.zeros(grid.size))

    def __call__(self, v: GridFunction) -> complex:
        return complex(np.vdot(v.flat, self.load))

    def __add__(self, other: "DualFunctional") -> "DualFunctional":
        return DualFunctional(self.grid, self.load + other.load)

    def __sub__(self, other: "DualFunctional") -> "DualFunctional":
        return DualFunctional(self.grid, self.load - other.load)

    def dual_norm(self, s: float) -> float:
        """Exact ``(W^{s,2})^*`` norm: ``sqrt(r^H G_s^-1 r)``."""
        g = self.grid
        m = fractional_symbol(g, s)
        rh = np.fft.fftn(self.load.reshape(g.shape))
        return float(math.sqrt(np.sum(np.abs(rh) ** 2 / (g.cell_volume * (1.0 + m))) / g.size))


def _same_grid(*fs):
    g = fs[0].grid
    for f in fs[1:]:
        if f.grid != g:
            raise ConfigurationError("grid mismatch")
    return g


def form_apply(E: FormOperator, u: GridFunction, v: GridFunction) -> complex:
    """``E_{alpha,A}(u, v)`` as the off-diagonal double sum."""
    if _same_grid(u, v) != E.grid:
        raise ConfigurationError("grid mismatch")
    return complex(np.vdot(v.flat, E.apply_stiffness(u.flat)))


def operator_pairing(E: FormOperator, u: GridFunction, v: GridFunction) -> complex:
    """``<(1 + L)u, v>``."""
    if _same_grid(u, v) != E.grid:
        raise ConfigurationError("grid mismatch")
    return complex(np.vdot(v.flat, E.apply(u.flat)))


def split_exponent_bound(E: FormOperator, u: GridFunction, v: GridFunction,
                         pair: ExponentPair) -> dict:
    """``|<u + Lu, v>| <= ||u||_p ||v||_p' + ||A||_inf [u]_{s,p} [v]_{s',p'}``."""
    if abs(pair.order - E.order) > 1e-15:
        raise ConfigurationError("exponent pair order differs from the form order")
    lhs = abs(operator_pairing(E, u, v))
    rhs = (lebesgue_norm(u, pair.p) * lebesgue_norm(v, pair.p_dual)
           + E.bound * gagliardo_seminorm(u, pair.s, pair.p)
           * gagliardo_seminorm(v, pair.s_dual, pair.p_dual))
    return {"lhs": lhs, "rhs": rhs}


@dataclass
class SolveInfo:
    solution: GridFunction
    residuals: list
    iterations: int
    dual_residual: float
    rhs_dual_norm: float
    lax_milgram_ok: bool


def _precondition_symbol(grid: TorusGrid, order: float) -> np.ndarray:
    """``G^-1/2`` symbol of the ``A = 1`` Gram matrix of ``W^{order,2}``."""
    return 1.0 / np.sqrt(grid.cell_volume * (1.0 + fractional_symbol(grid, order)))


def krylov_solve(apply: Callable, rhs: np.ndarray, shape: tuple, precond: np.ndarray | None,
                 tol: float, maxiter: int, restart: int = 200):
    """GMRES on ``P S P y = P b``, ``u = P y`` with ``P`` a spectral multiplier.

    With ``P = G^-1/2`` the Euclidean residual is the dual-norm residual.
    Returns ``(u, history)``; raises :class:`SolverError` on failure.
    """
    size = rhs.size
    if precond is None:
        precond = np.ones(shape)

    def pmul(x):
        return spectral_apply(precond, x).reshape(-1)

    op = spla.LinearOperator((size, size), matvec=lambda y: pmul(apply(pmul(y))), dtype=complex)
    b = pmul(rhs)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(size, dtype=complex), [0.0]
    history = [bnorm]

    def record(res):
        history.append(float(res) * bnorm)

    y, code = spla.gmres(op, b, rtol=tol, atol=0.0, restart=min(restart, size), maxiter=maxiter,
                         callback=record, callback_type="pr_norm")
    final = float(np.linalg.norm(b - op.matvec(y)))
    history.append(final)
    if code != 0 or final > tol * bnorm * (1 + 1e-6):
        raise SolverError(f"GMRES stopped at relative residual {final / bnorm:.3e} "
                          f"(target {tol:.1e}, code {code})", history)
    return pmul(y), history


def lax_milgram_solve(E: FormOperator, F: DualFunctional, tol: float = 1e-10,
                      maxiter: int = 50, precondition: bool = True, method: str = "gmres",
                      return_info: bool = False):
    """Solve ``<(1 + L)u, v> = F(v)`` for all ``v``.

    ``tol`` is relative in the ``(W^{alpha,2})^*`` norm.  ``maxiter`` counts
    restart cycles.  ``method="direct"`` uses a dense LU factorization.
    """
    g = _same_grid(F)
    if g != E.grid:
        raise ConfigurationError("grid mismatch")
    if E.kernel.window is None:
        raise ConfigurationError("Lax-Milgram solve needs an elliptic kernel")
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    if method == "direct":
        u = sla.solve(E.matrix, F.load)
        history = []
    elif method == "gmres":
        pre = _precondition_symbol(g, E.order) if precondition else None
        u, history = krylov_solve(E.apply, F.load, g.shape, pre, tol, maxiter)
    else:
        raise ConfigurationError(f"unknown solve method {method!r}")
    sol = GridFunction(g, u.reshape(g.shape))
    if not return_info:
        return sol
    res = DualFunctional(g, F.load - E.apply(u))
    fnorm = F.dual_norm(E.order)
    lam = E.kernel.window.lam
    ok = sobolev_gram_norm(sol, E.order) <= fnorm / lam * (1 + 1e-9) + 1e-14
    return SolveInfo(sol, history, max(0, len(history) - 2), res.dual_norm(E.order), fnorm, ok)


@dataclass
class DualNormEstimate:
    value: float
    exact: float | None
    subspace: float | None
    trials: int


def dual_norm_estimate(F: DualFunctional, s_dual: float, p_dual: float, trials: int = 16,
                       rng: np.random.Generator | None = None, candidates=(), kmax: int | None = None) -> DualNormEstimate:
    """Lower bound ``max_v |F(v)| / ||v||_{s',p'}`` over sampled test functions.

    For ``p' = 2`` also returns the exact Gram value and the optimum over the
    span of the sampled set, ``sqrt(b^H (V^H G V)^-1 b)`` with ``b = V^H r``.
    """
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    g = F.grid
    rng = np.random.default_rng(0) if rng is None else rng
    kmax = kmax if kmax is not None else max(1, g.points // 4)
    vs = [bandlimited(g, rng, kmax=kmax, decay=0.0) for _ in range(trials)]
    # The Riesz representative is the optimal test function at p' = 2.
    vs.append(GridFunction(g, spectral_apply(1.0 / (g.cell_volume * (1.0 + fractional_symbol(g, s_dual))),
                                             F.load.reshape(g.shape))))
    vs.extend(candidates)
    best = 0.0
    for v in vs:
        nv = sobolev_norm(v, s_dual, p_dual)
        if nv > 0:
            best = max(best, abs(F(v)) / nv)
    exact = subspace = None
    if abs(p_dual - 2.0) < 1e-15:
        exact = F.dual_norm(s_dual)
        V = np.stack([v.flat for v in vs], axis=1)
        sym = g.cell_volume * (1.0 + fractional_symbol(g, s_dual))
        GV = np.stack([spectral_apply(sym, V[:, j]).reshape(-1) for j in range(V.shape[1])], axis=1)
        gram = V.conj().T @ GV
        b = V.conj().T @ F.load
        sol = np.linalg.lstsq(gram, b, rcond=1e-13)[0]
        subspace = float(math.sqrt(max(0.0, np.real(np.vdot(b, sol)))))
    return DualNormEstimate(best, exact, subspace, len(vs))

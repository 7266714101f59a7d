"""Invertibility sweeps over the ``(s, 1/p)`` plane.

At ``p = 2`` the inverse norm of ``1 + L : W^{s,2} -> (W^{s',2})^*`` is
``1 / sigma_min(G_{s'}^{-1/2} S G_s^{-1/2})``.  Both Gram matrices are
diagonal in the unitary Fourier basis, so the generalized singular value
problem becomes an ordinary SVD.  Other ``p`` are sampled and labeled as
estimates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic import STABILITY_THRESHOLD
from .errors import ConfigurationError
from .forms import (DENSE_LIMIT, DualFunctional, FormOperator, _precondition_symbol, dual_norm_estimate,
                    fractional_symbol, krylov_solve, lax_milgram_solve)
from .kernels import KernelSpec
from .lattice import TorusGrid, bandlimited
from .norms import ExponentPair, sobolev_norm
from .parabolic import ParabolicOperator

__all__ = [
    "InverseNormEstimate",
    "inverse_norm_at",
    "constant_inverse_norm",
    "SweepCell",
    "SweepResult",
    "line_exponent",
    "sweep",
    "lambda_trend",
]


@dataclass(frozen=True)
class InverseNormEstimate:
    value: float
    certified: bool
    mode: str
    samples: int = 0
    fallback: bool = False


def _dense_matrix(op) -> np.ndarray:
    if isinstance(op, FormOperator):
        if op.dense:
            return np.asarray(op.matrix)
        return np.column_stack([op.apply(e) for e in np.eye(op.grid.size)])
    size = int(np.prod(op.shape))
    return np.column_stack([op.apply(e) for e in np.eye(size)])


def _gram_symbol(op, s: float) -> np.ndarray:
    """Diagonal of the ``W^{s,2}`` Gram matrix in the unitary Fourier basis."""
    if isinstance(op, FormOperator):
        g = op.grid
        return g.cell_volume * (1.0 + fractional_symbol(g, s))
    c, g = op.circle, op.grid
    tau = np.abs(c.frequencies()).reshape((-1,) + (1,) * g.dim)
    return c.spacing * g.cell_volume * (1.0 + fractional_symbol(g, s)[None] + tau ** (s / op.order))


def _unitary(mat: np.ndarray, shape: tuple) -> np.ndarray:
    """``F S F^H`` with the unitary multidimensional DFT (a symmetric matrix)."""
    size = mat.shape[0]
    axes = tuple(range(1, len(shape) + 1))
    F = np.fft.fftn(np.eye(size).reshape((size,) + shape), axes=axes, norm="ortho").reshape(size, size)
    return F @ mat @ F.conj().T


def inverse_norm_at(op, pair: ExponentPair, samples: int = 8, seed: int = 0,
                    memory_cap: int = DENSE_LIMIT, tol: float = 1e-11) -> InverseNormEstimate:
    """Norm of the inverse of ``op`` from ``W^{s,p}`` to ``(W^{s',p'})^*``.

    ``op`` is a :class:`FormOperator` or a :class:`ParabolicOperator`.
    """
    shape = op.grid.shape if isinstance(op, FormOperator) else op.shape
    size = int(np.prod(shape))
    if abs(pair.order - op.order) > 1e-12:
        raise ConfigurationError("exponent pair order differs from the operator order")
    if pair.p == 2.0 and size <= memory_cap:
        mat = _unitary(_dense_matrix(op), shape)
        ls = 1.0 / np.sqrt(_gram_symbol(op, pair.s_dual).reshape(-1))
        rs = 1.0 / np.sqrt(_gram_symbol(op, pair.s).reshape(-1))
        sv = np.linalg.svd(ls[:, None] * mat * rs[None, :], compute_uv=False)
        return InverseNormEstimate(float(1.0 / sv[-1]), True, "gram-svd")
    if not isinstance(op, FormOperator):
        raise ConfigurationError("sampled inverse norms are implemented for elliptic operators only")
    rng = np.random.default_rng(seed)
    g = op.grid
    best = 0.0
    for _ in range(samples):
        f = bandlimited(g, rng, kmax=max(2, g.points // 4), decay=1.0, real=False)
        F = DualFunctional.from_density(f)
        u = lax_milgram_solve(op, F, tol=tol)
        est = dual_norm_estimate(F, pair.s_dual, pair.p_dual, rng=rng)
        if est.value > 0:
            best = max(best, sobolev_norm(u, pair.s, pair.p) / est.value)
    return InverseNormEstimate(best, False, "sampled", samples, fallback=pair.p == 2.0)


def constant_inverse_norm(grid: TorusGrid, pair: ExponentPair) -> float:
    """``A = 1`` oracle: ``max_k sqrt((1 + m_s)(1 + m_s')) / (1 + m_alpha)``."""
    ms = fractional_symbol(grid, pair.s)
    md = fractional_symbol(grid, pair.s_dual)
    ma = fractional_symbol(grid, pair.order)
    return float(np.max(np.sqrt((1 + ms) * (1 + md)) / (1 + ma)))


def line_exponent(alpha: float, s: float, slope: float) -> float:
    """``p`` on the line ``1/p = 1/2 + slope (s - alpha)``."""
    inv = 0.5 + slope * (s - alpha)
    if not 0 < inv < 1:
        raise ConfigurationError(f"line leaves the admissible strip at s = {s}")
    return 1.0 / inv


@dataclass
class SweepCell:
    s: float
    p: float
    estimates: tuple
    certified: bool
    stable: bool
    consistency: float | None = None

    @property
    def ratio(self) -> float:
        a, b = self.estimates
        return b / a if a > 0 else math.inf


@dataclass
class SweepResult:
    alpha: float
    slope: float
    resolutions: tuple
    cells: list = field(default_factory=list)
    center: SweepCell | None = None
    lam: float | None = None
    eps_hat: float = 0.0
    eps_sides: tuple = (0.0, 0.0)

    def center_audit(self, slack: float = 0.05) -> dict:
        """Center estimates against ``lambda^-1 (1 + slack)``.

        ``tightening`` holds when refinement does not widen the gap between
        the bound and the estimate, i.e. the fine estimate is not smaller.
        """
        if self.center is None or self.lam is None:
            return {}
        bound = (1 + slack) / self.lam
        est = self.center.estimates
        return {"estimates": est, "bound": bound, "ok": all(e <= bound for e in est),
                "tightening": est[1] >= est[0] * (1 - 1e-12)}

    def csv_rows(self):
        yield ("s", "inv_p", "estimate_coarse", "estimate_fine", "ratio", "certified", "stable")
        for c in self.cells:
            yield (c.s, 1.0 / c.p, c.estimates[0], c.estimates[1], c.ratio, int(c.certified), int(c.stable))


def _refined(op):
    if isinstance(op, FormOperator):
        return FormOperator(op.kernel.refined(), op.grid.refined(), op.mode)
    return ParabolicOperator(op.kernel.refined(), op.circle.refined(), op.grid.refined())


def _extent(alpha, cells, side) -> float:
    eps = 0.0
    ordered = sorted((c for c in cells if side * (c.s - alpha) >= 0), key=lambda c: abs(c.s - alpha))
    for c in ordered:
        if not c.stable:
            break
        eps = abs(c.s - alpha)
    return eps


def sweep(op, s_values, slope: float = 0.0, threshold: float = STABILITY_THRESHOLD,
          consistency: bool = True, seed: int = 0, tol: float = 1e-11) -> SweepResult:
    """Inverse-norm estimates at two resolutions along a line through ``(alpha, 1/2)``.

    ``eps_hat`` is the largest ``|s - alpha|`` such that every probed cell
    between ``alpha`` and ``s`` is refinement-stable; ``eps_sides`` holds the
    extent below and above ``alpha``.
    """
    alpha = op.order
    fine = _refined(op)
    shape = op.grid.shape if isinstance(op, FormOperator) else op.shape
    res = SweepResult(alpha, slope, (op.grid.points, fine.grid.points), lam=op.kernel.lam)
    do_consistency = consistency and isinstance(op, FormOperator)
    if do_consistency:
        rng = np.random.default_rng(seed)
        rhs = bandlimited(op.grid, rng, kmax=max(2, op.grid.points // 4), decay=1.0, real=False)
        load = rhs.flat * op.grid.cell_volume
        ref, _ = krylov_solve(op.apply, load, shape, _precondition_symbol(op.grid, alpha), tol, 50)
    grid_s = sorted(set(list(s_values) + [alpha]))
    for s in grid_s:
        p = line_exponent(alpha, s, slope)
        pair = ExponentPair(s, p, alpha)
        e0 = inverse_norm_at(op, pair, seed=seed, tol=tol)
        e1 = inverse_norm_at(fine, pair, seed=seed, tol=tol)
        cell = SweepCell(s, p, (e0.value, e1.value), e0.certified and e1.certified,
                         e1.value <= threshold * e0.value)
        if do_consistency:
            u, _ = krylov_solve(op.apply, load, shape, _precondition_symbol(op.grid, s), tol, 50)
            cell.consistency = float(np.linalg.norm(u - ref) / np.linalg.norm(ref))
        if s == alpha:
            res.center = cell
        res.cells.append(cell)
    lo, hi = _extent(alpha, res.cells, -1), _extent(alpha, res.cells, +1)
    res.eps_sides = (lo, hi)
    res.eps_hat = max(lo, hi)
    return res


def lambda_trend(lams, order: float, grid: TorusGrid, s_values, cell_size: int = 8,
                 threshold: float = STABILITY_THRESHOLD) -> dict:
    """``eps_hat`` on the ``p = 2`` line for checkerboards with values ``lam`` and ``1/lam``."""
    out = {}
    for lam in lams:
        A = KernelSpec.checkerboard(order, cell_size, lam, 1.0 / lam, lam=lam)
        r = sweep(FormOperator(A, grid), s_values, 0.0, threshold, consistency=False)
        out[float(lam)] = {"eps_hat": r.eps_hat, "sides": r.eps_sides,
                           "center": r.center.estimates if r.center else None}
    ordered = [out[float(l)]["eps_hat"] for l in sorted(lams)]
    out["monotone"] = all(a <= b + 1e-12 for a, b in zip(ordered, ordered[1:]))
    return out

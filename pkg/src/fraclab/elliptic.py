"""Weak solutions of ``L_{alpha,A} u = L_{beta,B} g + f`` on the torus,
right-hand-side bounds, refinement scans and the Gamma functional.

On the torus the constants span the kernel of ``L_{alpha,A}`` and of its
adjoint, so the equation is solved for the mean-zero solution after removing
the mean of ``f`` (the ``L_{beta,B} g`` part is automatically mean-free).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .errors import ConfigurationError, RegimeError
from .forms import FormOperator, _precondition_symbol, krylov_solve
from .kernels import KernelSpec
from .lattice import GridFunction, TorusGrid
from .norms import (ExponentPair, check_mixed_embedding, gagliardo_seminorm, lebesgue_norm,
                    maximal_operator, pointwise_gagliardo, sobolev_norm)
from .sources import Source, Zero

__all__ = [
    "NonlocalProblem",
    "SelfImprovementReport",
    "solve_nonlocal",
    "solve_stiffness",
    "beta_form_bound_high",
    "beta_form_bound_low",
    "self_improvement_scan",
    "gamma_functional",
    "bass_ren_check",
    "STABILITY_THRESHOLD",
]

STABILITY_THRESHOLD = 1.15


@dataclass(frozen=True)
class _Fixed(Source):
    value: GridFunction

    def __call__(self, grid):
        if grid != self.value.grid:
            raise ConfigurationError("a fixed grid function cannot be resampled on another grid")
        return self.value

    def to_dict(self):
        return {"kind": "fixed"}


def _as_source(x) -> Source:
    if x is None:
        return Zero()
    if isinstance(x, GridFunction):
        return _Fixed(x)
    if isinstance(x, Source):
        return x
    raise ConfigurationError(f"cannot use {type(x).__name__} as a right-hand side")


@dataclass(frozen=True)
class NonlocalProblem:
    """``L_{alpha,A} u = L_{beta,B} g + f`` on a given grid."""

    grid: TorusGrid
    A: KernelSpec
    f: Source | GridFunction | None = None
    B: KernelSpec | None = None
    g: Source | GridFunction | None = None

    def __post_init__(self):
        if self.A.window is None:
            raise ConfigurationError("the A-kernel must carry an ellipticity window")
        object.__setattr__(self, "f", _as_source(self.f))
        object.__setattr__(self, "g", _as_source(self.g))
        if self.B is not None and 2 * self.B.order - self.A.order >= 1:
            raise RegimeError("excluded band 2beta - alpha >= 1")

    @property
    def alpha(self) -> float:
        return self.A.order

    @property
    def beta(self) -> float | None:
        return None if self.B is None else self.B.order

    @property
    def regime(self) -> str | None:
        """``"low"`` when ``2 beta < alpha``, ``"high"`` when ``0 <= 2 beta - alpha < 1``."""
        if self.B is None:
            return None
        return "low" if 2 * self.B.order < self.A.order else "high"

    def refined(self, factor: int = 2) -> "NonlocalProblem":
        return replace(self, grid=self.grid.refined(factor), A=self.A.refined(factor),
                       B=None if self.B is None else self.B.refined(factor))

    def operator(self) -> FormOperator:
        return FormOperator(self.A, self.grid)

    def load(self) -> np.ndarray:
        """Load vector of ``v -> E_{beta,B}(g, v) + <f - mean f, v>``."""
        g = self.grid
        f = self.f(g)
        r = (f.flat - f.mean()) * g.cell_volume
        if self.B is not None:
            gv = self.g(g)
            if np.any(gv.values != 0):
                r = r + FormOperator(self.B, g).apply_stiffness(gv.flat)
        return r


def solve_stiffness(E: FormOperator, load: np.ndarray, tol: float = 1e-10, maxiter: int = 50,
                    method: str = "gmres", return_history: bool = False):
    """Mean-zero solution of ``M u = r`` for a mean-free load ``r``.

    Solves ``(M + h^n P_0) u = r`` with ``P_0`` the projection onto constants.
    """
    g = E.grid
    hv = g.cell_volume
    if method == "direct":
        mat = E.stiffness + hv / g.size
        u = sla.solve(mat, load)
        history = []
    else:
        def apply(x):
            return E.apply_stiffness(x) + hv * x.mean()
        u, history = krylov_solve(apply, load, g.shape, _precondition_symbol(g, E.order), tol, maxiter)
    sol = GridFunction(g, u.reshape(g.shape))
    return (sol, history) if return_history else sol


def solve_nonlocal(prob: NonlocalProblem, tol: float = 1e-10, method: str = "gmres") -> GridFunction:
    """Discrete weak solution (mean zero) of the non-local problem."""
    r = prob.load()
    if not np.any(r):
        return prob.grid.zeros()
    return solve_stiffness(prob.operator(), r, tol, method=method)


def _b_bound(B: KernelSpec | None, grid: TorusGrid) -> float:
    return 0.0 if B is None else FormOperator(B, grid).bound


def _beta_pairing(B: KernelSpec | None, g: GridFunction, v: GridFunction) -> complex:
    if B is None:
        return 0j
    return complex(np.vdot(v.flat, FormOperator(B, g.grid).apply_stiffness(g.flat)))


def beta_form_bound_high(g: GridFunction, v: GridFunction, pair: ExponentPair, B: KernelSpec | None,
                         beta: float | None = None) -> dict:
    """``|<L_{beta,B} g, v>| <= ||B||_inf [g]_{2beta-s',p} [v]_{s',p'}``."""
    beta = B.order if beta is None else beta
    sg = 2 * beta - pair.s_dual
    if not 0 < sg < 1:
        raise RegimeError(f"2beta - s' = {sg:g} must lie in (0, 1)")
    lhs = abs(_beta_pairing(B, g, v))
    rhs = (_b_bound(B, g.grid) * gagliardo_seminorm(g, sg, pair.p)
           * gagliardo_seminorm(v, pair.s_dual, pair.p_dual))
    return {"lhs": lhs, "rhs": rhs, "smoothness": sg}


def beta_form_bound_low(g: GridFunction, v: GridFunction, pair: ExponentPair, B: KernelSpec | None,
                        beta: float | None = None) -> dict:
    """Low regime chain ``|<L_{beta,B} g, v>| <= 2||B|| ||g||_q I_q'(v) <= C 2||B|| ||g||_q [v]``.

    ``I_q'(v)`` is the mixed-embedding norm; the first step is exact, ``C`` is
    the logged embedding constant ``I_q'(v) / [v]_{s',p'}``.
    """
    beta = B.order if beta is None else beta
    grid = g.grid
    n = grid.dim
    sd, pd = pair.s_dual, pair.p_dual
    if not sd > 2 * beta:
        raise RegimeError("low regime needs s' > 2beta")
    if grid.dim != 2 or not sd * pd < n:
        raise RegimeError("low regime needs dim = 2 and s'p' < n")
    q = 1.0 / (1.0 / pair.p + (sd - 2 * beta) / n)
    lhs = abs(_beta_pairing(B, g, v))
    mixed = check_mixed_embedding(v, sd, pd, beta)
    bnorm = _b_bound(B, grid)
    middle = 2 * bnorm * lebesgue_norm(g, q) * mixed["lhs"]
    return {"lhs": lhs, "middle": middle, "q": q, "constant": mixed["constant"],
            "rhs": 2 * bnorm * lebesgue_norm(g, q) * mixed["constant"] * mixed["rhs"]}


@dataclass
class SelfImprovementReport:
    alpha: float
    baseline: float
    points: tuple
    rows: list = field(default_factory=list)
    eps_hat: float = 0.0
    bound_constants: dict = field(default_factory=dict)

    def csv_rows(self):
        yield ("s", "p", "N", "norm", "ratio", "improved")
        for r in self.rows:
            yield (r["s"], r["p"], r["N"], r["norm"], r["ratio"], int(r["improved"]))

    def improved(self, s: float, p: float) -> bool:
        for r in self.rows:
            if r["s"] == s and r["p"] == p:
                return r["improved"]
        raise KeyError((s, p))

    def summary(self) -> dict:
        return {"alpha": self.alpha, "baseline": self.baseline, "points": list(self.points),
                "eps_hat": self.eps_hat, "bound_constants": self.bound_constants}


def _rhs_size(prob: NonlocalProblem, s: float, p: float) -> float:
    n = prob.grid.dim
    alpha = prob.alpha
    r = 1.0 / (1.0 / p + (2 * alpha - s) / n)
    total = lebesgue_norm(prob.f(prob.grid), r)
    if prob.B is not None:
        gv = prob.g(prob.grid)
        if prob.regime == "low":
            q = 1.0 / (1.0 / p + (2 * alpha - 2 * prob.beta - s) / n)
            total += lebesgue_norm(gv, q)
        else:
            total += sobolev_norm(gv, 2 * prob.beta - 2 * alpha + s, p)
    return total


def contiguous_eps(alpha: float, cells, stable) -> float:
    """Largest ``s - alpha`` such that every probed ``s`` in ``[alpha, s]`` is stable."""
    eps = 0.0
    for s, ok in sorted(zip(cells, stable)):
        if s < alpha:
            continue
        if not ok:
            break
        eps = s - alpha
    return eps


def self_improvement_scan(prob: NonlocalProblem, s_list, p_list, tol: float = 1e-10,
                          threshold: float = STABILITY_THRESHOLD) -> SelfImprovementReport:
    """Refinement stability of ``||u_h||_{s,p}`` under one dyadic refinement."""
    fine = prob.refined()
    u0 = solve_nonlocal(prob, tol)
    u1 = solve_nonlocal(fine, tol)
    base = sobolev_norm(u0, prob.alpha, 2.0)
    rep = SelfImprovementReport(prob.alpha, base, (prob.grid.points, fine.grid.points))
    for p in p_list:
        for s in s_list:
            ExponentPair(s, p, prob.alpha)
            n0 = sobolev_norm(u0, s, p)
            n1 = sobolev_norm(u1, s, p)
            ratio = n1 / n0 if n0 > 0 else 1.0
            ok = ratio <= threshold
            for N, val in ((prob.grid.points, n0), (fine.grid.points, n1)):
                rep.rows.append({"s": s, "p": p, "N": N, "norm": val, "ratio": ratio, "improved": ok})
            denom = sobolev_norm(u1, prob.alpha, 2.0) + _rhs_size(fine, s, p)
            rep.bound_constants[f"{s:g},{p:g}"] = n1 / denom if denom > 0 else 0.0
    line = [(r["s"], r["improved"]) for r in rep.rows if r["p"] == 2.0 and r["N"] == prob.grid.points]
    if line:
        rep.eps_hat = contiguous_eps(prob.alpha, *zip(*line))
    return rep


def gamma_functional(u: GridFunction, alpha: float, mask_radius: tuple | None = None) -> GridFunction:
    """``Gamma u(x) = (sum_y |u(x)-u(y)|^2 / d^(n+2alpha) h^n)^(1/2)``.

    ``mask_radius=(lo, hi)`` restricts to ``lo < d <= hi``.
    """
    if mask_radius is None:
        return GridFunction(u.grid, np.sqrt(pointwise_gagliardo(u, alpha, 2.0)))
    lo, hi = mask_radius
    g = u.grid
    flat = u.flat
    out = np.zeros(g.shape)
    for idx, dist in g.pair_blocks():
        sel = (dist > lo) & (dist <= hi)
        if not sel.any():
            continue
        diff = np.abs(u.values[..., None] - flat[idx[..., sel]]) ** 2
        out += diff @ dist[sel] ** -(g.dim + 2 * alpha)
    return GridFunction(g, np.sqrt(out * g.cell_volume))


def bass_ren_check(prob: NonlocalProblem, p: float, s: float | None = None, tol: float = 1e-10,
                   split_radius: float | None = None) -> dict:
    """``||Gamma u||_p`` against ``||u||_2 + ||f||_2`` for ``L_{alpha,A} u = f``.

    ``s`` is tied to ``p`` by ``n/2 - n/p = s - alpha``.  The split radius
    defaults to ``L/4`` so both pieces are non-trivial on the torus.
    """
    g = prob.grid
    n = g.dim
    alpha = prob.alpha
    if prob.B is not None and np.any(prob.g(g).values != 0):
        raise ConfigurationError("bass_ren_check needs g = 0")
    if not p > 2:
        raise ConfigurationError("bass_ren_check needs p > 2")
    s_rel = alpha + n / 2 - n / p
    if s is None:
        s = s_rel
    elif abs(s - s_rel) > 1e-12:
        raise ConfigurationError(f"exponent relation n/2 - n/p = s - alpha violated (s should be {s_rel:g})")
    pair = ExponentPair(s, p, alpha)
    R = g.period / 4 if split_radius is None else split_radius
    f = prob.f(g)
    u = solve_nonlocal(prob, tol)
    gam = gamma_functional(u, alpha)
    gam1 = gamma_functional(u, alpha, (R, math.inf))
    gam2 = gamma_functional(u, alpha, (0.0, R))
    m = maximal_operator(GridFunction(g, np.abs(u.values) ** 2))
    mroot = GridFunction(g, np.sqrt(m.values.real))
    ball_volume = float(np.count_nonzero((g.offset_distances() <= R) & (g.offset_distances() > 0))) * g.cell_volume
    semi_a = gagliardo_seminorm(u, alpha, 2.0)
    pair_fu = abs(complex(np.vdot(u.flat, (f.flat - f.mean()))) * g.cell_volume)
    lhs = lebesgue_norm(gam, p)
    rhs_base = lebesgue_norm(u, 2) + lebesgue_norm(f, 2)
    g2 = lebesgue_norm(gam2, p)
    g2_bound = ball_volume ** (0.5 - 1.0 / p) * gagliardo_seminorm(u, pair.s, p)
    return {
        "s": s,
        "p": p,
        "gamma_p": lhs,
        "rhs_base": rhs_base,
        "constant": lhs / rhs_base if rhs_base > 0 else 0.0,
        "gamma1_p": lebesgue_norm(gam1, p),
        "gamma1_constant": (lebesgue_norm(gam1, p) / lebesgue_norm(mroot, p)
                            if lebesgue_norm(mroot, p) > 0 else 0.0),
        "gamma2_p": g2,
        "gamma2_bound": g2_bound,
        "ball_volume": ball_volume,
        "energy": {"lam_semi": prob.A.window.lam * semi_a**2, "pairing": pair_fu,
                   "half_sum": 0.5 * (lebesgue_norm(u, 2) ** 2 + lebesgue_norm(f, 2) ** 2)},
        "tonelli": (lebesgue_norm(gam, 2), semi_a),
    }

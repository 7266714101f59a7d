"""Cutoffs, commutator forms and local self-improvement.

For a real cutoff ``chi`` the commutator ``R_{alpha,A,chi}`` satisfies
``E(chi u, phi) = E(u, chi phi) + R(u, phi)`` with ``R = I + II``:

* ``I  = -sum A (u_x - u_y)(chi_x - chi_y) conj(phi_y) W``
* ``II =  sum A u_y (chi_x - chi_y) conj(phi_x - phi_y) W``

Functionals are handled through load vectors as in :mod:`fraclab.forms`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic import STABILITY_THRESHOLD, NonlocalProblem, solve_nonlocal
from .errors import ConfigurationError, RegimeError
from .forms import FormOperator, lax_milgram_solve, DualFunctional, sobolev_gram_norm
from .kernels import KernelSpec
from .lattice import GridFunction, TorusGrid
from .norms import Ball, ExponentPair, gagliardo_seminorm, lebesgue_norm, local_norm, sobolev_norm

__all__ = [
    "Cutoff",
    "CommutatorForm",
    "factorization_check",
    "commutator_load",
    "commutator_apply",
    "commutator_terms",
    "cutoff_norm_transfer",
    "cutoff_profile_constant",
    "commutator_bounds",
    "local_improvement_experiment",
]


def _taper(t: np.ndarray) -> np.ndarray:
    """Smooth step: 1 for ``t <= 0``, 0 for ``t >= 1``."""
    t = np.clip(t, 0.0, 1.0)
    return np.where(t < 1.0, np.cos(0.5 * np.pi * t) ** 2, 0.0)


@dataclass(frozen=True, eq=False)
class Cutoff:
    """Real cutoff with ``chi = 1`` on ``B'``, ``supp chi`` inside ``B``."""

    chi: GridFunction
    ball: Ball
    plateau: Ball
    lipschitz: float
    forward_lipschitz: float

    @classmethod
    def smooth(cls, grid: TorusGrid, center, radius: float, plateau_radius: float,
               support_radius: float | None = None) -> "Cutoff":
        """Cosine taper between ``plateau_radius`` and ``support_radius``.

        ``support_radius`` defaults to the midpoint of the plateau and ball
        radii; ``B' << B`` is enforced as ``radius(B') <= radius(B) - 4h``.
        """
        h = grid.spacing
        if plateau_radius > radius - 4 * h + 1e-12:
            raise ConfigurationError("plateau ball must satisfy radius(B') <= radius(B) - 4h")
        rs = 0.5 * (plateau_radius + radius) if support_radius is None else support_radius
        if not plateau_radius < rs < radius:
            raise ConfigurationError("support radius must lie strictly between B' and B")
        ball = Ball(center, radius)
        plateau = Ball(center, plateau_radius)
        d = np.roll(grid.offset_distances(), ball.center, axis=tuple(range(grid.dim)))
        chi = _taper((d - plateau_radius) / (rs - plateau_radius))
        return cls.from_values(GridFunction(grid, chi), ball, plateau)

    @classmethod
    def from_values(cls, chi: GridFunction, ball: Ball, plateau: Ball) -> "Cutoff":
        g = chi.grid
        vals = chi.values
        if np.abs(vals.imag).max() > 0 or vals.real.min() < 0 or vals.real.max() > 1:
            raise ConfigurationError("cutoff must be real with values in [0, 1]")
        if not np.all(vals.real[plateau.mask(g)] == 1.0):
            raise ConfigurationError("cutoff must equal 1 on the plateau ball")
        if np.any(vals.real[~ball.mask(g)] != 0.0):
            raise ConfigurationError("cutoff must vanish outside the ball")
        return cls(chi, ball, plateau, _pairwise_lipschitz(chi), _forward_lipschitz(chi))

    @property
    def grid(self) -> TorusGrid:
        return self.chi.grid

    @property
    def values(self) -> np.ndarray:
        return self.chi.values.real

    @property
    def sup(self) -> float:
        return float(self.values.max())

    def support_gap(self) -> float:
        """Lattice distance between ``supp chi`` and the complement of ``B``."""
        g = self.grid
        supp = np.flatnonzero(self.values.reshape(-1) > 0)
        outside = np.flatnonzero(~self.ball.mask(g).reshape(-1))
        if outside.size == 0:
            return math.inf
        best = math.inf
        for start in range(0, supp.size, 256):
            d = g.pair_distances(supp[start:start + 256])[:, outside]
            best = min(best, float(d.min()))
        return best


def _pairwise_lipschitz(chi: GridFunction) -> float:
    """Exact discrete Lipschitz constant ``max |chi_x - chi_y| / d(x, y)``."""
    g = chi.grid
    flat = chi.flat.real
    best = 0.0
    for idx, dist in g.pair_blocks():
        best = max(best, float((np.abs(chi.values.real[..., None] - flat[idx]) / dist).max()))
    return best


def _forward_lipschitz(chi: GridFunction) -> float:
    v = chi.values.real
    return max(float(np.abs(np.roll(v, -1, axis=a) - v).max()) for a in range(v.ndim)) / chi.grid.spacing


@dataclass(frozen=True)
class CommutatorForm:
    kernel: KernelSpec
    cutoff: Cutoff

    @property
    def order(self) -> float:
        return self.kernel.order

    @property
    def grid(self) -> TorusGrid:
        return self.cutoff.grid


def factorization_check(u, chi, phi, x, y) -> tuple:
    """Three lines of the cutoff factorization at index pairs ``(x, y)``.

    Arguments are flat arrays; ``x``, ``y`` index arrays of equal length.
    """
    u, chi, phi = (np.asarray(a) for a in (u, chi, phi))
    ux, uy, cx, cy, px, py = u[x], u[y], chi[x], chi[y], phi[x], phi[y]
    lhs = (cx * ux - cy * uy) * (px - py)
    rhs1 = (cx * px - cy * py) * (ux - uy) + uy * (cx - cy) * px + ux * (cy - cx) * py
    rhs2 = (cx * px - cy * py) * (ux - uy) - (ux - uy) * (cx - cy) * py + uy * (cx - cy) * (px - py)
    return lhs, rhs1, rhs2


def _coupling_blocks(kernel: KernelSpec, grid: TorusGrid):
    E = FormOperator(kernel, grid, "matvec")
    size = grid.size
    step = max(1, 2**20 // size)
    for start in range(0, size, step):
        sl = slice(start, min(size, start + step))
        yield sl, E._coupling_rows(sl)


def commutator_terms(kernel: KernelSpec, chi: np.ndarray, u: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """Load vectors of the two commutator terms ``I`` and ``II``."""
    g = u.grid
    c = np.asarray(chi, dtype=float).reshape(-1)
    uf = u.flat
    load1 = np.zeros(g.size, dtype=complex)
    load2 = np.zeros(g.size, dtype=complex)
    for sl, K in _coupling_blocks(kernel, g):
        dchi = c[sl, None] - c[None, :]
        du = uf[sl, None] - uf[None, :]
        # I: -sum_x K_xy (u_x - u_y)(chi_x - chi_y) conj(phi_y), x in block.
        load1 -= (K * du * dchi).sum(axis=0)
        # II: sum K_xy u_y (chi_x - chi_y) conj(phi_x - phi_y).
        t = K * uf[None, :] * dchi
        load2[sl] += t.sum(axis=1)
        load2 -= t.sum(axis=0)
    return load1, load2


def commutator_load(R: CommutatorForm, u: GridFunction) -> np.ndarray:
    a, b = commutator_terms(R.kernel, R.cutoff.values, u)
    return a + b


def commutator_apply(R: CommutatorForm, u: GridFunction, phi: GridFunction) -> complex:
    if u.grid != R.grid or phi.grid != R.grid:
        raise ConfigurationError("grid mismatch")
    return complex(np.vdot(phi.flat, commutator_load(R, u)))


def low_regime_terms(kernel: KernelSpec, chi: np.ndarray, g: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """Load vectors of ``III`` and ``IV`` built with ``B~(x,y) = B(x,y) + B(y,x)``.

    ``III = sum B~ g_y (chi_x - chi_y) conj(phi_y - phi_x) W`` and
    ``IV = -sum B~ g_y (chi_x - chi_y) conj(phi_y) W``; the commutator equals
    ``-(III + IV)``.
    """
    grid = g.grid
    c = np.asarray(chi, dtype=float).reshape(-1)
    gf = g.flat
    size = grid.size
    Kfull = np.empty((size, size), dtype=complex)
    for sl, K in _coupling_blocks(kernel, grid):
        Kfull[sl] = K
    Kt = Kfull + Kfull.T
    del Kfull
    t = Kt * gf[None, :] * (c[:, None] - c[None, :])
    load3 = t.sum(axis=0) - t.sum(axis=1)
    load4 = -t.sum(axis=0)
    return load3, load4


def cutoff_profile_constant(chi: np.ndarray, grid: TorusGrid, s: float, p: float) -> float:
    """``sup_y (sum_x |chi_x - chi_y|^p / d^(n+sp) h^n)^(1/p)``."""
    from .norms import pointwise_gagliardo
    vals = pointwise_gagliardo(GridFunction(grid, np.asarray(chi).reshape(grid.shape)), s, p)
    return float(vals.max() ** (1.0 / p))


def cutoff_norm_transfer(u: GridFunction, cutoff: Cutoff, s: float, p: float) -> dict:
    """Upper bound on ``[chi u]_{s,p}`` from ball data and the plateau lower bound."""
    g = u.grid
    n = g.dim
    chi = cutoff.values
    cu = GridFunction(g, chi * u.values)
    inB = cutoff.ball.mask(g)
    gap = cutoff.support_gap()
    au = np.abs(u.values) ** p
    # Far sum is translation invariant: sum over offsets at distance >= gap.
    od = g.offset_distances()
    far = float(np.where(od >= gap, np.where(od > 0, od, 1.0) ** -(n + s * p), 0.0).sum())
    near = np.zeros(g.shape)
    inB_flat = inB.reshape(-1)
    for idx, dist in g.pair_blocks():
        near += (inB_flat[idx] * dist ** -(n + (s - 1) * p)).sum(axis=-1)
    hv = g.cell_volume
    t1 = 2 * cutoff.sup * local_norm(u, cutoff.ball, s, p)[1]
    t2 = 4 * cutoff.sup * (np.sum(au[inB]) * far * hv * hv) ** (1 / p) if math.isfinite(gap) else 0.0
    t3 = 2 * cutoff.lipschitz * (np.sum(au[inB] * near[inB]) * hv * hv) ** (1 / p)
    upper_lhs = gagliardo_seminorm(cu, s, p)
    pl_leb, pl_gag = local_norm(u, cutoff.plateau, s, p)
    full = sobolev_norm(cu, s, p)
    return {
        "chi_u_seminorm": upper_lhs,
        "terms": (t1, t2, t3),
        "upper_bound": t1 + t2 + t3,
        "gap": gap,
        "plateau_lebesgue": pl_leb,
        "plateau_seminorm": pl_gag,
        "chi_u_lebesgue": lebesgue_norm(cu, p),
        "chi_u_full": full,
        "lower_componentwise": pl_leb <= lebesgue_norm(cu, p) * (1 + 1e-12)
        and pl_gag <= upper_lhs * (1 + 1e-12),
        "lower_sum": pl_leb + pl_gag,
        "lower_sum_factor": 2 ** (1 - 1 / p),
    }


def commutator_bounds(R: CommutatorForm, u: GridFunction, phi: GridFunction, pair: ExponentPair,
                      regime: str = "alpha", delta: float | None = None, t: float = 2.0) -> dict:
    """Hoelder chains for the commutator terms.

    ``regime="alpha"``: terms I, II of ``R_{alpha,A,chi} u``.
    ``regime="high"``: I, II for ``R_{beta,B,chi} g`` with ``sigma = 2beta - s'``.
    ``regime="low"``: III, IV for ``R_{beta,B,chi} g`` with ``g`` in ``L^t``.
    Each entry holds the term value, the first (pointwise Hoelder) bound and
    the final bound with the evaluated cutoff constants.
    """
    g = u.grid
    chi = R.cutoff.values
    bnd = FormOperator(R.kernel, g).bound
    out = {}
    sd, pd, s, p = pair.s_dual, pair.p_dual, pair.s, pair.p
    if regime in ("alpha", "high"):
        l1, l2 = commutator_terms(R.kernel, chi, u)
        I = abs(np.vdot(phi.flat, l1))
        II = abs(np.vdot(phi.flat, l2))
        if regime == "alpha":
            a = R.order
            cI = cutoff_profile_constant(chi, g, a, 2.0)
            rhs_I = bnd * cI * gagliardo_seminorm(u, a, 2.0) * lebesgue_norm(phi, 2.0)
            cII = cutoff_profile_constant(chi, g, s, p)
            rhs_II = bnd * cII * lebesgue_norm(u, p) * gagliardo_seminorm(phi, sd, pd)
        else:
            sigma = 2 * R.order - sd
            if not 0 < sigma < 1:
                raise RegimeError("high regime needs 2beta - s' in (0, 1)")
            cI = cutoff_profile_constant(chi, g, sd, pd)
            rhs_I = bnd * cI * gagliardo_seminorm(u, sigma, p) * lebesgue_norm(phi, pd)
            cII = cutoff_profile_constant(chi, g, sigma, p)
            rhs_II = bnd * cII * lebesgue_norm(u, p) * gagliardo_seminorm(phi, sd, pd)
        out["I"] = {"value": I, "bound": rhs_I, "constant": cI}
        out["II"] = {"value": II, "bound": rhs_II, "constant": cII}
        return out
    if regime != "low":
        raise ConfigurationError(f"unknown regime {regime!r}")
    beta = R.order
    delta = 0.5 * min(2 * beta, sd) if delta is None else delta
    if not 0 < delta < 2 * beta:
        raise RegimeError("delta must lie in (0, 2beta)")
    tdual = t / (t - 1)
    l3, l4 = low_regime_terms(R.kernel, chi, u)
    III = abs(np.vdot(phi.flat, l3))
    IV = abs(np.vdot(phi.flat, l4))
    c3 = cutoff_profile_constant(chi, g, 2 * beta - delta, t)
    c4 = cutoff_profile_constant(chi, g, 2 * beta, 1.0)
    rhs3 = 2 * bnd * c3 * lebesgue_norm(u, t) * gagliardo_seminorm(phi, delta, tdual)
    rhs4 = 2 * bnd * c4 * lebesgue_norm(u, t) * lebesgue_norm(phi, tdual)
    phinorm = sobolev_norm(phi, sd, pd)
    out["III"] = {"value": III, "bound": rhs3, "constant": c3,
                  "embedding": gagliardo_seminorm(phi, delta, tdual) / phinorm if phinorm else 0.0}
    out["IV"] = {"value": IV, "bound": rhs4, "constant": c4,
                 "embedding": lebesgue_norm(phi, tdual) / phinorm if phinorm else 0.0}
    return out


def localized_load(prob: NonlocalProblem, cutoff: Cutoff, u: GridFunction) -> np.ndarray:
    """Load of ``R_A u - R_B g + chi u + L_B(chi g) + chi f`` (``f`` mean-free)."""
    g = prob.grid
    chi = cutoff.values
    hv = g.cell_volume
    f = prob.f(g)
    load = commutator_load(CommutatorForm(prob.A, cutoff), u)
    load = load + (chi * u.values).reshape(-1) * hv + (chi * (f.values - f.mean())).reshape(-1) * hv
    if prob.B is not None:
        gv = prob.g(g)
        if np.any(gv.values != 0):
            load = load - commutator_load(CommutatorForm(prob.B, cutoff), gv)
            load = load + FormOperator(prob.B, g).apply_stiffness((chi * gv.values).reshape(-1))
    return load


@dataclass
class LocalImprovementReport:
    s: float
    p: float
    resolutions: tuple
    local_norms: tuple
    global_norms: tuple
    local_ratio: float
    global_ratio: float
    local_stable: bool
    global_stable: bool
    roundtrip_error: float
    rows: list = field(default_factory=list)

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in (
            "s", "p", "resolutions", "local_norms", "global_norms", "local_ratio", "global_ratio",
            "local_stable", "global_stable", "roundtrip_error")}


def local_improvement_experiment(prob: NonlocalProblem, ball: Ball, plateau: Ball, s: float, p: float,
                                 tol: float = 1e-11,
                                 threshold: float = STABILITY_THRESHOLD) -> LocalImprovementReport:
    """Local versus global refinement stability, plus the localized-equation round trip."""
    ExponentPair(s, p, prob.alpha)
    probs = (prob, prob.refined())
    sols = [solve_nonlocal(q, tol) for q in probs]
    loc = tuple(sum(local_norm(u, b, s, p)) for u, b in zip(sols, (plateau, plateau.refined())))
    glob = tuple(sobolev_norm(u, s, p) for u in sols)
    lr, gr = loc[1] / loc[0], glob[1] / glob[0]
    # Round trip on the coarse grid: solve for chi u from the localized load.
    cut = Cutoff.smooth(prob.grid, ball.center, ball.radius, plateau.radius)
    u = sols[0]
    load = localized_load(prob, cut, u)
    E = prob.operator()
    w = lax_milgram_solve(E, DualFunctional(prob.grid, load), tol=tol * 1e-1 if tol > 1e-13 else tol)
    cu = GridFunction(prob.grid, cut.values * u.values)
    err = sobolev_gram_norm(w - cu, prob.alpha) / max(sobolev_gram_norm(cu, prob.alpha), 1e-300)
    rows = [{"N": q.grid.points, "local": l, "global": gl} for q, l, gl in zip(probs, loc, glob)]
    return LocalImprovementReport(s, p, tuple(q.grid.points for q in probs), loc, glob, lr, gr,
                                  lr <= threshold, gr <= threshold, err, rows)

"""Fractional Sobolev, Besov and local norms, the maximal operator and
the exponent arithmetic of the embedding chain.

All double sums run over off-diagonal lattice pairs with the minimum-image
distance and quadrature weight ``h^(2n)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, EmbeddingInfeasibleError, RegimeError
from .lattice import GridFunction, TorusGrid

__all__ = [
    "ExponentPair",
    "NormReport",
    "Ball",
    "lebesgue_norm",
    "gagliardo_seminorm",
    "sobolev_norm",
    "pointwise_gagliardo",
    "norm_report",
    "besov_norm",
    "besov_shells",
    "local_norm",
    "maximal_operator",
    "SobolevExponents",
    "sobolev_exponents",
    "check_sobolev_embedding",
    "check_mixed_embedding",
]


@dataclass(frozen=True)
class ExponentPair:
    """Point ``(s, p)`` with its dual ``(s', p')``: ``s + s' = 2 alpha``."""

    s: float
    p: float
    order: float

    def __post_init__(self):
        if not 0.0 < self.order < 1.0:
            raise ConfigurationError(f"order alpha must lie in (0, 1), got {self.order}")
        if not 0.0 < self.s < 1.0:
            raise ConfigurationError(f"s must lie in (0, 1), got {self.s}")
        if not 0.0 < self.s_dual < 1.0:
            raise ConfigurationError(
                f"s' = 2*alpha - s = {self.s_dual:g} must lie in (0, 1) (s + s' = 2 alpha)")
        if not 1.0 < self.p < math.inf:
            raise ConfigurationError(f"p must lie in (1, inf), got {self.p}")

    @property
    def s_dual(self) -> float:
        return 2.0 * self.order - self.s

    @property
    def p_dual(self) -> float:
        return self.p / (self.p - 1.0)

    def dual(self) -> "ExponentPair":
        return ExponentPair(self.s_dual, self.p_dual, self.order)

    @classmethod
    def center(cls, order: float) -> "ExponentPair":
        return cls(order, 2.0, order)


@dataclass(frozen=True)
class Ball:
    """Closed ball around a lattice point; ``radius=inf`` is the whole torus."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(int(c) for c in np.atleast_1d(self.center)))
        if not self.radius > 0:
            raise ConfigurationError("ball radius must be positive")

    @classmethod
    def whole(cls, grid: TorusGrid) -> "Ball":
        return cls((0,) * grid.dim, math.inf)

    def refined(self, factor: int = 2) -> "Ball":
        """Same physical ball on a grid refined by ``factor``."""
        return Ball(tuple(c * factor for c in self.center), self.radius)

    def mask(self, grid: TorusGrid) -> np.ndarray:
        if len(self.center) != grid.dim:
            raise ConfigurationError("ball center dimension does not match grid")
        if math.isinf(self.radius):
            return np.ones(grid.shape, dtype=bool)
        if self.radius >= grid.period / 2:
            raise ConfigurationError("ball radius must be below L/2 on the torus")
        d = np.roll(grid.offset_distances(), self.center, axis=tuple(range(grid.dim)))
        return d <= self.radius * (1 + 1e-12)


def _check_p(p):
    if not 1.0 <= p < math.inf:
        raise ConfigurationError(f"exponent p must lie in [1, inf), got {p}")


def lebesgue_norm(u: GridFunction, p: float, mask: np.ndarray | None = None) -> float:
    _check_p(p)
    a = np.abs(u.values)
    if mask is not None:
        a = a[mask]
    return float((np.sum(a**p) * u.grid.cell_volume) ** (1.0 / p))


def pointwise_gagliardo(u: GridFunction, s: float, p: float,
                        mask: np.ndarray | None = None) -> np.ndarray:
    """``x -> sum_y |u(x)-u(y)|^p / d^(n+sp) h^n`` (y restricted to ``mask``)."""
    _check_p(p)
    g = u.grid
    n = g.dim
    flat = u.flat
    mflat = None if mask is None else mask.reshape(-1)
    out = np.zeros(g.shape)
    for idx, dist in g.pair_blocks():
        diff = np.abs(u.values[..., None] - flat[idx]) ** p
        if mflat is not None:
            diff = diff * mflat[idx]
        out += diff @ dist ** -(n + s * p)
    return out * g.cell_volume


def gagliardo_seminorm(u: GridFunction, s: float, p: float) -> float:
    """``[u]_{s,p}`` as the off-diagonal double sum."""
    total = pointwise_gagliardo(u, s, p).sum() * u.grid.cell_volume
    return float(total ** (1.0 / p))


def sobolev_norm(u: GridFunction, s: float, p: float) -> float:
    """``(||u||_p^p + [u]_{s,p}^p)^(1/p)``."""
    return float((lebesgue_norm(u, p) ** p + gagliardo_seminorm(u, s, p) ** p) ** (1.0 / p))


@dataclass
class NormReport:
    s: float
    p: float
    lebesgue: float
    gagliardo: float
    full: float
    besov: float | None = None
    local_lebesgue: float | None = None
    local_gagliardo: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def norm_report(u: GridFunction, s: float, p: float, besov: bool = False,
                ball: Ball | None = None) -> NormReport:
    leb = lebesgue_norm(u, p)
    gag = gagliardo_seminorm(u, s, p)
    rep = NormReport(s, p, leb, gag, float((leb**p + gag**p) ** (1.0 / p)))
    if besov:
        rep.besov = besov_norm(u, s, p)
    if ball is not None:
        rep.local_lebesgue, rep.local_gagliardo = local_norm(u, ball, s, p)
    return rep


def _taper(r: np.ndarray) -> np.ndarray:
    """Low-pass profile: 1 on ``r <= 1``, 0 on ``r >= 2``, cosine in between."""
    return np.where(r <= 1.0, 1.0, np.where(r >= 2.0, 0.0, np.cos(0.5 * np.pi * (r - 1.0)) ** 2))


def besov_shells(grid: TorusGrid) -> list[np.ndarray]:
    """Dyadic multipliers ``phi_j`` on the integer frequency lattice (FFT order).

    The shells sum to one at every frequency.
    """
    k = grid.wavenumber_modulus()
    top = int(math.ceil(math.log2(k.max())))
    if top < 2:
        raise ConfigurationError("grid too coarse for a dyadic decomposition")
    shells = [_taper(k)]
    for j in range(1, top + 1):
        shells.append(_taper(k / 2.0**j) - _taper(k / 2.0 ** (j - 1)))
    return shells


def besov_norm(u: GridFunction, s: float, p: float) -> float:
    """``(sum_j 2^(jsp) ||phi_j * u||_p^p)^(1/p)`` with frequency-side shells."""
    _check_p(p)
    uh = np.fft.fftn(u.values)
    total = 0.0
    for j, phi in enumerate(besov_shells(u.grid)):
        piece = np.fft.ifftn(uh * phi)
        total += 2.0 ** (j * s * p) * np.sum(np.abs(piece) ** p) * u.grid.cell_volume
    return float(total ** (1.0 / p))


def local_norm(u: GridFunction, ball: Ball, s: float, p: float) -> tuple[float, float]:
    """Lebesgue norm on ``B`` and Gagliardo semi-norm on ``B x B``."""
    m = ball.mask(u.grid)
    if not m.any():
        raise ConfigurationError("ball contains no lattice point")
    leb = lebesgue_norm(u, p, m)
    pw = pointwise_gagliardo(u, s, p, mask=m)
    gag = float((pw[m].sum() * u.grid.cell_volume) ** (1.0 / p))
    return leb, gag


def _sorted_offsets(grid: TorusGrid, max_radius: float):
    d = grid.offset_distances().reshape(-1)
    order = np.argsort(d, kind="stable")
    order = order[d[order] <= max_radius * (1 + 1e-12)]
    ds = d[order]
    # Last position of every distinct radius (ties within rounding merged).
    last = np.flatnonzero(np.diff(ds) > 1e-12 * grid.period)
    last = np.append(last, len(ds) - 1)
    return order, last


def maximal_operator(u: GridFunction, block: int = 256) -> GridFunction:
    """Centered maximal function over closed lattice balls of radius <= L/2.

    Radius zero (the point itself) is included, so ``Mu >= |u|`` exactly.
    """
    g = u.grid
    order, last = _sorted_offsets(g, g.period / 2)
    counts = (last + 1).astype(float)
    mi = g.multi_index()
    off = np.array(np.unravel_index(order, g.shape)).T
    a = np.abs(u.flat)
    out = np.empty(g.size)
    for start in range(0, g.size, block):
        x = mi[start:start + block]
        y = (x[:, None, :] + off[None, :, :]) % g.points
        lin = np.ravel_multi_index(tuple(y[..., i] for i in range(g.dim)), g.shape)
        cs = np.cumsum(a[lin], axis=1)[:, last]
        out[start:start + block] = (cs / counts).max(axis=1)
    return GridFunction(g, out.reshape(g.shape))


@dataclass(frozen=True)
class SobolevExponents:
    """Derived exponents of the embedding chain (reciprocals stored directly)."""

    s: float
    p: float
    s_dual: float
    p_dual: float
    r: float
    q: float | None
    p_dual_star: float | None
    p_lower_star: float
    two_star_alpha: float
    two_star_alpha_2beta: float | None
    t_range: tuple
    q_mixed_dual: float | None
    feasible: bool
    flags: tuple = field(default=())

    def to_dict(self) -> dict:
        return asdict(self)


def _inv(x: float) -> float:
    return math.inf if x <= 0 else 1.0 / x


def sobolev_exponents(alpha: float, beta: float | None, s: float, p: float, n: int) -> SobolevExponents:
    """Exponents ``r, q, p'*, p_*, 2_{*,alpha}, 2_{*,alpha-2beta}`` and the t-window.

    ``1/r = 1/p + (2alpha - s)/n``; ``1/q = 1/p + (2alpha - 2beta - s)/n``;
    ``1/p'* = 1/p' - s'/n``; ``1/p_* = 1/p + s'/n``; ``2_{*,a} = 2n/(n + 2a)``;
    ``1/p <= 1/t < 1/p + (2alpha - s)/n``; ``1/q' = 1/p' - (s' - 2beta)/n``.
    """
    pair = ExponentPair(s, p, alpha)
    sd, pd = pair.s_dual, pair.p_dual
    flags = []
    r = _inv(1 / p + (2 * alpha - s) / n)
    feasible = sd * pd < n
    if not feasible:
        flags.append("s'p' >= n: no Sobolev embedding for the dual space")
    pds = _inv(1 / pd - sd / n) if feasible else None
    p_low = _inv(1 / p + sd / n)
    two_a = 2 * n / (n + 2 * alpha)
    q = two_ab = qmd = None
    if beta is not None:
        if not 0 < beta < 1:
            raise ConfigurationError("beta must lie in (0, 1)")
        if 2 * beta < alpha:
            q = _inv(1 / p + (2 * alpha - 2 * beta - s) / n)
            two_ab = 2 * n / (n + 2 * (alpha - 2 * beta))
            if sd > 2 * beta and feasible:
                qmd = _inv(1 / pd - (sd - 2 * beta) / n)
            else:
                flags.append("mixed embedding needs s' > 2beta and s'p' < n")
        elif 2 * beta - alpha >= 1:
            raise RegimeError("excluded band 2beta - alpha >= 1")
    t_range = (_inv(1 / p + (2 * alpha - s) / n), p)
    return SobolevExponents(s, p, sd, pd, r, q, pds, p_low, two_a, two_ab, t_range, qmd,
                            feasible, tuple(flags))


def _require_dim2(grid: TorusGrid):
    if grid.dim != 2:
        raise ConfigurationError("embedding checks need dim = 2")


def check_sobolev_embedding(suite, s_dual: float, p_dual: float) -> dict:
    """Ratios ``||v - mean v||_{p'*} / [v]_{s',p'}`` over a suite of functions.

    Constants have zero semi-norm and are skipped; the mean is removed since
    constants are the kernel of the semi-norm on the torus.
    """
    suite = list(suite)
    if not suite:
        raise ConfigurationError("empty suite")
    grid = suite[0].grid
    _require_dim2(grid)
    n = grid.dim
    if not s_dual * p_dual < n:
        raise EmbeddingInfeasibleError(f"s'p' = {s_dual * p_dual:g} >= n = {n}")
    pstar = 1.0 / (1.0 / p_dual - s_dual / n)
    ratios = []
    for v in suite:
        semi = gagliardo_seminorm(v, s_dual, p_dual)
        if semi <= 1e-14 * max(1.0, float(np.abs(v.values).max())):
            continue
        ratios.append(lebesgue_norm(v - v.mean(), pstar) / semi)
    return {"p_star": pstar, "ratios": ratios, "constant": max(ratios) if ratios else 0.0}


def mixed_far_constant(n: int, beta: float) -> float:
    """Continuum constant of the far-field bound ``<= C h^(-2beta) Mv``.

    ``C = (|S^(n-1)| + (n + 2beta) |B_1|) / (2beta)``.
    """
    sphere = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return (sphere + (n + 2 * beta) * ball) / (2 * beta)


def check_mixed_embedding(v: GridFunction, s_dual: float, p_dual: float, beta: float) -> dict:
    """Mixed embedding: ``q'``-norm of ``x -> sum_y |v(x)-v(y)|/d^(n+2beta) h^n``.

    Returns the left side, ``[v]_{s',p'}``, their ratio, and the pointwise
    near/far split at the radius ``h(x)`` equating the two bounds.  The near
    piece obeys the exact discrete Hoelder bound
    ``near <= G_near^(1/p') K(h)^(1/p)`` with
    ``K(h) = sum_{0<d<=h} d^-(n+(2beta-s')p) h^n``; the far piece constant
    ``far / (h^(-2beta) Mv)`` is reported.
    """
    g = v.grid
    _require_dim2(g)
    n = g.dim
    if not s_dual > 2 * beta:
        raise RegimeError("mixed embedding needs s' > 2beta")
    if not s_dual * p_dual < n:
        raise EmbeddingInfeasibleError("mixed embedding needs s'p' < n")
    p = p_dual / (p_dual - 1.0)
    q_dual = 1.0 / (1.0 / p_dual - (s_dual - 2 * beta) / n)
    G = pointwise_gagliardo(v, s_dual, p_dual)
    M = maximal_operator(v).values.real
    with np.errstate(divide="ignore", invalid="ignore"):
        hx = np.where(G > 0, (M / G ** (1.0 / p_dual)) ** (1.0 / s_dual), np.inf)
    flat = v.flat
    lhs_pw = np.zeros(g.shape)
    near = np.zeros(g.shape)
    near_g = np.zeros(g.shape)
    near_k = np.zeros(g.shape)
    far = np.zeros(g.shape)
    w_near = -(n + (2 * beta - s_dual) * p)
    for idx, dist in g.pair_blocks():
        diff = np.abs(v.values[..., None] - flat[idx])
        inside = dist <= hx[..., None]
        term = diff * dist ** -(n + 2 * beta)
        lhs_pw += term.sum(axis=-1)
        near += np.where(inside, term, 0.0).sum(axis=-1)
        far += np.where(inside, 0.0, term).sum(axis=-1)
        near_g += np.where(inside, diff**p_dual * dist ** -(n + s_dual * p_dual), 0.0).sum(axis=-1)
        near_k += np.where(inside, dist**w_near, 0.0).sum(axis=-1)
    hv = g.cell_volume
    lhs_pw, near, far, near_g, near_k = (a * hv for a in (lhs_pw, near, far, near_g, near_k))
    lhs = float((np.sum(lhs_pw**q_dual) * hv) ** (1.0 / q_dual))
    semi = gagliardo_seminorm(v, s_dual, p_dual)
    near_bound = near_g ** (1.0 / p_dual) * near_k ** (1.0 / p)
    finite = np.isfinite(hx)
    with np.errstate(divide="ignore", invalid="ignore"):
        far_ratio = np.where(finite & (M > 0), far / (hx ** (-2 * beta) * M), 0.0)
        near_ratio = np.where(finite & (G > 0), near / (hx ** (s_dual - 2 * beta) * G ** (1 / p_dual)), 0.0)
    return {
        "lhs": lhs,
        "rhs": semi,
        "constant": lhs / semi if semi > 0 else 0.0,
        "q_dual": q_dual,
        "near_holder_ok": bool(np.all(near <= near_bound * (1 + 1e-12) + 1e-300)),
        "near_constant": float(near_ratio.max()),
        "far_constant": float(far_ratio.max()),
        "far_constant_continuum": mixed_far_constant(n, beta),
        "radius": hx,
    }

"""Brute-force reference implementations used as independent oracles.

Everything here is written with plain loops over lattice points and image
shifts.  None of it calls into the package's distance tables, FFT symbols or
pair iterators, so agreement with the package is a genuine cross-check.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def torus_distance(x, y, points: int, period: float = 1.0) -> float:
    """Shortest Euclidean distance over all image shifts in {-1, 0, 1}^dim."""
    h = period / points
    best = math.inf
    for shift in itertools.product((-1, 0, 1), repeat=len(x)):
        d2 = sum(((xi - yi + si * points) * h) ** 2 for xi, yi, si in zip(x, y, shift))
        best = min(best, d2)
    return math.sqrt(best)


def lattice(dim: int, points: int):
    return list(itertools.product(range(points), repeat=dim))


def distance_matrix(dim: int, points: int, period: float = 1.0) -> np.ndarray:
    pts = lattice(dim, points)
    return np.array([[torus_distance(x, y, points, period) for y in pts] for x in pts])


def gagliardo(values: np.ndarray, s: float, p: float, period: float = 1.0) -> float:
    """``[u]_{s,p}`` by an explicit double loop."""
    dim = values.ndim
    n = values.shape[0]
    h = period / n
    pts = lattice(dim, n)
    total = 0.0
    for x in pts:
        for y in pts:
            if x == y:
                continue
            d = torus_distance(x, y, n, period)
            total += abs(values[x] - values[y]) ** p / d ** (dim + s * p)
    return (total * h ** (2 * dim)) ** (1.0 / p)


def fractional_multiplier(dim: int, points: int, order: float, period: float = 1.0) -> np.ndarray:
    """``m(k) = 2 h^n sum_j d_j^-(n+2 order) (1 - cos(2 pi k.j / N))`` by direct summation."""
    h = period / points
    offs = [j for j in lattice(dim, points) if any(j)]
    w = np.array([torus_distance(j, (0,) * dim, points, period) ** -(dim + 2 * order) for j in offs])
    J = np.array(offs, dtype=float)
    out = np.zeros((points,) * dim)
    for k in lattice(dim, points):
        phase = 2 * np.pi * (J @ np.array(k, dtype=float)) / points
        out[k] = 2 * h**dim * np.sum(w * (1 - np.cos(phase)))
    return out


def form(A: np.ndarray, u: np.ndarray, v: np.ndarray, order: float, dist: np.ndarray,
         h: float, dim: int) -> complex:
    """``sum_{x != y} A (u_x - u_y) conj(v_x - v_y) / d^(n+2 order) h^(2n)``."""
    uf, vf = u.reshape(-1), v.reshape(-1)
    total = 0j
    size = uf.size
    for i in range(size):
        for j in range(size):
            if i != j:
                total += A[i, j] * (uf[i] - uf[j]) * np.conj(vf[i] - vf[j]) / dist[i, j] ** (dim + 2 * order)
    return total * h ** (2 * dim)


def maximal(values: np.ndarray, period: float = 1.0) -> np.ndarray:
    """Centered maximal function over every closed ball of realized radius <= L/2."""
    dim = values.ndim
    n = values.shape[0]
    pts = lattice(dim, n)
    out = np.zeros(values.shape)
    for x in pts:
        ds = {y: torus_distance(x, y, n, period) for y in pts}
        radii = sorted({round(d, 12) for d in ds.values() if d <= period / 2 + 1e-12})
        best = 0.0
        for r in radii:
            ball = [abs(values[y]) for y, d in ds.items() if d <= r + 1e-12]
            best = max(best, sum(ball) / len(ball))
        out[x] = best
    return out


def gamma(values: np.ndarray, order: float, period: float = 1.0) -> np.ndarray:
    """``Gamma u(x) = (sum_y |u_x - u_y|^2 / d^(n+2 order) h^n)^(1/2)``."""
    dim = values.ndim
    n = values.shape[0]
    h = period / n
    pts = lattice(dim, n)
    out = np.zeros(values.shape)
    for x in pts:
        acc = 0.0
        for y in pts:
            if x != y:
                acc += abs(values[x] - values[y]) ** 2 / torus_distance(x, y, n, period) ** (dim + 2 * order)
        out[x] = math.sqrt(acc * h**dim)
    return out


def cosine_taper(r: float) -> float:
    """Low-pass profile of the dyadic decomposition, 1 on [0, 1], 0 on [2, inf)."""
    if r <= 1:
        return 1.0
    if r >= 2:
        return 0.0
    return math.cos(0.5 * math.pi * (r - 1)) ** 2

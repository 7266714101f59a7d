"""Space-time forms, hidden coercivity and the non-autonomous Cauchy problem.

Time lives on a circle of length ``L_t`` sampled at ``t_j = -L_t/2 + j tau``.
The Fourier convention is ``d/dt <-> -i tau_k`` with ``tau_k = -2 pi k / L_t``,
so the Hilbert transform has symbol ``-i sgn(tau)``, the half derivative
``|tau|^(1/2)`` and ``d/dt = D^(1/2) H D^(1/2)`` holds symbol by symbol.  The
Nyquist frequency keeps the sign numpy's ``fftfreq`` assigns to it, which
keeps ``H`` unitary on mean-zero signals.

Discrete space-time pairings carry the weight ``tau h^n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .elliptic import STABILITY_THRESHOLD, contiguous_eps
from .errors import BufferTooShortError, ConfigurationError, EmbeddingInfeasibleError
from .forms import FormOperator, fractional_symbol, krylov_solve
from .kernels import TimeKernelSpec
from .lattice import GridFunction, TorusGrid
from .norms import ExponentPair
from .sources import Source

__all__ = [
    "TimeCircle",
    "SpaceTimeFunction",
    "SeparableForcing",
    "AnisotropyData",
    "anisotropy",
    "hilbert_symbol",
    "hilbert_transform",
    "half_derivative",
    "time_derivative",
    "time_gagliardo_half",
    "energy_norm",
    "energy_parts",
    "ParabolicOperator",
    "parabolic_form_apply",
    "hidden_coercivity_form",
    "hidden_coercivity_solve",
    "constant_coefficient_solution",
    "CauchySolution",
    "solve_cauchy",
    "duhamel_mode",
    "weak_residual",
    "anisotropic_norm",
    "iw_embedding_check",
    "dual_pairing_check",
    "ParabolicImprovementReport",
    "parabolic_self_improvement",
]


@dataclass(frozen=True)
class TimeCircle:
    """Periodic time axis ``[-L_t/2, L_t/2)`` with an active window ``[0, T]``."""

    length: float
    points: int
    horizon: float

    def __post_init__(self):
        m = self.points
        if m < 16 or m & (m - 1):
            raise ConfigurationError("time points must be a power of two, at least 16")
        if not 0 < self.horizon < self.length / 2:
            raise ConfigurationError("need 0 < T < L_t/2 for the time buffer")

    @classmethod
    def for_horizon(cls, horizon: float, points: int, buffer_factor: float = 4.0) -> "TimeCircle":
        return cls(buffer_factor * horizon, points, horizon)

    @property
    def spacing(self) -> float:
        return self.length / self.points

    def times(self) -> np.ndarray:
        return -0.5 * self.length + self.spacing * np.arange(self.points)

    def frequencies(self) -> np.ndarray:
        """``tau_k`` in FFT order."""
        return -2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)

    def window(self) -> np.ndarray:
        """Boolean mask of the samples in ``[0, T]``."""
        t = self.times()
        eps = 1e-9 * self.spacing
        return (t >= -eps) & (t <= self.horizon + eps)

    def refined(self, factor: int = 2) -> "TimeCircle":
        return TimeCircle(self.length, self.points * factor, self.horizon)


@dataclass(frozen=True, eq=False)
class SpaceTimeFunction:
    circle: TimeCircle
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        shape = (self.circle.points,) + self.grid.shape
        if v.shape != shape:
            v = v.reshape(shape)
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("space-time values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, circle, grid):
        return cls(circle, grid, np.zeros((circle.points,) + grid.shape, dtype=complex))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @property
    def slabs(self) -> np.ndarray:
        """``(M, size)`` view with one spatial vector per time sample."""
        return self.values.reshape(self.circle.points, -1)

    def at(self, j: int) -> GridFunction:
        return GridFunction(self.grid, self.values[j])

    def _check(self, other):
        if other.circle != self.circle or other.grid != self.grid:
            raise ConfigurationError("space-time grid mismatch")

    def __add__(self, other):
        self._check(other)
        return SpaceTimeFunction(self.circle, self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return SpaceTimeFunction(self.circle, self.grid, self.values - other.values)

    def __mul__(self, c):
        return SpaceTimeFunction(self.circle, self.grid, self.values * c)

    __rmul__ = __mul__

    def inner(self, other) -> complex:
        """``sum tau h^n u conj(v)``."""
        self._check(other)
        w = self.circle.spacing * self.grid.cell_volume
        return complex(np.vdot(other.values, self.values) * w)

    def l2_norm(self) -> float:
        return math.sqrt(max(self.inner(self).real, 0.0))

    def with_values(self, values) -> "SpaceTimeFunction":
        return SpaceTimeFunction(self.circle, self.grid, values)


@dataclass(frozen=True)
class SeparableForcing:
    """``f(t, x) = profile(t) * source(x)`` on ``[0, T]``, zero elsewhere.

    ``profile``: ``"bump"`` is ``sin(pi t / T)^power``, ``"step"`` is 1.
    """

    source: Source
    profile: str = "bump"
    power: int = 8

    def time_profile(self, t: np.ndarray, horizon: float) -> np.ndarray:
        inside = (t >= -1e-12) & (t <= horizon + 1e-12)
        if self.profile == "bump":
            prof = np.sin(np.pi * np.clip(t, 0, horizon) / horizon) ** self.power
        elif self.profile == "step":
            prof = np.ones_like(t)
        else:
            raise ConfigurationError(f"unknown time profile {self.profile!r}")
        return np.where(inside, prof, 0.0)

    def __call__(self, circle: TimeCircle, grid: TorusGrid) -> SpaceTimeFunction:
        prof = self.time_profile(circle.times(), circle.horizon)
        space = self.source(grid).values
        return SpaceTimeFunction(circle, grid, prof.reshape((-1,) + (1,) * grid.dim) * space)

    def to_dict(self) -> dict:
        return {"source": self.source.to_dict(), "profile": self.profile, "power": self.power}


@dataclass(frozen=True)
class AnisotropyData:
    vector: tuple
    gamma: float
    seminorm: float | None = None


def anisotropy(alpha: float, n: int, s: float, seminorm: float | None = None) -> AnisotropyData:
    """Anisotropy vector and mean smoothness of the parabolic scale."""
    if not 0 < s < min(1.0, 2 * alpha):
        raise ConfigurationError("need s in (0, 1) and s < 2 alpha")
    d = n + 2 * alpha
    vec = (2 * alpha * (1 + n) / d,) + ((1 + n) / d,) * n
    return AnisotropyData(vec, (1 + n) * s / d, seminorm)


# --- time multipliers -------------------------------------------------------

def hilbert_symbol(circle: TimeCircle) -> np.ndarray:
    return -1j * np.sign(circle.frequencies())


def _time_multiplier(values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    shape = (-1,) + (1,) * (values.ndim - 1)
    return np.fft.ifft(symbol.reshape(shape) * np.fft.fft(values, axis=0), axis=0)


def _resolve(u, length):
    if isinstance(u, SpaceTimeFunction):
        return u.values, u.circle
    vals = np.asarray(u, dtype=complex)
    m = vals.shape[0]
    circle = TimeCircle(length if length is not None else 4.0, m, (length or 4.0) / 4)
    return vals, circle


def _wrap(u, vals):
    return u.with_values(vals) if isinstance(u, SpaceTimeFunction) else vals


def hilbert_transform(u, length: float | None = None):
    """Multiply by ``-i sgn(tau)`` along time (axis 0 for arrays)."""
    vals, circle = _resolve(u, length)
    return _wrap(u, _time_multiplier(vals, hilbert_symbol(circle)))


def half_derivative(u, length: float | None = None):
    """Multiply by ``|tau|^(1/2)``; ``length`` is the circle length for arrays."""
    vals, circle = _resolve(u, length)
    return _wrap(u, _time_multiplier(vals, np.sqrt(np.abs(circle.frequencies()))))


def time_derivative(u, length: float | None = None):
    """Spectral ``d/dt``, symbol ``-i tau``."""
    vals, circle = _resolve(u, length)
    return _wrap(u, _time_multiplier(vals, -1j * circle.frequencies()))


def time_gagliardo_half(u, length: float | None = None, route: str = "double-sum") -> float:
    """Time part of the energy, ``||D^(1/2) u||_2^2``.

    ``route="double-sum"`` evaluates ``(1/2pi) sum |u(t)-u(s)|^2/|t-s|^2``
    with minimum-image time distances.
    """
    vals, circle = _resolve(u, length)
    vals = vals.reshape(circle.points, -1)
    tau = circle.spacing
    if route == "spectral":
        d = _time_multiplier(vals, np.sqrt(np.abs(circle.frequencies())))
        return float(np.sum(np.abs(d) ** 2) * tau)
    if route != "double-sum":
        raise ConfigurationError(f"unknown route {route!r}")
    m = circle.points
    total = 0.0
    for lag in range(1, m):
        dist = min(lag, m - lag) * tau
        total += float(np.sum(np.abs(np.roll(vals, -lag, axis=0) - vals) ** 2)) / dist**2
    return total * tau * tau / (2 * np.pi)


# --- space-time operator ----------------------------------------------------

class ParabolicOperator:
    """``P = tau h^n (1 + d/dt) + tau blockdiag(M_{A(t)})`` on one space-time grid."""

    def __init__(self, kernel: TimeKernelSpec, circle: TimeCircle, grid: TorusGrid):
        if abs(circle.horizon - kernel.horizon) > 1e-12:
            raise ConfigurationError("time kernel horizon differs from the circle horizon")
        self.kernel = kernel
        self.circle = circle
        self.grid = grid
        self._groups: dict = {}
        for j, t in enumerate(circle.times()):
            self._groups.setdefault(kernel.at(float(t)), []).append(j)
        self._ops = {k: FormOperator(k, grid) for k in self._groups}
        self._groups = {k: np.array(v) for k, v in self._groups.items()}

    @property
    def lam(self) -> float:
        return self.kernel.lam

    @property
    def order(self) -> float:
        return self.kernel.order

    @property
    def shape(self) -> tuple:
        return (self.circle.points,) + self.grid.shape

    def kernels(self) -> dict:
        return dict(self._groups)

    def apply_space(self, slabs: np.ndarray) -> np.ndarray:
        """``M_{A(t_j)}`` applied to every time slab of a ``(M, size)`` array."""
        out = np.empty_like(slabs, dtype=complex)
        for k, idx in self._groups.items():
            E = self._ops[k]
            if E.dense:
                out[idx] = slabs[idx] @ E.stiffness.T
            else:
                for j in idx:
                    out[j] = E.apply_stiffness(slabs[j])
        return out

    def apply(self, u: np.ndarray) -> np.ndarray:
        slabs = np.asarray(u, dtype=complex).reshape(self.circle.points, -1)
        hv = self.grid.cell_volume
        tau = self.circle.spacing
        dt = _time_multiplier(slabs, -1j * self.circle.frequencies())
        return (tau * (hv * (slabs + dt) + self.apply_space(slabs))).reshape(-1)

    def apply_hidden(self, u: np.ndarray, delta: float) -> np.ndarray:
        """``(1 - delta H) P u``: the operator of ``a_delta`` (``H^* = -H``)."""
        pu = self.apply(u).reshape(self.circle.points, -1)
        return (pu - delta * _time_multiplier(pu, hilbert_symbol(self.circle))).reshape(-1)

    def energy_symbol(self) -> np.ndarray:
        """Space-time symbol of the energy Gram matrix."""
        tau = np.abs(self.circle.frequencies()).reshape((-1,) + (1,) * self.grid.dim)
        m = fractional_symbol(self.grid, self.order)[None]
        return self.circle.spacing * self.grid.cell_volume * (1.0 + m + tau)


def energy_parts(u: SpaceTimeFunction, alpha: float) -> dict:
    """``||u||_{L^2(V)}^2`` (split as L^2 and semi-norm) and ``||D^(1/2) u||^2``."""
    c, g = u.circle, u.grid
    uh = np.fft.fftn(u.values)
    norm = c.spacing * g.cell_volume / uh.size
    tau = np.abs(c.frequencies()).reshape((-1,) + (1,) * g.dim)
    m = fractional_symbol(g, alpha)[None]
    a2 = np.abs(uh) ** 2
    return {"l2": float(norm * a2.sum()), "space": float(norm * np.sum(m * a2)),
            "time": float(norm * np.sum(tau * a2))}


def energy_norm(u: SpaceTimeFunction, alpha: float) -> float:
    p = energy_parts(u, alpha)
    return math.sqrt(p["l2"] + p["space"] + p["time"])


def parabolic_form_apply(u: SpaceTimeFunction, v: SpaceTimeFunction, kernel: TimeKernelSpec,
                         route: str = "spectral") -> complex:
    """``sum_t [<u,v> + <H D^(1/2) u, D^(1/2) v> + E_{A(t)}(u, v)] tau``.

    ``route="double-sum"`` evaluates the time term as
    ``(1/2pi) sum (Hu(t)-Hu(s)) conj(v(t)-v(s)) / |t-s|^2``.
    """
    u._check(v)
    c, g = u.circle, u.grid
    tau, hv = c.spacing, g.cell_volume
    us, vs = u.slabs, v.slabs
    l2 = np.vdot(vs, us) * tau * hv
    if route == "spectral":
        dh = np.sqrt(np.abs(c.frequencies()))
        a = _time_multiplier(us, hilbert_symbol(c) * dh)
        b = _time_multiplier(vs, dh)
        time = np.vdot(b, a) * tau * hv
    elif route == "double-sum":
        hu = _time_multiplier(us, hilbert_symbol(c))
        m = c.points
        time = 0.0
        for lag in range(1, m):
            dist = min(lag, m - lag) * tau
            time += np.vdot(np.roll(vs, -lag, axis=0) - vs, np.roll(hu, -lag, axis=0) - hu) / dist**2
        time *= tau * tau * hv / (2 * np.pi)
    else:
        raise ConfigurationError(f"unknown route {route!r}")
    P = ParabolicOperator(kernel, c, g)
    space = np.vdot(vs, P.apply_space(us)) * tau
    return complex(l2 + time + space)


def hidden_coercivity_form(u: SpaceTimeFunction, v: SpaceTimeFunction, kernel: TimeKernelSpec,
                           delta: float | None = None) -> complex:
    """``a_delta(u, v) = <(1 + d/dt + L) u, (1 + delta H) v>``."""
    delta = kernel.lam**2 / 2 if delta is None else delta
    w = v + hilbert_transform(v) * delta
    return parabolic_form_apply(u, w, kernel)


def hidden_coercivity_solve(kernel: TimeKernelSpec, F: SpaceTimeFunction, delta: float | None = None,
                            tol: float = 1e-10, maxiter: int = 50, return_history: bool = False):
    """Solve ``a_delta(u, v) = <F, (1 + delta H) v>`` for all discrete ``v``.

    ``F`` is a space-time density (the functional ``v -> <F, v>``).  The
    tolerance is relative in the energy anti-dual norm.
    """
    lam = kernel.lam
    delta = lam**2 / 2 if delta is None else delta
    if not 0 < delta <= lam**2:
        raise ConfigurationError("delta must lie in (0, lambda^2]")
    P = ParabolicOperator(kernel, F.circle, F.grid)
    w = F.circle.spacing * F.grid.cell_volume
    load = F.slabs * w
    rhs = (load - delta * _time_multiplier(load, hilbert_symbol(F.circle))).reshape(-1)
    pre = 1.0 / np.sqrt(P.energy_symbol())
    u, hist = krylov_solve(lambda x: P.apply_hidden(x, delta), rhs, P.shape, pre, tol, maxiter)
    sol = F.with_values(u.reshape(P.shape))
    return (sol, hist) if return_history else sol


def constant_coefficient_solution(F: SpaceTimeFunction, alpha: float) -> SpaceTimeFunction:
    """Closed-form ``(1 + d/dt + L_{alpha,1})^-1 F`` on the space-time torus."""
    c, g = F.circle, F.grid
    tau = c.frequencies().reshape((-1,) + (1,) * g.dim)
    m = fractional_symbol(g, alpha)[None]
    return F.with_values(np.fft.ifftn(np.fft.fftn(F.values) / (1.0 - 1j * tau + m)))


# --- Cauchy problem ---------------------------------------------------------

@dataclass
class CauchySolution:
    """Solution of ``u' + L_{A(t)} u = f``, ``u(0) = 0`` on ``[0, T]``."""

    u: SpaceTimeFunction
    v: SpaceTimeFunction
    f: SpaceTimeFunction
    kernel: TimeKernelSpec
    v0_norm: float
    v0_tolerance: float
    residuals: list = field(default_factory=list)

    @property
    def window(self) -> np.ndarray:
        return self.u.circle.window()

    def restricted(self) -> np.ndarray:
        """Values of ``u`` on the samples in ``[0, T]``."""
        return self.u.values[self.window]

    def forcing_norm(self) -> float:
        return self.f.l2_norm()


def solve_cauchy(kernel: TimeKernelSpec, f: SpaceTimeFunction | SeparableForcing,
                 circle: TimeCircle | None = None, grid: TorusGrid | None = None,
                 tol: float = 1e-10, delta: float | None = None) -> CauchySolution:
    """Solve the Cauchy problem by damping, a whole-circle solve and undamping.

    ``g = e^-t f`` is solved for on the circle, then ``u = e^t v``.  The value
    ``||v(0)||_2`` must stay below ``10 e^-(L_t - T) ||f||``.
    """
    if isinstance(f, SeparableForcing):
        if circle is None or grid is None:
            raise ConfigurationError("a forcing recipe needs circle and grid")
        f = f(circle, grid)
    c = f.circle
    t = c.times()
    outside = ~c.window()
    if np.any(f.values[outside] != 0):
        raise ConfigurationError("forcing must vanish outside [0, T]")
    shape = (-1,) + (1,) * f.grid.dim
    g = f.with_values(np.exp(-t).reshape(shape) * f.values)
    v, hist = hidden_coercivity_solve(kernel, g, delta, tol, return_history=True)
    u = v.with_values(np.exp(t).reshape(shape) * v.values)
    j0 = int(np.argmin(np.abs(t)))
    v0 = math.sqrt(float(np.sum(np.abs(v.values[j0]) ** 2)) * f.grid.cell_volume)
    fn = f.l2_norm()
    limit = 10.0 * math.exp(-(c.length - c.horizon)) * fn
    if v0 > limit:
        raise BufferTooShortError(
            f"||v(0)|| = {v0:.3e} exceeds {limit:.3e}; increase the time circle length L_t")
    return CauchySolution(u, v, f, kernel, v0, limit, hist)


def duhamel_mode(mu: float, times: np.ndarray, horizon: float, power: int = 8) -> np.ndarray:
    """``int_0^t exp(-mu (t - s)) sin(pi s/T)^power ds`` by adaptive quadrature."""
    out = np.zeros(len(times))
    for i, t in enumerate(times):
        if t <= 0:
            continue
        top = min(t, horizon)
        val, _ = integrate.quad(lambda s: math.exp(-mu * (t - s)) * math.sin(math.pi * s / horizon) ** power,
                                0.0, top, epsabs=1e-14, epsrel=1e-13, limit=200)
        out[i] = val
    return out


def weak_residual(sol: CauchySolution, tests) -> np.ndarray:
    """Weak-formulation residuals for test functions supported in ``[0, T]``.

    For each test ``phi`` returns
    ``|sum_t [-<u, D phi> + E_{A(t)}(u, phi) - <f, phi>] tau| / (||f|| ||e^t phi||_E)``
    with ``D phi = e^-t (d/dt - 1)(e^t phi)``, the derivative matching the
    damped circle problem.  Slice forms are evaluated one time sample at a time.
    """
    u, f, kernel = sol.u, sol.f, sol.kernel
    c, g = u.circle, u.grid
    t = c.times()
    shape = (-1,) + (1,) * g.dim
    tau, hv = c.spacing, g.cell_volume
    alpha = kernel.order
    fn = max(f.l2_norm(), 1e-300)
    inside = c.window()
    by_kernel, ops = {}, {}
    for j in np.flatnonzero(inside):
        k = kernel.at(float(t[j]))
        ops[j] = by_kernel.setdefault(k, FormOperator(k, g))
    out = []
    for phi in tests:
        if np.any(phi.values[~inside] != 0):
            raise ConfigurationError("test functions must be supported in [0, T]")
        psi = phi.values * np.exp(t).reshape(shape)
        dpsi = np.fft.ifft(-1j * c.frequencies().reshape(shape) * np.fft.fft(psi, axis=0), axis=0)
        dphi = np.exp(-t).reshape(shape) * (dpsi - psi)
        total = -np.vdot(dphi, u.values) * tau * hv - np.vdot(phi.values, f.values) * tau * hv
        for j in np.flatnonzero(inside):
            if np.any(phi.values[j]):
                total += np.vdot(phi.values[j].reshape(-1), ops[j].apply_stiffness(u.values[j])) * tau
        out.append(abs(total) / (fn * energy_norm(phi.with_values(psi), alpha)))
    return np.array(out)


# --- anisotropic norms and self-improvement ---------------------------------

def _time_sum(vals: np.ndarray, tau: float, exponent: float, p: float, periodic: bool) -> float:
    m = vals.shape[0]
    total = 0.0
    for lag in range(1, m):
        d = (min(lag, m - lag) if periodic else lag) * tau
        if periodic:
            diff = np.roll(vals, -lag, axis=0) - vals
            total += float(np.sum(np.abs(diff) ** p)) / d**exponent
        else:
            diff = vals[lag:] - vals[:-lag]
            total += 2.0 * float(np.sum(np.abs(diff) ** p)) / d**exponent
    return total


def _space_sum(vals: np.ndarray, grid: TorusGrid, s: float, p: float) -> float:
    n = grid.dim
    flat = vals.reshape(vals.shape[0], -1)
    total = 0.0
    for idx, dist in grid.pair_blocks():
        diff = vals[..., None] - flat[:, idx]
        total += float(np.sum(np.abs(diff) ** p * dist ** -(n + s * p)))
    return total * grid.cell_volume**2


def anisotropic_norm(u: SpaceTimeFunction, s: float, p: float, alpha: float,
                     window: bool = True, parts: bool = False):
    """``||u||_p + (time double sum + space double sum)^(1/p)``.

    With ``window=True`` the sums run over samples in ``[0, T]`` with plain
    time distances; otherwise over the whole circle with minimum-image ones.
    """
    if not 0 < s < min(1.0, 2 * alpha):
        raise ConfigurationError("need s in (0, 1) and s < 2 alpha")
    if not 1 <= p < math.inf:
        raise ConfigurationError("p must lie in [1, inf)")
    c, g = u.circle, u.grid
    vals = u.values[c.window()] if window else u.values
    tau, hv = c.spacing, g.cell_volume
    leb = float((np.sum(np.abs(vals) ** p) * tau * hv) ** (1 / p))
    ts = _time_sum(vals.reshape(vals.shape[0], -1), tau, 1 + s * p / (2 * alpha), p, not window) * tau**2 * hv
    ss = _space_sum(vals, g, s, p) * tau
    total = leb + (ts + ss) ** (1 / p)
    if parts:
        return {"lebesgue": leb, "time": ts, "space": ss, "norm": total}
    return total


def _mixed_norm(vals: np.ndarray, tau: float, hv: float, pt: float, px: float) -> float:
    inner = (np.sum(np.abs(vals.reshape(vals.shape[0], -1)) ** px, axis=1) * hv) ** (1 / px)
    return float((np.sum(inner**pt) * tau) ** (1 / pt))


def iw_embedding_check(tests, s: float, p: float, alpha: float) -> dict:
    """Nested inequalities behind ``L^2 L^2 in (W^{s',p'}_alpha)^*``.

    Verifies ``||phi||_2^2 <= ||phi||_{L^p L^p'} ||phi||_{L^p' L^p}`` exactly
    and logs the embedding ratios against the anisotropic ``(s', p')`` norm.
    """
    pair = ExponentPair(s, p, alpha)
    sd, pd = pair.s_dual, pair.p_dual
    n = tests[0].grid.dim if tests else 1
    if 2 / p < 1 - sd / n:
        raise EmbeddingInfeasibleError(f"2/p = {2 / p:.4f} < 1 - s'/n = {1 - sd / n:.4f}")
    worst_holder = 0.0
    ratios = {"lp_lpd": 0.0, "lpd_lp": 0.0, "l2": 0.0}
    ok = True
    for phi in tests:
        c, g = phi.circle, phi.grid
        vals = phi.values[c.window()]
        tau, hv = c.spacing, g.cell_volume
        a = _mixed_norm(vals, tau, hv, p, pd)
        b = _mixed_norm(vals, tau, hv, pd, p)
        l2 = _mixed_norm(vals, tau, hv, 2.0, 2.0)
        ok &= l2**2 <= a * b * (1 + 1e-12)
        worst_holder = max(worst_holder, l2**2 / (a * b) if a * b else 0.0)
        w = anisotropic_norm(phi, sd, pd, alpha)
        for key, val in (("lp_lpd", a), ("lpd_lp", b), ("l2", l2)):
            ratios[key] = max(ratios[key], val / w if w else 0.0)
    return {"s_dual": sd, "p_dual": pd, "holder_ok": bool(ok), "holder_ratio": worst_holder,
            "constants": ratios}


def dual_pairing_check(sol: CauchySolution, tests, eps: float) -> list:
    """``|int -<u, d_t phi>| <= int ||f|| ||phi|| + lam^-1 ||u||_{a+e,2} ||phi||_{a-e,2}``.

    The left side uses the damped-circle derivative of :func:`weak_residual`.
    """
    from .norms import sobolev_norm
    u, f, kernel = sol.u, sol.f, sol.kernel
    c, g = u.circle, u.grid
    t = c.times()
    shape = (-1,) + (1,) * g.dim
    tau, hv = c.spacing, g.cell_volume
    a = kernel.order
    inside = np.flatnonzero(c.window())
    unorm = {j: sobolev_norm(u.at(j), a + eps, 2.0) for j in inside}
    fnorm = {j: math.sqrt(float(np.sum(np.abs(f.values[j]) ** 2)) * hv) for j in inside}
    rows = []
    for phi in tests:
        psi = phi.values * np.exp(t).reshape(shape)
        dpsi = np.fft.ifft(-1j * c.frequencies().reshape(shape) * np.fft.fft(psi, axis=0), axis=0)
        dphi = np.exp(-t).reshape(shape) * (dpsi - psi)
        lhs = abs(np.vdot(dphi, u.values) * tau * hv)
        rhs = 0.0
        for j in inside:
            pj = phi.at(j)
            if not np.any(pj.values):
                continue
            pn = math.sqrt(float(np.sum(np.abs(pj.values) ** 2)) * hv)
            rhs += tau * (fnorm[j] * pn + unorm[j] * sobolev_norm(pj, a - eps, 2.0) / kernel.lam)
        rows.append({"lhs": float(lhs), "rhs": float(rhs), "ok": bool(lhs <= rhs * (1 + 1e-12))})
    return rows


@dataclass
class ParabolicImprovementReport:
    alpha: float
    resolutions: tuple
    rows: list
    eps_hat: float
    growth_constants: tuple
    growth_ratio: float
    v0: tuple

    def summary(self) -> dict:
        return {"alpha": self.alpha, "resolutions": self.resolutions, "eps_hat": self.eps_hat,
                "growth_constants": self.growth_constants, "growth_ratio": self.growth_ratio,
                "v0": self.v0}


def parabolic_self_improvement(kernel: TimeKernelSpec, forcing: SeparableForcing, circle: TimeCircle,
                               grid: TorusGrid, s_list, p_list, tol: float = 1e-10,
                               threshold: float = STABILITY_THRESHOLD,
                               growth_pair: tuple | None = None) -> ParabolicImprovementReport:
    """Refinement study of anisotropic norms on ``[0, T]``; both axes are doubled.

    ``eps_hat`` is read off the line ``p = p_list[0]``.  ``growth_pair`` ``(s, p)`` selects the norm used for the ``e^T`` estimate
    constant ``(||u||_p + |||u|||_{s,p}) / (e^T ||f||_2)``; it defaults to
    the smallest probed ``s`` at the first ``p``.
    """
    alpha = kernel.order
    levels = [(kernel, circle, grid), (kernel.refined(), circle.refined(), grid.refined())]
    sols = [solve_cauchy(k, forcing, c, g, tol) for k, c, g in levels]
    rows, cells, stable = [], [], []
    for p in p_list:
        for s in s_list:
            norms = [anisotropic_norm(sol.u, s, p, alpha) for sol in sols]
            ratio = norms[1] / norms[0] if norms[0] > 0 else 1.0
            ok = ratio <= threshold
            rows.append({"s": s, "p": p, "coarse": norms[0], "fine": norms[1], "ratio": ratio,
                         "stable": ok})
            if p == p_list[0]:
                cells.append(s)
                stable.append(ok)
    gs, gp = growth_pair if growth_pair is not None else (min(s_list), p_list[0])
    T = circle.horizon
    consts = tuple(anisotropic_norm(sol.u, gs, gp, alpha) / (math.exp(T) * sol.forcing_norm())
                   for sol in sols)
    return ParabolicImprovementReport(alpha, ((circle.points, grid.points),
                                              (2 * circle.points, 2 * grid.points)),
                                      rows, contiguous_eps(alpha, cells, stable), consts,
                                      consts[1] / consts[0], tuple(sol.v0_norm for sol in sols))

"""Acceptance suite: one test and one PASS/FAIL summary line per criterion.

Run ``pytest tests/test_acceptance.py -v``; the lines are printed in the
"acceptance criteria" section of the terminal summary.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_LINES, random_kernel
from fraclab import cli
from fraclab.elliptic import (NonlocalProblem, bass_ren_check, beta_form_bound_high, gamma_functional,
                              self_improvement_scan, solve_stiffness)
from fraclab.forms import DualFunctional, FormOperator, form_apply, lax_milgram_solve, split_exponent_bound
from fraclab.kernels import CellRandom, KernelSpec, TimeKernelSpec
from fraclab.lattice import GridFunction, TorusGrid, bandlimited
from fraclab.localization import Cutoff, factorization_check, local_improvement_experiment, localized_load
from fraclab.norms import Ball, ExponentPair, gagliardo_seminorm, lebesgue_norm
from fraclab.parabolic import (SeparableForcing, SpaceTimeFunction, TimeCircle, duhamel_mode, energy_norm,
                               half_derivative, hidden_coercivity_form, hidden_coercivity_solve,
                               hilbert_transform, parabolic_self_improvement, solve_cauchy, time_derivative,
                               weak_residual)
from fraclab.probe import inverse_norm_at
from fraclab.sources import Bandlimited, Mode, Spike, Sum

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
EXACT = 1e-12


def _report(number: int, title: str, checks: list):
    """Record ``(name, ok, detail)`` checks as one summary line and assert."""
    ok = all(c[1] for c in checks)
    parts = "; ".join(f"{name}={'ok' if good else 'FAIL'} ({detail})" for name, good, detail in checks)
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} | {parts}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _rough(grid, rng):
    """Band-limited part plus lattice-scale noise, complex."""
    u = bandlimited(grid, rng, kmax=3).values
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return GridFunction(grid, u + rng.uniform(0.0, 1.0) * noise)


# --- criterion 1 ------------------------------------------------------------

def _draw_inequalities(grid, rng, circle):
    """Evaluate the six exact inequalities for one random draw.

    Returns ``{name: (lhs, rhs, sense)}``; ``sense`` is ``"<="`` or ``">="``.
    """
    n = grid.dim
    alpha = float(rng.choice([0.3, 0.5, 0.7]))
    lam = float(rng.uniform(0.3, 0.9))
    A = random_kernel(rng, alpha, lam, cell_size=int(rng.choice([2, 4])))
    E = FormOperator(A, grid)
    u, v = _rough(grid, rng), _rough(grid, rng)
    out = {}

    semi_u, semi_v = gagliardo_seminorm(u, alpha, 2.0), gagliardo_seminorm(v, alpha, 2.0)
    out["coercivity"] = (form_apply(E, u, u).real, lam * semi_u**2, ">=")
    out["boundedness"] = (abs(form_apply(E, u, v)), semi_u * semi_v / lam, "<=")

    s = float(rng.uniform(max(0.02, 2 * alpha - 0.98), min(0.98, 2 * alpha - 0.02)))
    p = float(rng.uniform(1.3, 4.0))
    b = split_exponent_bound(E, u, v, ExponentPair(s, p, alpha))
    out["split"] = (b["lhs"], b["rhs"], "<=")

    # B-kernel of order beta with 2 beta - s' in (0, 1); complex, unwindowed.
    pair = ExponentPair(s, p, alpha)
    lo, hi = max(0.01, pair.s_dual / 2 + 0.01), min(0.99, (pair.s_dual + 1) / 2 - 0.01)
    beta = float(rng.uniform(lo, hi))
    zb = rng.standard_normal(4)
    B = KernelSpec.checkerboard(beta, 2, complex(zb[0], zb[1]), complex(zb[2], zb[3]))
    hb = beta_form_bound_high(u, v, pair, B)
    out["beta_high"] = (hb["lhs"], hb["rhs"], "<=")

    # Gamma_2 bound with n/2 - n/p = s - alpha, keeping s < min(1, 2 alpha).
    gap = alpha + n / 2 - min(1.0, 2 * alpha)
    pmax = min(4.0, n / gap) if gap > 0 else 4.0
    pg = float(rng.uniform(2.05, pmax - 0.02))
    br = bass_ren_check(NonlocalProblem(grid, A, u), pg, tol=1e-10)
    out["gamma2"] = (br["gamma2_p"], br["gamma2_bound"], "<=")

    # Hidden coercivity with delta = lam^2 / 2 on a short space-time torus.
    if isinstance(A.variant, CellRandom):
        tk = TimeKernelSpec(A, circle.horizon, "reseed", 0.5)
    else:
        tk = TimeKernelSpec(A, circle.horizon, "swap", 0.5)
    shape = (circle.points,) + grid.shape
    w = SpaceTimeFunction(circle, grid, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    out["hidden"] = (hidden_coercivity_form(w, w, tk).real, lam**2 / 2 * energy_norm(w, alpha) ** 2, ">=")
    return out


def test_criterion_1_exact_inequalities():
    rng = np.random.default_rng(1)
    circle = TimeCircle(4.0, 16, 1.0)
    names = ("coercivity", "boundedness", "split", "beta_high", "gamma2", "hidden")
    draws = {name: 0 for name in names}
    violations = {name: 0 for name in names}
    worst = {name: 0.0 for name in names}
    for grid in (TorusGrid(1, 128), TorusGrid(2, 32)):
        for _ in range(50):
            for name, (lhs, rhs, sense) in _draw_inequalities(grid, rng, circle).items():
                draws[name] += 1
                if sense == "<=":
                    bad = lhs > rhs * (1 + EXACT)
                    worst[name] = max(worst[name], lhs / rhs if rhs > 0 else 0.0)
                else:
                    bad = lhs < rhs * (1 - EXACT)
                    worst[name] = max(worst[name], rhs / lhs if lhs > 0 else math.inf)
                violations[name] += int(bad)
    _report(1, "exact inequalities, 50 draws each at dim=1 N=128 and dim=2 N=32",
            [(name, violations[name] == 0 and draws[name] >= 100,
              f"{draws[name]} draws, {violations[name]} violations, tightest {worst[name]:.4f}")
             for name in names])


# --- criterion 2 ------------------------------------------------------------

def test_criterion_2_algebraic_identities():
    rng = np.random.default_rng(2)
    checks = []

    size = 64
    u = rng.uniform(-1, 1, size) + 1j * rng.uniform(-1, 1, size)
    phi = rng.uniform(-1, 1, size) + 1j * rng.uniform(-1, 1, size)
    chi = rng.uniform(0, 1, size)
    x, y = rng.integers(0, size, 1000), rng.integers(0, size, 1000)
    lhs, r1, r2 = factorization_check(u, chi, phi, x, y)
    err = max(np.abs(lhs - r1).max(), np.abs(lhs - r2).max(), np.abs(r1 - r2).max())
    checks.append(("factorization", err <= 1e-14, f"1000 evaluations, max error {err:.1e}"))

    worst = 0.0
    for grid, cell in ((TorusGrid(1, 64), 4), (TorusGrid(2, 16), 2)):
        A = random_kernel(rng, 0.5, 0.5, cell)
        prob = NonlocalProblem(grid, A, Bandlimited(5, kmax=3) + Spike((0.0,) * grid.dim, 0.3))
        E = prob.operator()
        sol = solve_stiffness(E, prob.load(), method="direct")
        center = (grid.points // 2,) * grid.dim
        cut = Cutoff.smooth(grid, center, 0.4, 0.1)
        load = localized_load(prob, cut, sol)
        res = E.apply(cut.values.reshape(-1) * sol.flat) - load
        worst = max(worst, np.linalg.norm(res) / np.linalg.norm(load))
    checks.append(("localized", worst <= 1e-12, f"relative residual {worst:.1e}"))

    worst = 0.0
    for grid in (TorusGrid(1, 128), TorusGrid(2, 32)):
        for alpha in (0.3, 0.5, 0.8):
            w = _rough(grid, rng)
            a = lebesgue_norm(gamma_functional(w, alpha), 2.0)
            b = gagliardo_seminorm(w, alpha, 2.0)
            worst = max(worst, abs(a - b) / b)
    checks.append(("tonelli", worst <= 1e-12, f"relative error {worst:.1e}"))

    m = 64
    vals = rng.standard_normal((m, 5)) + 1j * rng.standard_normal((m, 5))
    dt = time_derivative(vals, 4.0)
    composed = half_derivative(hilbert_transform(half_derivative(vals, 4.0), 4.0), 4.0)
    err = np.abs(dt - composed).max() / np.abs(dt).max()
    checks.append(("dt_factorization", err <= 1e-10, f"relative error {err:.1e}"))

    vals = vals - vals.mean(axis=0)
    hv = hilbert_transform(vals, 4.0)
    other = rng.standard_normal((m, 5)) + 1j * rng.standard_normal((m, 5))
    iso = abs(np.linalg.norm(hv) - np.linalg.norm(vals)) / np.linalg.norm(vals)
    skew = abs(np.vdot(other, hv) + np.vdot(hilbert_transform(other, 4.0), vals))
    skew /= np.linalg.norm(vals) * np.linalg.norm(other)
    checks.append(("hilbert", iso <= 1e-12 and skew <= 1e-12,
                   f"isometry {iso:.1e}, skew-adjointness {skew:.1e}"))
    _report(2, "algebraic identities", checks)


# --- criterion 3 ------------------------------------------------------------

def test_criterion_3_oracle_equivalence():
    rng = np.random.default_rng(3)
    checks = []

    worst = 0.0
    for grid in (TorusGrid(1, 64), TorusGrid(2, 16)):
        alpha = 0.5
        f = bandlimited(grid, rng, kmax=3)
        E = FormOperator(KernelSpec.constant(alpha, 1.0, lam=1.0), grid)
        u = lax_milgram_solve(E, DualFunctional.from_density(f), tol=1e-12)
        m = oracles.fractional_multiplier(grid.dim, grid.points, alpha)
        exact = np.fft.ifftn(np.fft.fftn(f.values) / (1.0 + m))
        worst = max(worst, np.linalg.norm(u.values - exact) / np.linalg.norm(exact))
    checks.append(("elliptic_closed_form", worst <= 1e-6, f"relative error {worst:.1e}"))

    grid, circle = TorusGrid(1, 16), TimeCircle(4.0, 32, 1.0)
    shape = (circle.points,) + grid.shape
    F = SpaceTimeFunction(circle, grid, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    tk = TimeKernelSpec(KernelSpec.constant(0.5, 1.0, lam=1.0), 1.0)
    sol = hidden_coercivity_solve(tk, F, tol=1e-12)
    tau = (-2 * np.pi * np.fft.fftfreq(circle.points, d=circle.spacing))[:, None]
    m = oracles.fractional_multiplier(1, 16, 0.5)[None, :]
    exact = np.fft.ifftn(np.fft.fftn(F.values) / (1.0 - 1j * tau + m))
    err_circle = np.linalg.norm(sol.values - exact) / np.linalg.norm(exact)

    circle = TimeCircle(4.0, 128, 1.0)
    k = 3
    forcing = SeparableForcing(Mode((k,)), "bump", 8)
    csol = solve_cauchy(tk, forcing, circle, TorusGrid(1, 16), tol=1e-12)
    mu = oracles.fractional_multiplier(1, 16, 0.5)[k]
    win = circle.window()
    ref = duhamel_mode(mu, circle.times()[win], 1.0, 8)
    got = csol.u.values[win][:, 0]
    err_cauchy = np.abs(got - ref).max() / np.abs(ref).max()
    checks.append(("parabolic_closed_form", err_circle <= 1e-6 and err_cauchy <= 1e-6,
                   f"circle {err_circle:.1e}, Duhamel mode {err_cauchy:.1e}"))

    worst = 0.0
    for grid in (TorusGrid(1, 64), TorusGrid(2, 16)):
        A = random_kernel(rng, 0.5, 0.5, 2)
        E = FormOperator(A, grid)
        u_true = _rough(grid, rng)
        F = DualFunctional(grid, E.apply(u_true.flat))
        u = lax_milgram_solve(E, F, tol=1e-12)
        worst = max(worst, np.linalg.norm(u.values - u_true.values) / np.linalg.norm(u_true.values))
    checks.append(("round_trip", worst <= 1e-8, f"relative error {worst:.1e}"))

    worst = 0.0
    for grid, s, p in ((TorusGrid(1, 32), 0.3, 2.0), (TorusGrid(1, 32), 0.7, 3.5),
                       (TorusGrid(2, 8), 0.5, 1.5), (TorusGrid(2, 16), 0.6, 2.5)):
        w = _rough(grid, rng)
        a = gagliardo_seminorm(w, s, p)
        b = oracles.gagliardo(w.values, s, p)
        worst = max(worst, abs(a - b) / b)
    checks.append(("gagliardo_double_loop", worst <= 1e-12, f"relative error {worst:.1e}"))
    _report(3, "oracle equivalence", checks)


# --- criterion 4 ------------------------------------------------------------

def test_criterion_4_constant_audit():
    lam = 0.5
    bound = (1 + 0.05) / lam
    checks = []
    for grid, cell in ((TorusGrid(1, 64), 8), (TorusGrid(2, 16), 2)):
        pairs = []
        for seed in range(1000, 1010):
            A = KernelSpec.cell_random(0.5, cell, seed, lam)
            op = FormOperator(A, grid)
            fine = FormOperator(A.refined(), grid.refined())
            pair = ExponentPair.center(0.5)
            e0, e1 = inverse_norm_at(op, pair), inverse_norm_at(fine, pair)
            pairs.append((e0.value, e1.value, e0.certified and e1.certified))
        below = all(a <= bound and b <= bound for a, b, _ in pairs)
        tight = all(b >= a * (1 - 1e-12) for a, b, _ in pairs)
        cert = all(c for _, _, c in pairs)
        top = max(max(a, b) for a, b, _ in pairs)
        checks.append((f"dim{grid.dim}", below and tight and cert,
                       f"10 kernels N={grid.points}->{2 * grid.points}, max {top:.4f} <= {bound:.2f}, "
                       f"nondecreasing={tight}"))
    _report(4, "certified inverse norm at (alpha, 2) below 1.05/lambda", checks)


# --- criterion 5 ------------------------------------------------------------

def _checkerboard(cell):
    return KernelSpec.checkerboard(0.5, cell, 0.5, 2.0, lam=0.5)


def test_criterion_5_self_improvement():
    s_list = [0.5, 0.55, 0.6, 0.7, 0.8, 0.9, 0.95]
    checks = []
    for grid in (TorusGrid(1, 128), TorusGrid(2, 32)):
        prob = NonlocalProblem(grid, _checkerboard(4), Bandlimited(3, kmax=3))
        rep = self_improvement_scan(prob, s_list, [2.0], tol=1e-11)
        ratios = [r["ratio"] for r in rep.rows if r["N"] == grid.points]
        checks.append((f"elliptic_dim{grid.dim}", rep.eps_hat > 0,
                       f"N={grid.points}->{2 * grid.points} eps_hat={rep.eps_hat:g}, "
                       f"max ratio {max(ratios):.3f}"))
    grid, circle = TorusGrid(1, 32), TimeCircle(4.0, 128, 1.0)
    forcing = SeparableForcing(Bandlimited(2, kmax=3, mean_zero=True), "bump", 8)
    for label, base, mode in (("reseed", KernelSpec.cell_random(0.5, 4, 11, 0.5), "reseed"),
                              ("swap", _checkerboard(4), "swap")):
        tk = TimeKernelSpec(base, 1.0, mode, 0.25)
        rep = parabolic_self_improvement(tk, forcing, circle, grid, s_list[:-1], [2.0], tol=1e-10)
        checks.append((f"parabolic_{label}", rep.eps_hat > 0, f"eps_hat={rep.eps_hat:g}"))
    _report(5, "eps_hat > 0 for elliptic and parabolic sweeps", checks)


# --- criterion 6 ------------------------------------------------------------

def test_criterion_6_locality():
    grid = TorusGrid(2, 32)
    f = Sum((Bandlimited(3, kmax=3), Spike((0.0, 0.0), 0.5)))
    prob = NonlocalProblem(grid, _checkerboard(4), f)
    rep = local_improvement_experiment(prob, Ball((16, 16), 0.35), Ball((16, 16), 0.2), 0.55, 2.0, tol=1e-11)
    _report(6, "local norm stable, global norm unstable at (alpha + 0.05, 2)", [
        ("local", rep.local_stable, f"ratio {rep.local_ratio:.4f} <= 1.15"),
        ("global", rep.global_ratio > 1.3, f"ratio {rep.global_ratio:.4f} > 1.3"),
    ])


# --- criterion 7 ------------------------------------------------------------

def test_criterion_7_cauchy_contract():
    grid, circle = TorusGrid(1, 32), TimeCircle(4.0, 128, 1.0)
    assert circle.length == 4 * circle.horizon
    forcing = SeparableForcing(Bandlimited(2, kmax=3, mean_zero=True), "bump", 8)
    tk = TimeKernelSpec(_checkerboard(4), 1.0, "swap", 0.25)
    sol = solve_cauchy(tk, forcing, circle, grid, tol=1e-11)
    limit = 10 * math.exp(-(circle.length - circle.horizon)) * sol.f.l2_norm()

    win = np.flatnonzero(circle.window())
    tests = []
    for j in win:
        for k in range(grid.points):
            vals = np.zeros((circle.points,) + grid.shape, dtype=complex)
            vals[j] = Mode((k,))(grid).values
            tests.append(SpaceTimeFunction(circle, grid, vals))
    res = weak_residual(sol, tests)

    rep = parabolic_self_improvement(tk, forcing, circle, grid, [0.5], [2.0], tol=1e-10)
    _report(7, "Cauchy problem contract", [
        ("v0", sol.v0_norm <= limit, f"||v(0)|| = {sol.v0_norm:.2e} <= {limit:.2e}"),
        ("weak_residual", res.max() <= 1e-8, f"{len(tests)} tests (time deltas x modes), max {res.max():.1e}"),
        ("growth_constant", abs(rep.growth_ratio - 1) <= 0.25,
         f"constants {rep.growth_constants[0]:.4f} -> {rep.growth_constants[1]:.4f}"),
    ])


# --- criterion 8 ------------------------------------------------------------

def _outputs(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_8_determinism(tmp_path):
    import json
    checks = []
    for cfg in sorted(CONFIGS.glob("*.toml")):
        runs = []
        for tag in ("a", "b"):
            out = tmp_path / tag / cfg.stem
            code = cli.main(["run", "--config", str(cfg), "--outdir", str(out), "--quiet"])
            runs.append((code, _outputs(out)))
        (c0, f0), (c1, f1) = runs
        data0 = {k: v for k, v in f0.items() if not k.endswith("manifest.json")}
        data1 = {k: v for k, v in f1.items() if not k.endswith("manifest.json")}
        man = [json.loads(v)["files"] for f in (f0, f1) for k, v in f.items() if k.endswith("manifest.json")]
        same = c0 == c1 == 0 and data0 == data1 and len(data0) > 0 and man[0] == man[1]
        checks.append((cfg.stem, same, f"{len(data0)} data files"))
    _report(8, "CLI reruns are byte-identical", checks)

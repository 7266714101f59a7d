import numpy as np
import pytest

import oracles
from fraclab.elliptic import (NonlocalProblem, bass_ren_check, beta_form_bound_high, beta_form_bound_low,
                              contiguous_eps, gamma_functional, self_improvement_scan, solve_nonlocal,
                              solve_stiffness)
from fraclab.errors import ConfigurationError, RegimeError
from fraclab.forms import FormOperator
from fraclab.kernels import KernelSpec
from fraclab.lattice import GridFunction, TorusGrid
from fraclab.norms import ExponentPair
from fraclab.sources import Bandlimited, Mode, Spike, Zero

CHECKER = KernelSpec.checkerboard(0.5, 4, 0.5, 2.0, lam=0.5)


def test_regime_classification():
    grid = TorusGrid(1, 16)
    assert NonlocalProblem(grid, CHECKER).regime is None
    assert NonlocalProblem(grid, CHECKER, B=KernelSpec.constant(0.2)).regime == "low"
    assert NonlocalProblem(grid, CHECKER, B=KernelSpec.constant(0.4)).regime == "high"
    with pytest.raises(RegimeError):
        NonlocalProblem(grid, KernelSpec.checkerboard(0.2, 4, 1, 1, lam=0.5), B=KernelSpec.constant(0.7))
    with pytest.raises(ConfigurationError):
        NonlocalProblem(grid, KernelSpec.constant(0.5))


def test_constant_kernel_solution_matches_closed_form():
    grid = TorusGrid(1, 64)
    k = 5
    prob = NonlocalProblem(grid, KernelSpec.constant(0.5, lam=1.0), Mode((k,)))
    u = solve_nonlocal(prob, tol=1e-12)
    m = oracles.fractional_multiplier(1, 64, 0.5)[k]
    np.testing.assert_allclose(u.values, Mode((k,))(grid).values / m, rtol=1e-9)


@pytest.mark.parametrize("dim, points", [(1, 64), (2, 16)])
def test_solution_is_mean_zero_and_methods_agree(dim, points):
    grid = TorusGrid(dim, points)
    prob = NonlocalProblem(grid, CHECKER, Bandlimited(1, kmax=3) + Spike((0.0,) * dim, 0.2))
    load = prob.load()
    assert abs(load.sum()) < 1e-14
    u = solve_nonlocal(prob, tol=1e-12)
    assert abs(u.mean()) < 1e-12
    d = solve_nonlocal(prob, method="direct")
    np.testing.assert_allclose(u.values, d.values, atol=1e-9 * np.abs(d.values).max())
    E = prob.operator()
    np.testing.assert_allclose(E.apply_stiffness(d.flat), load, atol=1e-12 * np.abs(load).max())


def test_zero_problem_and_history():
    grid = TorusGrid(1, 32)
    assert not np.any(solve_nonlocal(NonlocalProblem(grid, CHECKER, Zero())).values)
    E = FormOperator(CHECKER, grid)
    prob = NonlocalProblem(grid, CHECKER, Bandlimited(2, kmax=3))
    _, hist = solve_stiffness(E, prob.load(), tol=1e-10, return_history=True)
    assert hist[-1] <= 1e-10 * hist[0]


def test_beta_bounds():
    rng = np.random.default_rng(5)
    grid = TorusGrid(2, 16)
    g = GridFunction(grid, rng.standard_normal(grid.shape))
    v = GridFunction(grid, rng.standard_normal(grid.shape))
    B = KernelSpec.checkerboard(0.45, 2, 1 + 1j, -0.5)
    hi = beta_form_bound_high(g, v, ExponentPair(0.55, 2.0, 0.5), B)
    assert hi["lhs"] <= hi["rhs"] and hi["smoothness"] == pytest.approx(0.45)
    low = beta_form_bound_low(g, v, ExponentPair(0.5, 2.5, 0.5), KernelSpec.constant(0.1, 2.0))
    assert low["lhs"] <= low["middle"] * (1 + 1e-12)
    assert 1 / low["q"] == pytest.approx(1 / 2.5 + (0.5 - 0.2) / 2)
    with pytest.raises(RegimeError):
        beta_form_bound_high(g, v, ExponentPair(0.55, 2.0, 0.5), KernelSpec.constant(0.1))
    with pytest.raises(RegimeError):
        beta_form_bound_low(g, v, ExponentPair(0.5, 2.0, 0.5), KernelSpec.constant(0.3))


def test_gamma_matches_oracle_and_splits():
    rng = np.random.default_rng(6)
    grid = TorusGrid(1, 16)
    u = GridFunction(grid, rng.standard_normal(16) + 1j * rng.standard_normal(16))
    full = gamma_functional(u, 0.4).values.real
    np.testing.assert_allclose(full, oracles.gamma(u.values, 0.4), rtol=1e-13)
    near = gamma_functional(u, 0.4, (0.0, 0.25)).values.real
    far = gamma_functional(u, 0.4, (0.25, np.inf)).values.real
    np.testing.assert_allclose(near**2 + far**2, full**2, rtol=1e-13)


def test_bass_ren_checks():
    grid = TorusGrid(2, 16)
    prob = NonlocalProblem(grid, KernelSpec.cell_random(0.5, 2, 8, 0.5), Bandlimited(4, kmax=3))
    rep = bass_ren_check(prob, 2.5)
    assert rep["s"] == pytest.approx(0.5 + 1 - 0.8)
    assert rep["gamma2_p"] <= rep["gamma2_bound"] * (1 + 1e-12)
    a, b = rep["tonelli"]
    assert a == pytest.approx(b, rel=1e-12)
    e = rep["energy"]
    assert e["lam_semi"] <= e["pairing"] * (1 + 1e-9) <= e["half_sum"] * (1 + 1e-9)
    with pytest.raises(ConfigurationError):
        bass_ren_check(prob, 2.0)
    with pytest.raises(ConfigurationError):
        bass_ren_check(prob, 2.5, s=0.6)


def test_contiguous_eps():
    assert contiguous_eps(0.5, [0.4, 0.5, 0.6, 0.7, 0.8], [False, True, True, False, True]) == pytest.approx(0.1)
    assert contiguous_eps(0.5, [0.5, 0.6], [False, True]) == 0.0


def test_self_improvement_scan_grows_with_s():
    prob = NonlocalProblem(TorusGrid(1, 64), CHECKER, Bandlimited(3, kmax=3))
    s_list = [0.5, 0.6, 0.7, 0.8, 0.9]
    rep = self_improvement_scan(prob, s_list, [2.0, 2.5])
    ratios = [r["ratio"] for r in rep.rows if r["p"] == 2.0 and r["N"] == 64]
    assert rep.eps_hat > 0
    assert all(a <= b + 1e-12 for a, b in zip(ratios, ratios[1:]))
    assert rep.improved(0.5, 2.0)
    with pytest.raises(KeyError):
        rep.improved(0.55, 2.0)
    rows = list(rep.csv_rows())
    assert rows[0][0] == "s" and len(rows) == 1 + 2 * 2 * len(s_list)
    assert set(rep.summary()) >= {"eps_hat", "bound_constants"}

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from fraclab.errors import ConfigurationError, EmbeddingInfeasibleError, RegimeError
from fraclab.lattice import GridFunction, TorusGrid, bandlimited
from fraclab.norms import (Ball, ExponentPair, besov_norm, besov_shells, check_mixed_embedding,
                           check_sobolev_embedding, gagliardo_seminorm, lebesgue_norm, local_norm,
                           maximal_operator, norm_report, pointwise_gagliardo, sobolev_exponents,
                           sobolev_norm)


def test_gagliardo_of_point_indicator_frozen():
    # u = indicator of one site, N = 16, s = 1/2, p = 2: the sum reduces to
    # 2 * sum_{k != 0} (k_min)^-2 with k_min = min(k, 16 - k).
    inner = 2 * sum(Fraction(1, j * j) for j in range(1, 8)) + Fraction(1, 64)
    exact = math.sqrt(float(2 * inner))
    grid = TorusGrid(1, 16)
    u = np.zeros(16)
    u[5] = 1.0
    assert gagliardo_seminorm(grid.function(u), 0.5, 2.0) == pytest.approx(exact, rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(dim=st.sampled_from([1, 2]), s=st.floats(0.05, 0.95), p=st.floats(1.0, 4.0), seed=st.integers(0, 10**6))
def test_gagliardo_matches_double_loop(dim, s, p, seed):
    grid = TorusGrid(dim, 16 if dim == 1 else 8)
    rng = np.random.default_rng(seed)
    u = grid.function(rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    assert gagliardo_seminorm(u, s, p) == pytest.approx(oracles.gagliardo(u.values, s, p), rel=1e-12)


def test_pointwise_gagliardo_sums_to_seminorm(rng):
    grid = TorusGrid(2, 8)
    u = grid.function(rng.standard_normal(grid.shape))
    pw = pointwise_gagliardo(u, 0.4, 3.0)
    assert (pw.sum() * grid.cell_volume) ** (1 / 3) == pytest.approx(gagliardo_seminorm(u, 0.4, 3.0), rel=1e-13)


def test_norm_composition(rng):
    grid = TorusGrid(1, 32, 2.0)
    u = grid.function(rng.standard_normal(32))
    rep = norm_report(u, 0.6, 2.5, besov=True)
    assert rep.full == pytest.approx((rep.lebesgue**2.5 + rep.gagliardo**2.5) ** 0.4)
    assert rep.full == pytest.approx(sobolev_norm(u, 0.6, 2.5))
    assert rep.besov > 0 and set(rep.to_dict()) >= {"lebesgue", "gagliardo", "full", "besov"}
    assert lebesgue_norm(grid.constant(-3.0), 3.0) == pytest.approx(3.0 * 2.0 ** (1 / 3))
    assert gagliardo_seminorm(grid.constant(5.0), 0.5, 2.0) == 0.0


@pytest.mark.parametrize("p", [0.5, math.inf])
def test_lebesgue_rejects_bad_exponent(p):
    with pytest.raises(ConfigurationError):
        lebesgue_norm(TorusGrid(1, 8).constant(1.0), p)


def test_besov_single_mode_frozen():
    # |k| = 3 sits where phi_1 = phi_2 = 1/2, so ||u||^2 = 2 * 1/4 + 4 * 1/4 at s p = 1.
    grid = TorusGrid(1, 32)
    x = np.arange(32) / 32
    u = grid.function(np.exp(2j * np.pi * 3 * x))
    assert besov_norm(u, 0.5, 2.0) == pytest.approx(math.sqrt(1.5), rel=1e-13)


@pytest.mark.parametrize("dim, points", [(1, 64), (2, 16)])
def test_besov_shells_partition_unity(dim, points):
    grid = TorusGrid(dim, points)
    shells = besov_shells(grid)
    np.testing.assert_allclose(sum(shells), 1.0, atol=1e-15)
    k = grid.wavenumber_modulus()
    for j, phi in enumerate(shells):
        assert np.all(phi >= -1e-15)
        if j > 0:
            assert np.all(phi[(k < 2 ** (j - 1)) | (k > 2 ** (j + 1))] == 0)
    assert [oracles.cosine_taper(r) for r in (0.5, 1.5, 2.5)] == pytest.approx([1.0, 0.5, 0.0])


def test_besov_is_comparable_to_sobolev_at_p2(rng):
    grid = TorusGrid(1, 128)
    ratios = []
    for _ in range(5):
        u = bandlimited(grid, rng, kmax=20, decay=0.0)
        ratios.append(besov_norm(u, 0.5, 2.0) / sobolev_norm(u, 0.5, 2.0))
    assert max(ratios) / min(ratios) < 3.0


@pytest.mark.parametrize("dim, points", [(1, 16), (2, 8)])
def test_maximal_operator_matches_ball_oracle(dim, points, rng):
    grid = TorusGrid(dim, points)
    u = grid.function(rng.standard_normal(grid.shape))
    got = maximal_operator(u).values.real
    np.testing.assert_allclose(got, oracles.maximal(u.values), rtol=1e-13)
    assert np.all(got >= np.abs(u.values) - 1e-15)
    np.testing.assert_allclose(maximal_operator(grid.constant(2.0)).values.real, 2.0)


def test_ball_semantics():
    grid = TorusGrid(2, 16)
    b = Ball((15, 0), 0.1)
    m = b.mask(grid)
    assert m[15, 0] and m[0, 0] and m[14, 0] and not m[12, 0]
    assert b.refined().center == (30, 0)
    assert Ball.whole(grid).mask(grid).all()
    with pytest.raises(ConfigurationError):
        Ball((0, 0), 0.5).mask(grid)
    with pytest.raises(ConfigurationError):
        Ball((0,), 0.1).mask(grid)


def test_local_norm_is_dominated_by_global(rng):
    grid = TorusGrid(2, 16)
    u = grid.function(rng.standard_normal(grid.shape))
    leb, gag = local_norm(u, Ball((8, 8), 0.25), 0.5, 2.0)
    assert leb <= lebesgue_norm(u, 2.0) and gag <= gagliardo_seminorm(u, 0.5, 2.0)


class TestExponents:
    def test_pair_duality(self):
        pair = ExponentPair(0.6, 3.0, 0.5)
        assert pair.s_dual == pytest.approx(0.4) and pair.p_dual == pytest.approx(1.5)
        assert pair.dual().dual() == pair
        assert ExponentPair.center(0.3) == ExponentPair(0.3, 2.0, 0.3)

    @pytest.mark.parametrize("s, p, alpha", [(0.95, 2.0, 0.4), (0.5, 1.0, 0.5), (0.0, 2.0, 0.5), (0.5, 2.0, 1.0)])
    def test_pair_rejects(self, s, p, alpha):
        with pytest.raises(ConfigurationError):
            ExponentPair(s, p, alpha)

    def test_frozen_lower_exponents(self):
        ex = sobolev_exponents(0.5, 0.125, 0.5, 2.0, 2)
        assert ex.two_star_alpha == pytest.approx(4 / 3, abs=1e-15)
        assert ex.two_star_alpha_2beta == pytest.approx(8 / 5, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(alpha=st.floats(0.1, 0.9), data=st.data(), p=st.floats(1.2, 6.0), n=st.sampled_from([1, 2]))
    def test_derived_exponent_relations(self, alpha, data, p, n):
        s = data.draw(st.floats(max(0.01, 2 * alpha - 0.99), min(0.99, 2 * alpha - 0.01)))
        ex = sobolev_exponents(alpha, None, s, p, n)
        sd, pd = 2 * alpha - s, p / (p - 1)
        if 1 / p + (2 * alpha - s) / n < 1:
            assert 1 / ex.r == pytest.approx(1 / p + sd / n)
            assert ex.r < p
        assert 1 / ex.p_lower_star == pytest.approx(1 / p + sd / n)
        assert ex.feasible == (sd * pd < n)
        if ex.feasible:
            assert 1 / ex.p_dual_star == pytest.approx(1 / pd - sd / n)

    def test_regimes(self):
        with pytest.raises(RegimeError):
            sobolev_exponents(0.2, 0.65, 0.2, 2.0, 2)
        high = sobolev_exponents(0.5, 0.45, 0.5, 2.0, 2)
        assert high.q is None and high.two_star_alpha_2beta is None
        low = sobolev_exponents(0.5, 0.1, 0.6, 2.0, 2)
        assert 1 / low.q == pytest.approx(0.5 + (1.0 - 0.2 - 0.6) / 2)


def test_sobolev_embedding_needs_dim2_and_feasibility(rng):
    grid = TorusGrid(2, 16)
    suite = [bandlimited(grid, rng, kmax=4) for _ in range(3)] + [grid.constant(1.0)]
    rep = check_sobolev_embedding(suite, 0.5, 2.0)
    assert rep["p_star"] == pytest.approx(4.0) and len(rep["ratios"]) == 3
    with pytest.raises(EmbeddingInfeasibleError):
        check_sobolev_embedding(suite, 0.9, 3.0)
    with pytest.raises(ConfigurationError):
        check_sobolev_embedding([TorusGrid(1, 16).constant(1.0)], 0.5, 2.0)


def test_mixed_embedding_near_piece_obeys_hoelder(rng):
    grid = TorusGrid(2, 16)
    v = GridFunction(grid, rng.standard_normal(grid.shape))
    rep = check_mixed_embedding(v, 0.5, 2.0, 0.1)
    assert rep["lhs"] > 0 and rep["rhs"] > 0
    assert rep["near_holder_ok"] and rep["constant"] == pytest.approx(rep["lhs"] / rep["rhs"])
    with pytest.raises(RegimeError):
        check_mixed_embedding(v, 0.2, 2.0, 0.1)

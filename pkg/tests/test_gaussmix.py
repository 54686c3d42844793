import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from conftest import random_spd
from fovsplit.gaussmix import (GaussianComponent, GaussianMixture, eig_decompose, l2_distance,
                               merge_moments, mixture_moments, pdf, position_marginal, reduce,
                               runnalls_cost, sample)


def random_gm(rng, L, n, position_dim=None):
    w = rng.uniform(0.1, 1.0, L)
    m = rng.normal(0, 2, (L, n))
    P = np.array([random_spd(rng, n) for _ in range(L)])
    return GaussianMixture(w / w.sum(), m, P, position_dim=position_dim, normalized=True)


class TestContainers:
    def test_component_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            GaussianComponent(1.0, np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_component_rejects_negative_weight(self):
        with pytest.raises(ValueError):
            GaussianComponent(-0.1, np.zeros(1), np.eye(1))

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            GaussianMixture(np.ones(1), np.zeros((1, 2)), np.array([[[1.0, 2.0], [2.0, 1.0]]]))

    def test_normalized_flag_checked(self):
        with pytest.raises(ValueError):
            GaussianMixture(np.array([0.3, 0.3]), np.zeros((2, 1)), np.ones((2, 1, 1)),
                            normalized=True)

    def test_json_round_trip(self, rng):
        gm = random_gm(rng, 4, 3, position_dim=2)
        back = GaussianMixture.from_json(gm.to_json())
        np.testing.assert_array_equal(back.w, gm.w)
        np.testing.assert_array_equal(back.m, gm.m)
        np.testing.assert_array_equal(back.P, gm.P)
        assert back.position_dim == 2
        d = json.loads(gm.to_json())
        assert set(d) == {"dim", "position_dim", "components"}
        assert set(d["components"][0]) == {"w", "m", "P"}

    def test_mask_indexing_is_subnormalized(self, rng):
        gm = random_gm(rng, 5, 2)
        part = gm[np.array([True, False, True, False, False])]
        assert len(part) == 2 and not part.normalized


class TestEigDecompose:
    def test_identity(self):
        b = eig_decompose(np.eye(2))
        np.testing.assert_allclose(b.values, [1, 1])
        np.testing.assert_allclose(np.abs(b.vectors), np.eye(2), atol=1e-12)

    def test_diagonal(self):
        b = eig_decompose(np.diag([4.0, 1.0]))
        np.testing.assert_allclose(b.values, [4, 1])
        np.testing.assert_allclose(b.vectors, np.eye(2), atol=1e-12)

    def test_two_by_two(self):
        P = np.array([[2.0, 1.0], [1.0, 2.0]])
        b = eig_decompose(P)
        np.testing.assert_allclose(b.values, [3, 1], atol=1e-12)
        v1, v2 = b.vectors[:, 0], b.vectors[:, 1]
        assert abs(abs(v1 @ np.array([1, 1])) / np.sqrt(2) - 1) < 1e-12
        assert abs(abs(v2 @ np.array([1, -1])) / np.sqrt(2) - 1) < 1e-12
        np.testing.assert_allclose(b.reconstruct(), P, rtol=1e-8)

    @pytest.mark.parametrize("bad", [np.array([[1.0, np.nan], [np.nan, 1.0]]),
                                     np.array([[1.0, 2.0], [2.0, 1.0]]),
                                     np.zeros((2, 2))])
    def test_errors(self, bad):
        with pytest.raises(ValueError):
            eig_decompose(bad)

    def test_sign_convention_deterministic(self):
        P = np.array([[2.0, 1.0], [1.0, 2.0]])
        a = eig_decompose(P).vectors
        b = eig_decompose(P.copy()).vectors
        np.testing.assert_array_equal(a, b)
        for j in range(2):
            k = np.argmax(np.abs(a[:, j]))
            assert a[k, j] > 0

    @given(st.integers(1, 6), st.integers(0, 2 ** 31))
    def test_round_trip(self, n, seed):
        P = random_spd(np.random.default_rng(seed), n)
        b = eig_decompose(P)
        assert np.all(np.diff(b.values) <= 0)
        np.testing.assert_allclose(b.vectors.T @ b.vectors, np.eye(n), atol=1e-9)
        assert np.linalg.norm(b.reconstruct() - P) <= 1e-8 * np.linalg.norm(P)


class TestL2:
    def test_self_distance_zero(self, rng):
        f = random_gm(rng, 3, 2)
        assert l2_distance(f, f) <= 1e-12

    def test_symmetric(self, rng):
        f, g = random_gm(rng, 3, 2), random_gm(rng, 4, 2)
        assert l2_distance(f, g) == l2_distance(g, f)

    def test_quadrature_oracle(self):
        f = GaussianMixture.single([0.0], [[1.0]])
        g = GaussianMixture.single([2.0], [[1.0]])
        val, _ = integrate.quad(lambda x: (norm.pdf(x) - norm.pdf(x, 2.0)) ** 2, -np.inf, np.inf,
                                epsabs=1e-14, epsrel=1e-13)
        assert abs(l2_distance(f, g) - val) < 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            l2_distance(GaussianMixture.single([0.0], [[1.0]]),
                        GaussianMixture.single([0.0, 0.0], np.eye(2)))

    def test_permutation_gives_zero(self, rng):
        f = random_gm(rng, 4, 2)
        g = f._replace(w=f.w[::-1].copy(), m=f.m[::-1].copy(), P=f.P[::-1].copy())
        assert l2_distance(f, g) <= 1e-12

    def test_distinct_positive(self, rng):
        f = random_gm(rng, 3, 2)
        g = f._replace(m=f.m + 0.1)
        assert l2_distance(f, g) > 1e-6


class TestReduce:
    def test_noop(self, rng):
        gm = random_gm(rng, 3, 2)
        assert reduce(gm, 3) is gm

    def test_duplicates_merge(self):
        P = np.array([[2.0, 0.3], [0.3, 1.0]])
        gm = GaussianMixture(np.array([0.4, 0.6]), np.array([[1.0, 2.0], [1.0, 2.0]]),
                             np.array([P, P]), normalized=True)
        out = reduce(gm, 1)
        assert len(out) == 1
        assert out.w[0] == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(out.m[0], [1, 2], atol=1e-14)
        np.testing.assert_allclose(out.P[0], P, atol=1e-14)

    def test_five_to_three_moment_oracle(self, rng):
        gm = random_gm(rng, 5, 2)
        out, groups = reduce(gm, 3, return_assignments=True)
        assert len(out) == 3
        for k, idx in enumerate(groups):
            # direct moment match of the merged inputs
            w = gm.w[idx]
            mu = (w[:, None] * gm.m[idx]).sum(0) / w.sum()
            cov = sum(wi * (Pi + np.outer(mi - mu, mi - mu))
                      for wi, mi, Pi in zip(w, gm.m[idx], gm.P[idx])) / w.sum()
            assert out.w[k] == pytest.approx(w.sum(), rel=1e-12)
            np.testing.assert_allclose(out.m[k], mu, atol=1e-12)
            np.testing.assert_allclose(out.P[k], cov, atol=1e-12)
        mu0, cov0 = mixture_moments(gm)
        mu1, cov1 = mixture_moments(out)
        np.testing.assert_allclose(mu1, mu0, atol=1e-12)
        np.testing.assert_allclose(cov1, cov0, atol=1e-12)

    def test_greedy_first_pair_is_cheapest(self, rng):
        gm = random_gm(rng, 5, 2)
        _, groups = reduce(gm, 4, return_assignments=True)
        merged = next(g for g in groups if len(g) == 2)
        costs = {(i, j): runnalls_cost(gm.w[i], gm.m[i], gm.P[i], gm.w[j], gm.m[j], gm.P[j])
                 for i in range(5) for j in range(i + 1, 5)}
        assert tuple(sorted(merged)) == min(costs, key=costs.get)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            reduce(GaussianMixture.empty(2), 1)

    @given(st.integers(2, 30), st.integers(1, 10), st.integers(0, 2 ** 31))
    def test_conserves_weight_and_mean(self, L, k, seed):
        r = np.random.default_rng(seed)
        gm = random_gm(r, L, 3)
        gm = gm._replace(w=gm.w * 2.5, normalized=False)
        out = reduce(gm, k)
        assert len(out) == min(L, k)
        assert out.w.sum() == pytest.approx(gm.w.sum(), rel=1e-14)
        mu0, _ = mixture_moments(gm)
        mu1, _ = mixture_moments(out)
        assert np.abs(mu1 - mu0).max() <= 1e-9 * max(1.0, np.abs(mu0).max())

    def test_prunes_negligible(self):
        w = np.array([0.5, 0.5 - 1e-10, 1e-10])
        gm = GaussianMixture(w, np.array([[0.0], [5.0], [50.0]]), np.ones((3, 1, 1)))
        out = reduce(gm, 2)
        assert np.all(np.abs(out.m) < 10)
        assert out.w.sum() == pytest.approx(1.0, abs=1e-15)


class TestMoments:
    def test_single(self):
        P = np.array([[2.0, 0.1], [0.1, 1.0]])
        mu, cov = mixture_moments(GaussianMixture.single([1.0, -1.0], P))
        np.testing.assert_allclose(mu, [1, -1])
        np.testing.assert_allclose(cov, P)

    def test_two_point_variance(self):
        gm = GaussianMixture(np.array([0.5, 0.5]), np.array([[-1.0], [1.0]]), np.ones((2, 1, 1)))
        mu, cov = mixture_moments(gm)
        assert mu[0] == pytest.approx(0.0, abs=1e-15)
        assert cov[0, 0] == pytest.approx(2.0, abs=1e-14)

    def test_permutation_invariant(self, rng):
        gm = random_gm(rng, 6, 3)
        perm = rng.permutation(6)
        mu1, c1 = mixture_moments(gm)
        mu2, c2 = mixture_moments(gm._replace(w=gm.w[perm], m=gm.m[perm], P=gm.P[perm]))
        np.testing.assert_allclose(mu1, mu2, atol=1e-13)
        np.testing.assert_allclose(c1, c2, atol=1e-13)

    def test_zero_weight_raises(self):
        with pytest.raises(ValueError):
            mixture_moments(GaussianMixture(np.zeros(1), np.zeros((1, 1)), np.ones((1, 1, 1))))

    def test_monte_carlo(self, rng):
        gm = random_gm(rng, 4, 2)
        N = 10 ** 6
        x = sample(gm, N, rng)
        mu, cov = mixture_moments(gm)
        se = np.sqrt(np.diag(cov) / N)
        assert np.all(np.abs(x.mean(0) - mu) <= 4 * se)
        # second-moment standard errors from fourth central moments of the draws
        d = x - x.mean(0)
        for i in range(2):
            for j in range(2):
                prod = d[:, i] * d[:, j]
                se_ij = prod.std() / np.sqrt(N)
                assert abs(prod.mean() - cov[i, j]) <= 4 * se_ij


class TestMarginal:
    def test_full_dim_identity(self):
        c = GaussianComponent(1.0, np.arange(3.0), np.diag([1.0, 2.0, 3.0]))
        m = position_marginal(c, 3)
        np.testing.assert_array_equal(m.mean, c.mean)
        np.testing.assert_array_equal(m.cov, c.cov)

    def test_cv_block(self, rng):
        P = random_spd(rng, 4)
        c = GaussianComponent(1.0, np.arange(4.0), P)
        m = position_marginal(c, 2)
        np.testing.assert_array_equal(m.cov, P[:2, :2])
        np.testing.assert_array_equal(m.mean, [0, 1])

    def test_idempotent(self, rng):
        gm = random_gm(rng, 3, 4)
        a = position_marginal(position_marginal(gm, 3), 2)
        b = position_marginal(gm, 2)
        np.testing.assert_array_equal(a.P, b.P)

    @pytest.mark.parametrize("n_s", [0, 5])
    def test_range(self, n_s):
        with pytest.raises(ValueError):
            position_marginal(GaussianComponent(1.0, np.zeros(4), np.eye(4)), n_s)


def test_pdf_matches_scipy(rng):
    from scipy.stats import multivariate_normal
    gm = random_gm(rng, 3, 2)
    x = rng.normal(size=(7, 2))
    ref = sum(w * multivariate_normal(m, P).pdf(x) for w, m, P in zip(gm.w, gm.m, gm.P))
    np.testing.assert_allclose(pdf(gm, x), ref, rtol=1e-12)


def test_merge_moments_weight():
    wt, mu, cov = merge_moments(np.array([1.0, 3.0]), np.array([[0.0], [4.0]]),
                                np.ones((2, 1, 1)))
    assert wt == 4.0 and mu[0] == 3.0 and cov[0, 0] == pytest.approx(1.0 + 3.0)

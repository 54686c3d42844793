import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from conftest import random_spd
from fovsplit.gaussmix import (EigenBasis, GaussianComponent, GaussianMixture, eig_decompose,
                               l2_distance, mixture_moments, sample)
from fovsplit.regions import (Box, Complement, Disc, GridSpec, HalfSpace, Union, collocation_grid,
                              empty_region, whole_space)
from fovsplit.splitlib import lookup
from fovsplit.splitter import (NoSplit, Split, SplitConfig, SplitDepthWarning, decide,
                               fullstate_split_index, inclusion_flags, needs_split, partition,
                               position_split_direction, split_component, split_for_fov,
                               split_for_multifov)

STD2 = GaussianComponent(1.0, np.zeros(2), np.eye(2))
HALF = HalfSpace([1.0, 0.0], 0.0)


def std_gm(n=2):
    return GaussianMixture.single(np.zeros(n), np.eye(n), position_dim=2)


def cfg(**kw):
    base = dict(w_min=0.01, R=4, lam=0.001)
    base.update(kw)
    return SplitConfig(**base)


def random_mixture(rng, L=3, n=2, spread=2.0):
    w = rng.uniform(0.2, 1.0, L)
    m = rng.normal(0, spread, (L, n))
    P = np.array([random_spd(rng, n) for _ in range(L)])
    return GaussianMixture(w / w.sum(), m, P, position_dim=2, normalized=True)


def assert_same_mixture(a, b, tol=1e-12):
    assert len(a) == len(b)
    np.testing.assert_allclose(a.w, b.w, atol=tol, rtol=0)
    np.testing.assert_allclose(a.m, b.m, atol=tol, rtol=0)
    np.testing.assert_allclose(a.P, b.P, atol=tol, rtol=0)


class TestFlags:
    def test_whole_plane_all_true(self):
        d = inclusion_flags(STD2, [whole_space(2)], GridSpec())
        assert d.all()

    def test_half_space_hand_grid(self):
        grid = GridSpec(1.0, 3)
        d = inclusion_flags(STD2, [HALF], grid)
        y, _ = collocation_grid(grid, 2)
        np.testing.assert_array_equal(d[0], y[:, 0] >= 0)

    def test_one_dimensional(self):
        c = GaussianComponent(1.0, np.zeros(1), np.eye(1))
        d = inclusion_flags(c, [HalfSpace([1.0], 0.0)], GridSpec(1.0, 3))
        np.testing.assert_array_equal(d[0], [False, True, True])

    def test_rows_follow_region_order(self):
        regions = [HALF, Disc([0.5, 0.5], 1.0), Box([-1, -1], [0, 2])]
        d = inclusion_flags(STD2, regions, GridSpec())
        d_rev = inclusion_flags(STD2, regions[::-1], GridSpec())
        np.testing.assert_array_equal(d, d_rev[::-1])

    def test_needs_split(self):
        assert not needs_split(np.ones((1, 9), bool))
        assert not needs_split(np.zeros((1, 9), bool))
        mixed = np.zeros((2, 9), bool)
        mixed[0] = True
        mixed[1, :3] = True
        assert needs_split(mixed)
        with pytest.raises(ValueError):
            needs_split(np.zeros((1, 0), bool))


class TestDirection:
    def test_half_space_in_y2(self):
        grid = GridSpec()
        d = inclusion_flags(STD2, [HalfSpace([0.0, 1.0], 0.2)], grid)
        basis = eig_decompose(np.eye(2))
        assert position_split_direction(d, grid, basis) == 1

    def test_all_inconsistent_ties_to_largest_variance(self):
        grid = GridSpec(1.0, 3)
        # checkerboard pattern: every plane in both directions is mixed
        y, idx = collocation_grid(grid, 2)
        d = ((idx.sum(axis=1) % 2) == 0)[None, :]
        basis = eig_decompose(np.diag([4.0, 1.0]))
        assert position_split_direction(d, grid, basis) == 0

    def test_circle_matches_exhaustive_tabulation(self, rng):
        grid = GridSpec()
        y, idx = collocation_grid(grid, 2)
        for _ in range(20):
            P = random_spd(rng, 2)
            c = GaussianComponent(1.0, np.zeros(2), P)
            basis = eig_decompose(P)
            r = np.sqrt(basis.values.min()) * rng.uniform(0.5, 2.5)
            d = inclusion_flags(c, [Disc(rng.normal(0, 0.5, 2), r)], grid)
            counts = []
            for j in range(2):
                s = 0
                for level in range(grid.n_g):
                    on = idx[:, j] == level
                    vals = d[0, on]
                    s += bool(vals.size) and (vals.all() or not vals.any())
                counts.append(s)
            expect = int(np.argmax(counts))
            assert position_split_direction(d, grid, basis) == expect

    def test_fullstate_block_diagonal(self, rng):
        Pp = random_spd(rng, 2)
        P = np.block([[Pp, np.zeros((2, 2))], [np.zeros((2, 2)), 0.01 * np.eye(2)]])
        full = eig_decompose(P)
        pos = eig_decompose(Pp)
        for j in range(2):
            k = fullstate_split_index(full, pos.vectors[:, j], 2)
            assert abs(abs(full.vectors[:2, k] @ pos.vectors[:, j]) - 1) < 1e-10
            assert np.allclose(full.vectors[2:, k], 0, atol=1e-10)

    def test_fullstate_correlated_brute_force(self):
        sp, sv, rho = 3.0, 1.0, 0.9
        blk = np.array([[sp ** 2, rho * sp * sv], [rho * sp * sv, sv ** 2]])
        P = np.zeros((4, 4))
        P[np.ix_([0, 2], [0, 2])] = blk
        P[np.ix_([1, 3], [1, 3])] = 0.5 * blk
        full = eig_decompose(P)
        pos = eig_decompose(P[:2, :2])
        for j in range(2):
            v = np.concatenate([pos.vectors[:, j], np.zeros(2)])
            brute = max(range(4), key=lambda k: (abs(v @ full.vectors[:, k]), -k))
            assert fullstate_split_index(full, pos.vectors[:, j], 2) == brute
            assert fullstate_split_index(full, -pos.vectors[:, j], 2) == brute

    def test_decide(self):
        c = GaussianComponent(1.0, np.zeros(4), np.eye(4))
        assert isinstance(decide(c, [HalfSpace([1.0, 0.0], 10.0)], cfg()), NoSplit)
        dec = decide(c, [HalfSpace([0.0, 1.0], 0.2)], cfg())
        assert isinstance(dec, Split) and dec.j_star == 1


class TestSplitComponent:
    def test_table_entry_on_standard_normal(self):
        p = lookup(None, 4, 0.001)
        kids = split_component(STD2, 0, p)
        assert len(kids) == 4
        for kid, w, mu in zip(kids, p.weights, p.means):
            assert kid.weight == w
            np.testing.assert_allclose(kid.mean, [mu, 0.0], atol=1e-15)
            np.testing.assert_allclose(kid.cov, np.diag([0.58160633157686 ** 2, 1.0]),
                                       atol=1e-14)
        assert sum(k.weight for k in kids) == 1.0

    def test_l2_to_original(self):
        p = lookup(None, 4, 0.001)
        orig = GaussianMixture.from_components([STD2])
        split = GaussianMixture.from_components(split_component(STD2, 0, p))
        d_split = l2_distance(orig, split)
        assert d_split <= 0.01
        # any single Gaussian with the shrunken covariance is worse
        for shift in np.linspace(-0.5, 0.5, 11):
            single = GaussianMixture.single([shift, 0.0], np.diag([p.sigma ** 2, 1.0]))
            assert d_split <= l2_distance(orig, single)

    def test_1d_quadrature_cross_check(self):
        from scipy import integrate
        p = lookup(None, 4, 0.001)
        c = GaussianComponent(1.0, np.zeros(1), np.eye(1))
        kids = split_component(c, 0, p)
        f = lambda x: (norm.pdf(x) - sum(k.weight * norm.pdf(x, k.mean[0], np.sqrt(k.cov[0, 0]))
                                         for k in kids)) ** 2
        val, _ = integrate.quad(f, -12, 12, epsabs=1e-14, limit=200)
        a = GaussianMixture.from_components([c])
        b = GaussianMixture.from_components(kids)
        assert l2_distance(a, b) == pytest.approx(val, abs=1e-10)

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            split_component(STD2, 2, lookup(None, 3, 0.001))

    @given(st.integers(0, 2 ** 31), st.sampled_from([3, 4]))
    def test_moment_preservation(self, seed, R):
        r = np.random.default_rng(seed)
        P = random_spd(r, 4, 2.0)
        c = GaussianComponent(0.7, r.normal(size=4), P)
        p = lookup(None, R, 0.001)
        kids = split_component(c, int(r.integers(4)), p)
        gm = GaussianMixture.from_components(kids)
        assert abs(gm.w.sum() - 0.7) <= 1e-15
        mu, _ = mixture_moments(gm)
        assert np.abs(mu - c.mean).max() <= 1e-10 * max(1, np.abs(c.mean).max())

    @pytest.mark.parametrize("R", [3, 4])
    def test_covariance_residual_recorded(self, R):
        # the split shrinks variance along the split axis by the library's
        # moment deficit; the residual is a property of the entry
        p = lookup(None, R, 0.001)
        kids = split_component(STD2, 0, p)
        _, cov = mixture_moments(GaussianMixture.from_components(kids))
        residual = 1.0 - cov[0, 0]
        assert residual == pytest.approx(p.variance_deficit(), abs=1e-14)
        assert cov[1, 1] == pytest.approx(1.0, abs=1e-14)
        # measured once per entry
        expected = {3: 0.04524375837175354, 4: 0.04969938179263367}[R]
        assert residual == pytest.approx(expected, abs=1e-12)


class TestRecursion:
    def test_covering_fov_is_noop(self):
        gm = std_gm()
        out = split_for_fov(gm, cfg(), Box([-10, -10], [10, 10]))
        assert_same_mixture(out, gm, 0)

    def test_half_plane_mass(self):
        out = split_for_fov(std_gm(), cfg(), HALF)
        inside, outside = partition(out, HALF)
        assert abs(inside.total_weight - 0.5) <= 0.02
        assert out.total_weight == pytest.approx(1.0, abs=1e-12)

    def test_half_plane_mass_monte_carlo(self, rng):
        S = HalfSpace([1.0, 0.5], 0.3)
        out = split_for_fov(std_gm(), cfg(), S)
        inside, _ = partition(out, S)
        truth = norm.sf(0.3 / np.hypot(1.0, 0.5))
        assert abs(inside.total_weight - truth) <= 0.02
        x = sample(std_gm(), 10 ** 6, rng)
        p_mc = S.contains(x).mean()
        se = np.sqrt(p_mc * (1 - p_mc) / 10 ** 6)
        assert abs(p_mc - truth) <= 3 * se

    def test_error_non_increasing_with_depth(self):
        errs = []
        for depth in range(4):
            if depth == 0:
                out = std_gm()
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", SplitDepthWarning)
                    out = split_for_fov(std_gm(), cfg(max_depth=depth), HALF)
            inside, _ = partition(out, HALF)
            errs.append(abs(inside.total_weight - 0.5))
        for a, b in zip(errs, errs[1:]):
            assert b <= a + 1e-9

    def test_pass_through_below_w_min(self):
        gm = GaussianMixture(np.array([0.005, 0.995]), np.array([[0.0, 0.0], [10.0, 0.0]]),
                             np.array([np.eye(2), np.eye(2)]), position_dim=2, normalized=True)
        out = split_for_fov(gm, cfg(), HALF)
        assert len(out) == 2
        assert out.total_weight == pytest.approx(1.0, abs=1e-15)

    def test_postcondition_heavy_components_resolved(self, rng):
        gm = random_mixture(rng, 4)
        S = Disc([0.5, -0.3], 1.5)
        c = cfg(R=3)
        out, info = split_for_fov(gm, c, S, return_info=True)
        assert not info.hit_max_depth
        for i in np.flatnonzero(out.w >= c.w_min):
            d = inclusion_flags(out[int(i)], [S], c.grid)
            assert not needs_split(d)

    def test_depth_cap_warns(self):
        with pytest.warns(SplitDepthWarning):
            out, info = split_for_fov(std_gm(), cfg(max_depth=1, w_min=1e-6), Disc([0.3, 0], 1.0),
                                      return_info=True)
        assert info.hit_max_depth and info.n_unresolved > 0
        assert out.total_weight == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(0, 2 ** 31))
    def test_conservation(self, seed):
        r = np.random.default_rng(seed)
        gm = random_mixture(r, int(r.integers(1, 4)))
        S = Disc(r.normal(0, 1.5, 2), r.uniform(0.5, 3))
        out = split_for_fov(gm, cfg(R=3), S)
        assert abs(out.total_weight - gm.total_weight) <= 1e-12
        np.testing.assert_allclose(mixture_moments(out)[0], mixture_moments(gm)[0], atol=1e-9)

    def test_invalid_config(self):
        for bad in (dict(w_min=0.0), dict(w_min=1.0), dict(max_depth=0)):
            with pytest.raises(ValueError):
                SplitConfig(**bad)

    def test_region_dimension_checked(self):
        with pytest.raises(ValueError):
            split_for_fov(std_gm(), cfg(), Disc([0, 0, 0], 1.0))


class TestMulti:
    def test_single_region_equals_split_for_fov(self, rng):
        gm = random_mixture(rng)
        S = Disc([0.0, 0.0], 1.5)
        assert_same_mixture(split_for_multifov(gm, cfg(), [S]), split_for_fov(gm, cfg(), S), 0)

    def test_complement_adds_nothing(self, rng):
        gm = random_mixture(rng)
        S = Union([Disc([0.0, 0.0], 1.5), Box([1, 1], [3, 2])])
        a = split_for_multifov(gm, cfg(R=3), [S, Complement(S)])
        b = split_for_fov(gm, cfg(R=3), S)
        assert_same_mixture(a, b, 0)

    def test_two_disjoint_discs_order(self, rng):
        gm = random_mixture(rng)
        A, B = Disc([-1.0, 0.0], 0.8), Disc([1.5, 0.5], 1.0)
        assert_same_mixture(split_for_multifov(gm, cfg(R=3), [A, B]),
                            split_for_multifov(gm, cfg(R=3), [B, A]), 1e-12)

    def test_empty_region_list(self):
        with pytest.raises(ValueError):
            split_for_multifov(std_gm(), cfg(), [])

    def test_empty_mixture(self):
        out = split_for_multifov(GaussianMixture.empty(2), cfg(), [HALF])
        assert len(out) == 0


class TestPartition:
    def test_all_inside(self, rng):
        gm = random_mixture(rng)
        inside, outside = partition(gm, whole_space(2))
        assert len(inside) == len(gm) and len(outside) == 0

    def test_boundary_mean_is_inside(self):
        inside, outside = partition(std_gm(), HALF)
        assert len(inside) == 1 and len(outside) == 0

    def test_reproduces_input(self, rng):
        gm = random_mixture(rng, 8)
        S = Disc([0, 0], 2.0)
        inside, outside = partition(gm, S)
        mask = S.contains(gm.position_means)
        np.testing.assert_array_equal(inside.w, gm.w[mask])
        np.testing.assert_array_equal(outside.m, gm.m[~mask])
        assert len(inside) + len(outside) == len(gm)

    def test_empty_region(self, rng):
        gm = random_mixture(rng)
        inside, _ = partition(gm, empty_region(2))
        assert len(inside) == 0

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slope_lab import (
    WeightVector,
    dual_sorted_l1_norm,
    isotonic_regression_nonincreasing,
    project_dual_ball,
    prox_gamma_derivative,
    prox_sorted_l1,
    prox_sorted_l1_value,
    sorted_l1_norm,
)
from slope_lab.rng import make_rng

from _oracles import (
    dual_norm_ref,
    isotonic_block_oracle,
    prox_subgradient_oracle,
    slope_objective_batch,
    sorted_l1_norm_permutation_oracle,
)


def random_weights(rng, p, allow_zero_tail=True):
    w = np.sort(rng.uniform(0.0, 2.0, p))[::-1]
    if allow_zero_tail and p > 2 and rng.uniform() < 0.2:
        w[-(p // 3):] = 0.0
    return WeightVector(w)


class TestWeightVector:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            WeightVector(np.array([1.0, -0.1]))

    def test_rejects_increasing_pair(self):
        with pytest.raises(ValueError):
            WeightVector(np.array([1.0, 0.5, 0.6]))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            WeightVector(np.array([np.inf, 1.0]))

    def test_normalized_max_is_one(self):
        w = WeightVector(np.array([4.0, 2.0, 0.0])).normalized()
        assert w.weights[0] == 1.0
        assert w.p == 3

    def test_scaling_composes_with_gamma(self):
        # gamma * ||v||_w is unchanged under (w, gamma) -> (t w, gamma / t)
        rng = make_rng(11)
        for _ in range(50):
            p = rng.integers(2, 9)
            w = random_weights(rng, p)
            v = rng.standard_normal(p)
            t = rng.uniform(0.1, 10.0)
            lhs = 2.0 * sorted_l1_norm(v, w)
            rhs = (2.0 / t) * sorted_l1_norm(v, WeightVector(t * w.weights))
            assert lhs == pytest.approx(rhs, rel=1e-12)


class TestSortedL1Norm:
    def test_zero_vector(self):
        assert sorted_l1_norm([0.0, 0.0, 0.0], [1.0, 0.5, 0.2]) == 0.0

    def test_equal_weights_is_l1(self):
        assert sorted_l1_norm([-3.0, 1.0], [1.0, 1.0]) == 4.0

    def test_sort_and_dot(self):
        assert sorted_l1_norm([1.0, -3.0], [2.0, 0.5]) == pytest.approx(6.5)

    def test_matches_permutation_oracle(self):
        rng = make_rng(3)
        for _ in range(30):
            p = rng.integers(2, 7)
            w = random_weights(rng, p)
            v = rng.standard_normal(p) * 3
            assert sorted_l1_norm(v, w) == pytest.approx(
                sorted_l1_norm_permutation_oracle(v, w.weights), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            sorted_l1_norm([1.0, 2.0, 3.0], [1.0, 0.5])

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8),
           st.lists(st.floats(-50, 50), min_size=2, max_size=8))
    @settings(max_examples=150, deadline=None)
    def test_triangle_inequality(self, a, b):
        p = min(len(a), len(b))
        u, v = np.array(a[:p]), np.array(b[:p])
        w = WeightVector(np.linspace(1.0, 0.1, p))
        assert sorted_l1_norm(u + v, w) <= (
            sorted_l1_norm(u, w) + sorted_l1_norm(v, w) + 1e-9)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8),
           st.floats(-4, 4))
    @settings(max_examples=150, deadline=None)
    def test_absolute_homogeneity(self, a, t):
        v = np.array(a)
        w = WeightVector(np.linspace(1.0, 0.1, v.size))
        assert sorted_l1_norm(t * v, w) == pytest.approx(
            abs(t) * sorted_l1_norm(v, w), rel=1e-10, abs=1e-9)


class TestDualNorm:
    def test_weights_have_unit_dual_norm(self):
        rng = make_rng(5)
        for _ in range(20):
            p = rng.integers(2, 20)
            w = random_weights(rng, p, allow_zero_tail=False)
            assert dual_sorted_l1_norm(w.weights, w) == pytest.approx(1.0)

    def test_hand_enumeration(self):
        assert dual_sorted_l1_norm([3.0, 1.0], [2.0, 1.0]) == pytest.approx(1.5)

    def test_zero_vector(self):
        assert dual_sorted_l1_norm(np.zeros(4), np.ones(4)) == 0.0

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ValueError):
            dual_sorted_l1_norm([1.0, 2.0], [0.0, 0.0])

    def test_matches_reference(self):
        rng = make_rng(8)
        for _ in range(50):
            p = rng.integers(2, 12)
            w = random_weights(rng, p)
            v = rng.standard_normal(p) * 2
            assert dual_sorted_l1_norm(v, w) == pytest.approx(
                dual_norm_ref(v, w.weights), rel=1e-12)

    def test_membership_iff_projection_fixed_point(self):
        rng = make_rng(9)
        for _ in range(50):
            p = rng.integers(2, 10)
            w = random_weights(rng, p, allow_zero_tail=False)
            v = rng.standard_normal(p)
            gamma = rng.uniform(0.2, 2.0)
            inside = dual_sorted_l1_norm(v, w) <= gamma
            proj = project_dual_ball(v, gamma, w)
            if inside:
                np.testing.assert_allclose(proj, v, atol=1e-12)
            else:
                assert np.linalg.norm(proj - v) > 1e-9


class TestIsotonic:
    def test_already_monotone(self):
        np.testing.assert_array_equal(
            isotonic_regression_nonincreasing([3.0, 2.0, 1.0]), [3.0, 2.0, 1.0])

    def test_two_point_pool_is_mean(self):
        np.testing.assert_allclose(
            isotonic_regression_nonincreasing([1.0, 3.0]), [2.0, 2.0])

    def test_matches_block_enumeration_oracle(self):
        rng = make_rng(21)
        for _ in range(40):
            p = rng.integers(2, 7)
            a = rng.standard_normal(p) * 2
            np.testing.assert_allclose(
                isotonic_regression_nonincreasing(a), isotonic_block_oracle(a),
                atol=1e-10)

    def test_block_values_are_pooled_means(self):
        rng = make_rng(22)
        a = rng.standard_normal(40)
        b = isotonic_regression_nonincreasing(a)
        assert np.all(np.diff(b) <= 1e-12)
        # pooled means: each maximal constant run averages its inputs
        starts = [0] + [i for i in range(1, 40) if b[i] != b[i - 1]] + [40]
        for lo, hi in zip(starts[:-1], starts[1:]):
            assert b[lo] == pytest.approx(a[lo:hi].mean(), rel=1e-12, abs=1e-12)


class TestProx:
    def test_gamma_zero_identity(self):
        u = np.array([3.0, -1.0, 0.5])
        res = prox_sorted_l1(u, 0.0, [1.0, 1.0, 1.0])
        np.testing.assert_array_equal(res.eta, u)

    def test_equal_weights_soft_threshold(self):
        res = prox_sorted_l1(np.array([3.0, -1.0, 0.5]), 1.0, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(res.eta, [2.0, 0.0, 0.0], atol=1e-15)

    def test_tie_group_average(self):
        res = prox_sorted_l1(np.array([2.0, 2.0]), 1.0, [1.5, 0.5])
        np.testing.assert_allclose(res.eta, [1.0, 1.0])
        assert len(res.active_groups) == 1
        assert sorted(res.active_groups[0].tolist()) == [0, 1]

    def test_groups_partition_all_indices(self):
        rng = make_rng(31)
        for _ in range(100):
            p = rng.integers(2, 30)
            w = random_weights(rng, p)
            u = rng.standard_normal(p) * 3
            res = prox_sorted_l1(u, rng.uniform(0, 2), w)
            all_idx = np.sort(np.concatenate([g for g in res.groups]))
            np.testing.assert_array_equal(all_idx, np.arange(p))
            for g in res.groups:
                mags = np.abs(res.eta[g])
                assert np.all(mags == mags[0])
            for g in res.active_groups:
                assert np.all(np.abs(res.eta[g]) > 0)

    def test_sorted_magnitudes_nonincreasing(self):
        rng = make_rng(32)
        for _ in range(100):
            p = rng.integers(2, 30)
            w = random_weights(rng, p)
            u = rng.standard_normal(p) * 3
            res = prox_sorted_l1(u, rng.uniform(0, 2), w)
            mags = np.abs(res.eta[res.permutation])
            assert np.all(np.diff(mags) <= 1e-12)

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            prox_sorted_l1(np.ones(3), -0.5, np.ones(3))

    def test_permutation_consistency_under_shuffle(self):
        # exact ties broken by stable sort; the value must not care
        rng = make_rng(33)
        u = np.array([2.0, -2.0, 2.0, 1.0, -1.0])
        w = WeightVector(np.array([1.5, 1.0, 0.75, 0.5, 0.25]))
        base = prox_sorted_l1(u, 0.8, w).eta
        for _ in range(20):
            perm = rng.permutation(5)
            out = prox_sorted_l1(u[perm], 0.8, w).eta
            np.testing.assert_allclose(out, base[perm], atol=1e-14)

    def test_matches_subgradient_oracle_small(self):
        rng = make_rng(34)
        B, p = 40, 5
        U = rng.standard_normal((B, p)) * 2
        W = np.sort(rng.uniform(0.05, 1.5, p))[::-1]
        gammas = rng.uniform(0.1, 2.0, B)
        f_oracle, gap = prox_subgradient_oracle(U, W, gammas, max_steps=30000,
                                                target_gap=1e-11)
        # the oracle certifies its own distance to the optimum ...
        assert np.all(gap <= 1e-3)
        for b in range(B):
            eta = prox_sorted_l1_value(U[b], gammas[b], W)
            f_fast = slope_objective_batch(eta[None, :], U[b][None, :], W,
                                           gammas[b:b + 1])[0]
            # ... and the fast prox must do at least as well
            assert f_fast <= f_oracle[b] + 1e-9
            assert f_fast >= f_oracle[b] - gap[b] - 1e-12

    def test_fast_path_matches_full_result(self):
        rng = make_rng(35)
        for _ in range(50):
            p = rng.integers(2, 40)
            w = random_weights(rng, p)
            u = rng.standard_normal(p) * 4
            g = rng.uniform(0, 3)
            np.testing.assert_array_equal(prox_sorted_l1_value(u, g, w),
                                          prox_sorted_l1(u, g, w).eta)


class TestProxProperties:
    """Randomized checks of the prox identities (larger runs live in the
    acceptance suite)."""

    def setup_method(self):
        self.rng = make_rng(55)

    def _draw(self):
        p = self.rng.integers(2, 25)
        w = random_weights(self.rng, p)
        u = self.rng.standard_normal(p) * 3
        gamma = self.rng.uniform(0.05, 2.5)
        return u, gamma, w

    def test_scaling(self):
        for _ in range(100):
            u, gamma, w = self._draw()
            t = self.rng.uniform(0, 3)
            lhs = prox_sorted_l1_value(t * u, t * gamma, w)
            rhs = t * prox_sorted_l1_value(u, gamma, w)
            np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_componentwise_shrinkage_in_sorted_form(self):
        for _ in range(100):
            u, gamma, w = self._draw()
            u = np.sort(np.abs(u))[::-1]
            eta = prox_sorted_l1_value(u, gamma, w)
            assert np.all(eta <= u + 1e-12)
            assert np.all(np.diff(eta) <= 1e-12)
            assert np.all(eta >= -1e-12)

    def test_nonexpansive(self):
        for _ in range(100):
            u, gamma, w = self._draw()
            v = u + self.rng.standard_normal(u.size)
            d = np.linalg.norm(prox_sorted_l1_value(u, gamma, w)
                               - prox_sorted_l1_value(v, gamma, w))
            assert d <= np.linalg.norm(u - v) * (1 + 1e-10) + 1e-12

    def test_strong_duality_identity(self):
        for _ in range(100):
            u, gamma, w = self._draw()
            eta = prox_sorted_l1_value(u, gamma, w)
            lhs = 0.5 * np.sum((u - eta) ** 2) + gamma * sorted_l1_norm(eta, w)
            rhs = 0.5 * (np.sum(u ** 2) - np.sum(eta ** 2))
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    def test_lipschitz_in_gamma(self):
        for _ in range(100):
            u, g1, w = self._draw()
            g2 = self.rng.uniform(0.05, 2.5)
            d = np.linalg.norm(prox_sorted_l1_value(u, g1, w)
                               - prox_sorted_l1_value(u, g2, w))
            assert d <= np.linalg.norm(w.weights) * abs(g1 - g2) + 1e-12

    def test_norm_monotone_in_gamma(self):
        for _ in range(50):
            u, _, w = self._draw()
            norms = [np.linalg.norm(prox_sorted_l1_value(u, g, w))
                     for g in np.linspace(0, 3, 12)]
            assert np.all(np.diff(norms) <= 1e-12)

    def test_l1_comparison_bound(self):
        # holds for weight sequences with top weight at most one
        for _ in range(100):
            u, gamma, w = self._draw()
            if w.weights[0] == 0.0:
                continue
            w = w.normalized()
            p = u.size
            flat = WeightVector(np.full(p, np.sum(w.weights ** 2) / p))
            assert (np.linalg.norm(prox_sorted_l1_value(u, gamma, w))
                    <= np.linalg.norm(prox_sorted_l1_value(u, gamma, flat)) + 1e-12)

    def test_componentwise_weight_monotonicity(self):
        for _ in range(100):
            u, gamma, w2 = self._draw()
            bump = np.sort(self.rng.uniform(0, 1, u.size))[::-1]
            w1 = WeightVector(w2.weights + bump)
            e1 = prox_sorted_l1_value(u, gamma, w1)
            e2 = prox_sorted_l1_value(u, gamma, w2)
            assert np.all(np.abs(e1) <= np.abs(e2) + 1e-12)

    def test_dual_ball_projection_norm_bound(self):
        for _ in range(100):
            u, gamma, w = self._draw()
            proj = project_dual_ball(u, gamma, w)
            assert np.linalg.norm(proj) <= gamma * np.linalg.norm(w.weights) + 1e-10
            assert dual_sorted_l1_norm(proj, w) <= gamma * (1 + 1e-9) + 1e-12


class TestProxGammaDerivative:
    def test_soft_threshold_slope(self):
        d = prox_gamma_derivative(np.array([3.0, 2.0]), 1.0, [1.0, 1.0])
        np.testing.assert_allclose(d, [-1.0, -1.0])

    def test_zero_coordinates_get_zero(self):
        d = prox_gamma_derivative(np.array([3.0, 0.1]), 1.0, [1.0, 1.0])
        assert d[1] == 0.0

    def test_sign_convention(self):
        d = prox_gamma_derivative(np.array([-3.0, 2.0]), 0.5, [1.0, 0.5])
        assert d[0] > 0 and d[1] < 0

    def test_matches_finite_difference(self):
        rng = make_rng(77)
        checked = 0
        for _ in range(200):
            p = rng.integers(2, 12)
            w = random_weights(rng, p)
            u = rng.standard_normal(p) * 3
            gamma = rng.uniform(0.2, 1.5)
            h = 1e-6
            fd = (prox_sorted_l1_value(u, gamma + h, w)
                  - prox_sorted_l1_value(u, gamma - h, w)) / (2 * h)
            d = prox_gamma_derivative(u, gamma, w)
            if np.max(np.abs(fd - d)) < 1e-4:
                checked += 1
        # generic points are differentiable; allow a few kink hits
        assert checked >= 190

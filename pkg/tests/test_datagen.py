import numpy as np
import pytest
import scipy.special

from slope_lab import (
    DesignSpec,
    SignalSpec,
    WeightSpec,
    gen_design,
    gen_noise,
    gen_signal,
    gen_weights,
    norm_quantile,
)


class TestDesignSpec:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            DesignSpec(kind="wishart", n=10, p=10)

    def test_rho_range(self):
        with pytest.raises(ValueError):
            DesignSpec(kind="correlated", n=10, p=10, rho=1.0)

    def test_df_must_give_finite_variance(self):
        with pytest.raises(ValueError):
            DesignSpec(kind="heavy-tail", n=10, p=10, df=2)


class TestGenDesign:
    def test_deterministic(self):
        spec = DesignSpec(kind="correlated-heavy-tail", n=30, p=20, rho=0.5)
        np.testing.assert_array_equal(gen_design(spec, seed=4),
                                      gen_design(spec, seed=4))
        assert not np.array_equal(gen_design(spec, seed=4),
                                  gen_design(spec, seed=5))

    def test_column_norms_concentrate(self):
        spec = DesignSpec(kind="iid-gaussian", n=500, p=200)
        A = gen_design(spec, seed=1)
        col_sq = np.sum(A * A, axis=0)
        assert 0.9 <= col_sq.mean() <= 1.1

    def test_heavy_tail_entry_variance(self):
        spec = DesignSpec(kind="heavy-tail", n=1000, p=1000, df=3)
        A = gen_design(spec, seed=2)
        v = np.var(A) * spec.n
        assert abs(v - 1.0) <= 0.2

    def test_lag_one_column_correlation(self):
        spec = DesignSpec(kind="correlated", n=400, p=500, rho=0.8)
        A = gen_design(spec, seed=3)
        c = np.mean(np.sum(A[:, :-1] * A[:, 1:], axis=0)
                    / np.sqrt(np.sum(A[:, :-1]**2, axis=0)
                              * np.sum(A[:, 1:]**2, axis=0)))
        assert abs(c - 0.8) <= 0.05

    def test_covariance_corner(self):
        # with entry variance 1/n, E[A^T A] equals the correlation matrix
        spec = DesignSpec(kind="correlated", n=2000, p=40, rho=0.6)
        A = gen_design(spec, seed=5)
        emp = A.T @ A
        idx = np.arange(10)
        want = 0.6 ** np.abs(idx[:, None] - idx[None, :])
        np.testing.assert_allclose(emp[:10, :10], want, atol=0.05)


class TestGenSignal:
    def test_exact_support_size(self):
        for eps in (0.1, 0.3, 0.77, 1.0):
            spec = SignalSpec(kind="uniform-nonzero", p=200, epsilon=eps)
            x = gen_signal(spec, seed=0)
            assert np.count_nonzero(x) == round(eps * 200)

    def test_dense_when_eps_one(self):
        x = gen_signal(SignalSpec(kind="uniform-nonzero", p=50, epsilon=1.0),
                       seed=1)
        assert np.count_nonzero(x) == 50

    def test_constant_kind_exactly_amplitude(self):
        x = gen_signal(SignalSpec(kind="constant-nonzero", p=100, epsilon=0.7,
                                  amplitude=5.0), seed=2)
        nz = x[x != 0]
        assert np.all(nz == 5.0)

    def test_uniform_values_distinct(self):
        x = gen_signal(SignalSpec(kind="uniform-nonzero", p=300, epsilon=0.5),
                       seed=3)
        nz = x[x != 0]
        assert np.unique(nz).size == nz.size

    def test_rounds_to_zero_rejected(self):
        with pytest.raises(ValueError):
            SignalSpec(kind="uniform-nonzero", p=3, epsilon=0.1)

    def test_deterministic(self):
        spec = SignalSpec(kind="bernoulli-scaled", p=64, epsilon=0.25)
        np.testing.assert_array_equal(gen_signal(spec, seed=9),
                                      gen_signal(spec, seed=9))


class TestGenNoise:
    def test_zero_sigma_exact_zeros(self):
        np.testing.assert_array_equal(gen_noise(10, 0.0, seed=1), np.zeros(10))

    def test_scale(self):
        z = gen_noise(20000, 2.5, seed=2)
        assert abs(np.std(z) - 2.5) < 0.1


class TestNormQuantile:
    def test_against_scipy(self):
        # quadrature-grade oracle: scipy's ndtri
        for prob in np.concatenate([np.linspace(1e-8, 1 - 1e-8, 41),
                                    [1e-12, 0.5, 1 - 1e-12]]):
            ours = norm_quantile(float(prob))
            ref = float(scipy.special.ndtri(prob))
            assert abs(ours - ref) <= 1e-9 * max(1.0, abs(ref))

    def test_domain(self):
        for bad in (0.0, 1.0, -0.3, 1.5):
            with pytest.raises(ValueError):
                norm_quantile(bad)


class TestGenWeights:
    def test_constant(self):
        w = gen_weights(WeightSpec(kind="constant", p=5))
        np.testing.assert_array_equal(w.weights, np.ones(5))

    def test_max2(self):
        w = gen_weights(WeightSpec(kind="max2", p=5))
        np.testing.assert_array_equal(w.weights, [1.0, 1.0, 0.0, 0.0, 0.0])

    def test_equispaced_endpoints(self):
        w = gen_weights(WeightSpec(kind="equispaced", p=100))
        assert w.weights[0] == 1.0
        assert w.weights[-1] == pytest.approx(0.01)
        steps = np.diff(w.weights)
        np.testing.assert_allclose(steps, steps[0])

    def test_linear_uniform_formula(self):
        p = 50
        w = gen_weights(WeightSpec(kind="linear-uniform", p=p))
        want = 1.0 - 0.99 * np.arange(p) / p
        np.testing.assert_allclose(w.weights, want)

    def test_bh_normalized_and_decreasing(self):
        w = gen_weights(WeightSpec(kind="bh", p=1000, q_bh=0.5))
        assert w.weights[0] == pytest.approx(1.0)
        assert np.all(np.diff(w.weights) < 0)

    def test_bh_values_against_scipy(self):
        p, q = 256, 0.5
        w = gen_weights(WeightSpec(kind="bh", p=p, q_bh=q))
        i = np.arange(1, p + 1)
        ref = scipy.special.ndtri(1 - i * q / (2 * p))
        ref = ref / ref[0]
        np.testing.assert_allclose(w.weights, ref, atol=1e-9)

    def test_bh_q_domain(self):
        with pytest.raises(ValueError):
            WeightSpec(kind="bh", p=10, q_bh=1.0)

    def test_custom_length_checked(self):
        with pytest.raises(ValueError):
            gen_weights(WeightSpec(kind="custom", p=3, values=(1.0, 0.5)))

    def test_all_kinds_valid_and_normalizable(self):
        for kind in ("constant", "linear-uniform", "bh", "max2", "equispaced"):
            w = gen_weights(WeightSpec(kind=kind, p=40))
            assert w.p == 40
            assert w.normalized().weights[0] == 1.0

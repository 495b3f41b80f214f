import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stonet.numerics import (
    RngStream,
    generalized_gaussian_variance,
    sample_gaussian_vec,
    sample_generalized_gaussian,
    standardize_columns,
    sym_eig,
)


class TestRngStream:
    def test_equal_key_equal_sequence(self):
        a = RngStream(123, 7).generator().normal(size=100)
        b = RngStream(123, 7).generator().normal(size=100)
        assert np.array_equal(a, b)

    def test_distinct_stream_ids_differ(self):
        a = RngStream(123, 7).generator().normal(size=100)
        b = RngStream(123, 8).generator().normal(size=100)
        assert not np.array_equal(a, b)

    def test_child_derivation_is_stable_and_order_independent(self):
        s = RngStream(55)
        first = [s.child(i).stream_id for i in range(5)]
        second = [s.child(i).stream_id for i in reversed(range(5))][::-1]
        assert first == second
        assert len(set(first)) == 5

    def test_children_independent_of_parent(self):
        s = RngStream(55)
        parent = s.generator().normal(size=50)
        child = s.child(0).generator().normal(size=50)
        assert not np.array_equal(parent, child)


class TestGaussianSampler:
    def test_moments_over_one_million_draws(self):
        draws = sample_gaussian_vec(RngStream(2024, 1), 1_000_000, 1.0)
        assert abs(draws.mean()) < 4e-3
        assert abs(draws.var() - 1.0) < 0.01

    def test_determinism(self):
        a = sample_gaussian_vec(RngStream(9, 3), 16, 0.5)
        b = sample_gaussian_vec(RngStream(9, 3), 16, 0.5)
        assert np.array_equal(a, b)

    def test_zero_dim_rejected(self):
        with pytest.raises(ValueError):
            sample_gaussian_vec(RngStream(1), 0, 1.0)

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(ValueError):
            sample_gaussian_vec(RngStream(1), 3, 0.0)
        with pytest.raises(ValueError):
            sample_gaussian_vec(RngStream(1), 3, -1.0)


class TestGeneralizedGaussian:
    def test_shape_two_reduces_to_gaussian(self):
        sigma = 0.7
        draws = sample_generalized_gaussian(
            RngStream(11, 2), np.sqrt(2.0) * sigma, 2.0, size=1_000_000
        )
        assert abs(draws.var() / sigma**2 - 1.0) < 0.01

    def test_heavy_tail_variance_matches_moment_formula(self):
        # Independent oracle: integrate the density numerically and compare
        # with the closed-form Gamma-moment value.
        from scipy.integrate import quad

        scale, shape = np.sqrt(0.5), 0.5
        norm_const, _ = quad(
            lambda x: np.exp(-((abs(x) / scale) ** shape)), -np.inf, np.inf
        )
        second_moment, _ = quad(
            lambda x: x * x * np.exp(-((abs(x) / scale) ** shape)),
            -np.inf,
            np.inf,
            limit=200,
        )
        oracle_var = second_moment / norm_const
        assert oracle_var == pytest.approx(60.0, rel=1e-6)
        assert generalized_gaussian_variance(scale, shape) == pytest.approx(60.0)

        draws = sample_generalized_gaussian(
            RngStream(12, 4), scale, shape, size=1_000_000
        )
        assert abs(draws.var() / 60.0 - 1.0) < 0.03

    def test_symmetry(self):
        draws = sample_generalized_gaussian(
            RngStream(13, 5), np.sqrt(0.5), 0.5, size=1_000_000
        )
        se = draws.std() / np.sqrt(draws.size)
        assert abs(draws.mean()) < 4.0 * se
        # Sign balance is a second symmetry check immune to the heavy tail.
        assert abs(np.mean(draws > 0) - 0.5) < 2e-3

    def test_scalar_return_and_validation(self):
        x = sample_generalized_gaussian(RngStream(1), 1.0, 1.0)
        assert isinstance(x, float)
        with pytest.raises(ValueError):
            sample_generalized_gaussian(RngStream(1), 0.0, 1.0)
        with pytest.raises(ValueError):
            sample_generalized_gaussian(RngStream(1), 1.0, -0.5)


class TestStandardization:
    def test_three_point_column_population_convention(self):
        Z, stats = standardize_columns(np.array([[1.0], [2.0], [3.0]]))
        # population std of [1,2,3] is sqrt(2/3)
        expected = np.array([-1.0, 0.0, 1.0]) / np.sqrt(2.0 / 3.0)
        np.testing.assert_allclose(Z[:, 0], expected, atol=1e-12)
        assert stats.means[0] == pytest.approx(2.0)
        assert stats.std_devs[0] == pytest.approx(np.sqrt(2.0 / 3.0))

    def test_constant_column_maps_to_zero_with_unit_scale(self):
        Z, stats = standardize_columns(np.array([[5.0], [5.0], [5.0]]))
        np.testing.assert_array_equal(Z, np.zeros((3, 1)))
        assert stats.std_devs[0] == 1.0

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 6)) * rng.uniform(0.1, 30, size=6)
        X[:, 2] = 4.0
        Z, stats = standardize_columns(X)
        back = stats.invert(Z)
        np.testing.assert_allclose(back, X, rtol=1e-12, atol=1e-12)

    def test_too_few_rows_rejected(self):
        with pytest.raises(ValueError):
            standardize_columns(np.array([[1.0, 2.0]]))

    @settings(max_examples=30, deadline=None)
    @given(
        n=st.integers(3, 40),
        p=st.integers(1, 6),
        seed=st.integers(0, 10_000),
    )
    def test_output_moments_property(self, n, p, seed):
        X = np.random.default_rng(seed).normal(size=(n, p)) * 3.0 + 1.0
        Z, _ = standardize_columns(X)
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(Z.std(axis=0), 1.0, atol=1e-10)


class TestSymEig:
    def test_identity(self):
        w, V = sym_eig(np.eye(3))
        np.testing.assert_allclose(w, np.ones(3))
        np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-12)

    def test_diagonal_ordering_and_axes(self):
        w, V = sym_eig(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(w, [3.0, 2.0, 1.0])
        # Axis-aligned eigenvectors up to sign.
        np.testing.assert_allclose(np.abs(V), np.eye(3)[:, [0, 2, 1]], atol=1e-12)

    def test_reconstruction_random(self):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(5, 5))
        A = (A + A.T) / 2
        w, V = sym_eig(A)
        recon = V @ np.diag(w) @ V.T
        assert np.linalg.norm(recon - A) / np.linalg.norm(A) < 1e-10

    def test_asymmetric_rejected(self):
        A = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(ValueError):
            sym_eig(A)

    @pytest.mark.parametrize("m", [10, 50])
    def test_orthonormality_and_residual_up_to_m50(self, m):
        rng = np.random.default_rng(m)
        A = rng.normal(size=(m, m))
        A = (A + A.T) / 2
        w, V = sym_eig(A)
        np.testing.assert_allclose(V.T @ V, np.eye(m), atol=1e-10)
        assert np.linalg.norm(A @ V - V * w) <= 1e-8 * np.linalg.norm(A)
        assert np.all(np.diff(w) <= 1e-12)


class TestStandardizationSerialization:
    def test_dict_round_trip(self):
        X = np.random.default_rng(9).normal(size=(20, 4))
        X[:, 1] = 7.0
        Z, stats = standardize_columns(X)
        from stonet.numerics import StandardizationStats

        back = StandardizationStats.from_dict(stats.to_dict())
        np.testing.assert_array_equal(back.apply(X), Z)
        np.testing.assert_allclose(back.invert(Z), X, atol=1e-12)

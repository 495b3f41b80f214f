import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stonet.model import (
    NetworkSpec,
    Theta,
    activation_derivative,
    apply_activation,
    forward_dnn,
    forward_stonet_sample,
    init_theta,
    load_theta,
    save_theta,
    validate_noise_schedule,
)
from stonet.numerics import RngStream


def small_spec(**overrides):
    kw = dict(
        widths=(2, 3, 1),
        activation="tanh",
        task="regression",
        noise_vars=(1e-4, 1e-2),
    )
    kw.update(overrides)
    return NetworkSpec(**kw)


class TestNetworkSpec:
    def test_rejects_missing_hidden_layer(self):
        with pytest.raises(ValueError):
            NetworkSpec(widths=(3, 1), noise_vars=(0.1,))

    def test_rejects_wrong_noise_length(self):
        with pytest.raises(ValueError):
            NetworkSpec(widths=(3, 2, 1), noise_vars=(0.1,))

    def test_rejects_nonpositive_noise(self):
        with pytest.raises(ValueError):
            NetworkSpec(widths=(3, 2, 1), noise_vars=(0.1, 0.0))

    def test_dict_round_trip(self):
        spec = small_spec()
        assert NetworkSpec.from_dict(spec.to_dict()) == spec


class TestInitTheta:
    def test_shapes(self):
        theta = init_theta(small_spec(), RngStream(0))
        assert theta.weights[0].shape == (3, 2)
        assert theta.weights[1].shape == (1, 3)
        assert theta.biases[0].shape == (3,)
        assert theta.biases[1].shape == (1,)

    def test_uniform_bound_is_inverse_sqrt_fan_in(self):
        theta = init_theta(small_spec(), RngStream(1))
        assert np.all(np.abs(theta.weights[0]) <= 1.0 / np.sqrt(2))
        assert np.all(np.abs(theta.weights[1]) <= 1.0 / np.sqrt(3))
        assert np.all(theta.biases[0] == 0.0)

    def test_determinism(self):
        a = init_theta(small_spec(), RngStream(7, 3))
        b = init_theta(small_spec(), RngStream(7, 3))
        assert a == b


class TestForwardDnn:
    def test_zero_network_fixes_zero(self):
        spec = small_spec()
        theta = Theta(
            [np.zeros((3, 2)), np.zeros((1, 3))], [np.zeros(3), np.zeros(1)]
        )
        trace = forward_dnn(spec, theta, np.array([0.3, -0.8]))
        assert np.all(trace.tilde_y[0] == 0.0)
        assert np.all(trace.output_mean == 0.0)

    def test_first_layer_is_affine_in_raw_input(self):
        spec = NetworkSpec(
            widths=(2, 2, 1), activation="tanh", noise_vars=(1e-4, 1e-2)
        )
        theta = Theta(
            [np.eye(2), np.zeros((1, 2))], [np.zeros(2), np.zeros(1)]
        )
        x = np.array([0.05, -0.02])
        trace = forward_dnn(spec, theta, x)
        np.testing.assert_allclose(trace.tilde_y[0], x, atol=0)

    def test_matches_independent_reimplementation(self):
        rng = np.random.default_rng(5)
        spec = NetworkSpec(
            widths=(4, 5, 3, 2),
            activation="tanh",
            noise_vars=(0.1, 0.1, 0.1),
        )
        theta = init_theta(spec, RngStream(5))
        x = rng.normal(size=4)
        trace = forward_dnn(spec, theta, x)

        # Straight-line duplicate, no loops or shared helpers.
        t1 = theta.biases[0] + theta.weights[0] @ x
        t2 = theta.biases[1] + theta.weights[1] @ np.tanh(t1)
        out = theta.biases[2] + theta.weights[2] @ np.tanh(t2)
        np.testing.assert_allclose(trace.tilde_y[0], t1, atol=1e-12)
        np.testing.assert_allclose(trace.tilde_y[1], t2, atol=1e-12)
        np.testing.assert_allclose(trace.output_mean, out, atol=1e-12)

    def test_batch_matches_single(self):
        spec = small_spec()
        theta = init_theta(spec, RngStream(2))
        X = np.random.default_rng(0).normal(size=(6, 2))
        batched = forward_dnn(spec, theta, X)
        for i in range(6):
            single = forward_dnn(spec, theta, X[i])
            np.testing.assert_allclose(batched.tilde_y[0][i], single.tilde_y[0])
            np.testing.assert_allclose(batched.output_mean[i], single.output_mean)

    def test_shape_mismatch_rejected(self):
        spec = small_spec()
        theta = init_theta(spec, RngStream(2))
        with pytest.raises(ValueError):
            forward_dnn(spec, theta, np.zeros(5))


class TestForwardStonetSample:
    def test_zero_noise_limit_recovers_trace(self):
        spec = small_spec(noise_vars=(1e-12, 1e-12))
        theta = init_theta(spec, RngStream(3))
        x = np.array([0.4, 1.1])
        trace = forward_dnn(spec, theta, x)
        latents, out = forward_stonet_sample(spec, theta, x, RngStream(4))
        np.testing.assert_allclose(latents[0], trace.tilde_y[0], atol=1e-4)
        np.testing.assert_allclose(out, trace.output_mean, atol=1e-4)

    def test_first_layer_noise_variance(self):
        spec = small_spec(noise_vars=(0.04, 1e-8))
        theta = init_theta(spec, RngStream(6))
        n = 100_000
        X = np.tile(np.array([0.4, 1.1]), (n, 1))
        trace = forward_dnn(spec, theta, X)
        latents, _ = forward_stonet_sample(spec, theta, X, RngStream(8))
        noise = latents[0] - trace.tilde_y[0]
        assert abs(noise.var() / 0.04 - 1.0) < 0.02

    def test_determinism(self):
        spec = small_spec()
        theta = init_theta(spec, RngStream(3))
        x = np.array([0.4, 1.1])
        a = forward_stonet_sample(spec, theta, x, RngStream(9, 1))
        b = forward_stonet_sample(spec, theta, x, RngStream(9, 1))
        np.testing.assert_array_equal(a[0][0], b[0][0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_classification_output_is_label(self):
        spec = NetworkSpec(
            widths=(2, 3, 4),
            activation="tanh",
            task="classification",
            noise_vars=(1e-3, 1.0),
        )
        theta = init_theta(spec, RngStream(10))
        X = np.random.default_rng(1).normal(size=(50, 2))
        _, out = forward_stonet_sample(spec, theta, X, RngStream(11))
        assert out.dtype == np.int64
        assert out.min() >= 0 and out.max() <= 3


class TestNoiseSchedule:
    def test_amplification_two_hidden_layers(self):
        spec = NetworkSpec(
            widths=(7, 3, 4, 1), noise_vars=(1e-4, 1e-4, 1e-4)
        )
        report = validate_noise_schedule(spec)
        assert report.amplification == (48, 4)

    def test_amplification_empty_product(self):
        spec = NetworkSpec(widths=(7, 5, 1), noise_vars=(1e-4, 1e-4))
        report = validate_noise_schedule(spec)
        assert report.amplification == (5,)

    def test_descending_variances_flagged(self):
        spec = NetworkSpec(
            widths=(5, 2, 2), activation="relu", task="classification",
            noise_vars=(1e-7, 1e-9),
        )
        report = validate_noise_schedule(spec)
        assert report.monotone_ok is False

    def test_scores_formula(self):
        spec = NetworkSpec(widths=(7, 3, 4, 1), noise_vars=(0.5, 0.25, 1.0))
        report = validate_noise_schedule(spec)
        assert report.scores[0] == pytest.approx(48 * 0.5 * 2)
        assert report.scores[1] == pytest.approx(4 * 0.25 * 2)

    @settings(max_examples=50, deadline=None)
    @given(widths=st.lists(st.integers(1, 9), min_size=3, max_size=6))
    def test_recursion_property(self, widths):
        spec = NetworkSpec(
            widths=tuple(widths), noise_vars=(1e-4,) * (len(widths) - 1)
        )
        amp = validate_noise_schedule(spec).amplification
        d = spec.widths
        for k in range(1, spec.h):
            # one step of the product recursion: a_k = a_{k+1} * d_{k+1} * d_k
            assert amp[k - 1] == amp[k] * d[k + 1] * d[k]


class TestActivations:
    def test_point_values(self):
        assert apply_activation("tanh", np.array([0.0]))[0] == 0.0
        assert activation_derivative("tanh", np.array([0.0]))[0] == 1.0
        assert apply_activation("relu", np.array([-2.0]))[0] == 0.0
        assert activation_derivative("relu", np.array([-2.0]))[0] == 0.0
        assert activation_derivative("relu", np.array([0.0]))[0] == 0.0
        assert apply_activation("sigmoid", np.array([0.0]))[0] == 0.5

    @pytest.mark.parametrize("kind", ["tanh", "sigmoid", "relu", "identity"])
    def test_derivative_matches_finite_difference(self, kind):
        rng = np.random.default_rng(42)
        v = rng.uniform(-2.0, 2.0, size=64)
        if kind == "relu":
            v = v[np.abs(v) > 1e-3]  # finite differences invalid at the kink
        step = 1e-6
        fd = (apply_activation(kind, v + step) - apply_activation(kind, v - step)) / (
            2 * step
        )
        np.testing.assert_allclose(activation_derivative(kind, v), fd, atol=1e-6)


class TestThetaSerialization:
    def test_round_trip(self, tmp_path):
        spec = small_spec()
        theta = init_theta(spec, RngStream(21))
        path = tmp_path / "theta.json"
        save_theta(path, spec, theta)
        spec2, theta2 = load_theta(path)
        assert spec2 == spec
        assert theta2 == theta

    def test_version_check(self, tmp_path):
        import json

        spec = small_spec()
        theta = init_theta(spec, RngStream(21))
        path = tmp_path / "theta.json"
        save_theta(path, spec, theta)
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError):
            load_theta(path)

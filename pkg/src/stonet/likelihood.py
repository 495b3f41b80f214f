"""Layer-wise log-densities of the stochastic network and their gradients.

Conditioned on the previous layer, every hidden layer output is Gaussian
around its affine mean, so the complete-data log-likelihood of one
observation is a sum of per-layer Gaussian terms plus an output term.  The
output term is Gaussian for regression and a tempered softmax for
classification: class probabilities are ``softmax(logits / sigma2_out)``,
which reduces to a plain softmax at ``sigma2_out = 1``.

All functions accept a single observation (1-D arrays) or a batch (2-D
arrays, rows = observations) and broadcast accordingly.
"""

from __future__ import annotations

import numpy as np

from .model import NetworkSpec, Theta, apply_activation, activation_derivative
from .validation import check_positive

LOG_2PI = float(np.log(2.0 * np.pi))


def _ensure_2d(a) -> tuple[np.ndarray, bool]:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        return a[None, :], True
    return a, False


def layer_residual(w, b, y_prev, y_i, *, activation: str, first_layer: bool):
    """Residual y_i - b - w psi(y_prev); psi is identity for the first layer."""
    y_prev2, single = _ensure_2d(y_prev)
    y_i2, _ = _ensure_2d(y_i)
    inp = y_prev2 if first_layer else apply_activation(activation, y_prev2)
    r = y_i2 - inp @ np.asarray(w).T - np.asarray(b)
    return r[0] if single else r


def layer_log_density(
    w, b, y_prev, y_i, sigma2, *, activation: str, first_layer: bool = False
):
    """Gaussian log-density of one hidden (or regression output) layer.

    ``-d/2 log(2 pi sigma2) - ||residual||^2 / (2 sigma2)`` per observation.
    """
    check_positive(sigma2, "sigma2")
    r = layer_residual(
        w, b, y_prev, y_i, activation=activation, first_layer=first_layer
    )
    r2, single = _ensure_2d(r)
    d = r2.shape[1]
    val = -0.5 * d * (LOG_2PI + np.log(sigma2)) - (r2 * r2).sum(axis=1) / (2.0 * sigma2)
    return float(val[0]) if single else val


def tempered_log_softmax(logits, sigma2):
    """Log of softmax(logits / sigma2), numerically stabilized."""
    check_positive(sigma2, "sigma2")
    z, single = _ensure_2d(logits)
    z = z / sigma2
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return logp[0] if single else logp


def output_log_density(w, b, y_h, y, sigma2, *, task: str, activation: str):
    """Log-density of the response given the last hidden layer output.

    Regression: Gaussian around the affine output mean.  Classification:
    tempered log-softmax evaluated at integer labels ``y``.
    """
    if task == "regression":
        return layer_log_density(
            w, b, y_h, y, sigma2, activation=activation, first_layer=False
        )
    if task != "classification":
        raise ValueError(f"unknown task {task!r}")
    yh2, single = _ensure_2d(y_h)
    logits = apply_activation(activation, yh2) @ np.asarray(w).T + np.asarray(b)
    labels = np.atleast_1d(np.asarray(y)).astype(np.int64)
    n_classes = logits.shape[1]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(
            f"labels must lie in [0, {n_classes - 1}], got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    logp = tempered_log_softmax(logits, sigma2)
    logp = np.atleast_2d(logp)
    vals = logp[np.arange(logits.shape[0]), labels]
    return float(vals[0]) if single else vals


def output_delta(spec: NetworkSpec, theta: Theta, y_h, y):
    """Gradient of the output log-density with respect to the output-layer
    affine value, per observation.

    Regression: ``(y - mean) / sigma2_out``.  Classification:
    ``(onehot - softmax(logits / sigma2_out)) / sigma2_out``.
    """
    w, b = theta.weights[spec.h], theta.biases[spec.h]
    sigma2 = spec.noise_vars[spec.h]
    yh2, single = _ensure_2d(y_h)
    logits = apply_activation(spec.activation, yh2) @ w.T + b
    if spec.task == "regression":
        y2, _ = _ensure_2d(y)
        delta = (y2 - logits) / sigma2
    else:
        labels = np.atleast_1d(np.asarray(y)).astype(np.int64)
        z = logits / sigma2
        z = z - z.max(axis=1, keepdims=True)
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        onehot = np.zeros_like(probs)
        onehot[np.arange(len(labels)), labels] = 1.0
        delta = (onehot - probs) / sigma2
    return delta[0] if single else delta


def grad_latent(spec: NetworkSpec, theta: Theta, x, latents, y, layer: int):
    """Gradient of the local two-term log-density with respect to the
    latent output of hidden layer ``layer`` (1-based, 1 <= layer <= h).

    The two terms are the layer's own Gaussian density and the next layer's
    (the output density when ``layer == h``):

        psi'(y_i) * (w_{i+1}^T delta_{i+1}) - r_i / sigma2_i
    """
    h = spec.h
    if not 1 <= layer <= h:
        raise ValueError(f"layer must be in [1, {h}], got {layer}")
    i = layer - 1  # 0-based
    y_prev = x if layer == 1 else latents[i - 1]
    y_i = latents[i]
    r_i = layer_residual(
        theta.weights[i],
        theta.biases[i],
        y_prev,
        y_i,
        activation=spec.activation,
        first_layer=(layer == 1),
    )
    if layer == h:
        delta_next = output_delta(spec, theta, y_i, y)
    else:
        r_next = layer_residual(
            theta.weights[i + 1],
            theta.biases[i + 1],
            y_i,
            latents[i + 1],
            activation=spec.activation,
            first_layer=False,
        )
        delta_next = r_next / spec.noise_vars[i + 1]
    d2, single = _ensure_2d(delta_next)
    yi2, _ = _ensure_2d(y_i)
    ri2, _ = _ensure_2d(r_i)
    grad = (
        activation_derivative(spec.activation, yi2) * (d2 @ theta.weights[i + 1])
        - ri2 / spec.noise_vars[i]
    )
    return grad[0] if single else grad


def grad_theta_gaussian(
    w, b, y_prev, y_i, sigma2, *, activation: str, first_layer: bool = False
):
    """Gradient of a Gaussian layer's log-density in its own parameters.

    Returns ``(gw, gb)`` with ``gw = r psi(y_prev)^T / sigma2`` and
    ``gb = r / sigma2``.  Batched inputs produce the gradient summed over
    the batch.
    """
    check_positive(sigma2, "sigma2")
    r = layer_residual(
        w, b, y_prev, y_i, activation=activation, first_layer=first_layer
    )
    r2, single = _ensure_2d(r)
    yp2, _ = _ensure_2d(y_prev)
    inp = yp2 if first_layer else apply_activation(activation, yp2)
    gw = r2.T @ inp / sigma2
    gb = r2.sum(axis=0) / sigma2
    if single:
        return gw, gb
    return gw, gb


def grad_theta_softmax_output(w, b, y_h, labels, sigma2, *, activation: str):
    """Gradient of the tempered-softmax output log-density in (w, b).

    Batched inputs produce the gradient summed over the batch.
    """
    check_positive(sigma2, "sigma2")
    yh2, single = _ensure_2d(y_h)
    labels = np.atleast_1d(np.asarray(labels)).astype(np.int64)
    psi = apply_activation(activation, yh2)
    logits = psi @ np.asarray(w).T + np.asarray(b)
    z = logits / sigma2
    z = z - z.max(axis=1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=1, keepdims=True)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1.0
    delta = (onehot - probs) / sigma2
    gw = delta.T @ psi
    gb = delta.sum(axis=0)
    return gw, gb


def grad_theta_layer(spec: NetworkSpec, theta: Theta, x, latents, y, layer: int):
    """Gradient of layer ``layer``'s conditional log-density in its own
    parameters (1-based; ``layer == h+1`` addresses the output layer).

    Batched inputs give the sum over observations.
    """
    h = spec.h
    if not 1 <= layer <= h + 1:
        raise ValueError(f"layer must be in [1, {h + 1}], got {layer}")
    i = layer - 1
    y_prev = x if layer == 1 else latents[i - 1]
    if layer == h + 1:
        if spec.task == "classification":
            return grad_theta_softmax_output(
                theta.weights[i],
                theta.biases[i],
                y_prev,
                y,
                spec.noise_vars[i],
                activation=spec.activation,
            )
        return grad_theta_gaussian(
            theta.weights[i],
            theta.biases[i],
            y_prev,
            y,
            spec.noise_vars[i],
            activation=spec.activation,
            first_layer=False,
        )
    return grad_theta_gaussian(
        theta.weights[i],
        theta.biases[i],
        y_prev,
        latents[i],
        spec.noise_vars[i],
        activation=spec.activation,
        first_layer=(layer == 1),
    )


def complete_data_loglik(spec: NetworkSpec, theta: Theta, x, latents, y):
    """Joint log-density of latents and response given the input.

    Sum of all hidden-layer Gaussian terms plus the output term; returns a
    scalar for one observation or a per-observation vector for a batch.
    """
    if len(latents) != spec.h:
        raise ValueError(f"need {spec.h} latent layers, got {len(latents)}")
    total = None
    for i in range(spec.h):
        y_prev = x if i == 0 else latents[i - 1]
        term = layer_log_density(
            theta.weights[i],
            theta.biases[i],
            y_prev,
            latents[i],
            spec.noise_vars[i],
            activation=spec.activation,
            first_layer=(i == 0),
        )
        total = term if total is None else total + term
    out = output_log_density(
        theta.weights[spec.h],
        theta.biases[spec.h],
        latents[spec.h - 1],
        y,
        spec.noise_vars[spec.h],
        task=spec.task,
        activation=spec.activation,
    )
    return total + out


def dnn_loss(spec: NetworkSpec, theta: Theta, X, y) -> float:
    """Negative mean output log-density at the deterministic forward trace."""
    from .model import forward_dnn

    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        raise ValueError("dataset must be nonempty")
    trace = forward_dnn(spec, theta, X)
    y_h = trace.tilde_y[spec.h - 1]
    vals = output_log_density(
        theta.weights[spec.h],
        theta.biases[spec.h],
        y_h,
        y,
        spec.noise_vars[spec.h],
        task=spec.task,
        activation=spec.activation,
    )
    return float(-np.mean(vals))

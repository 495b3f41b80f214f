"""Network architecture, deterministic and stochastic forward passes.

A network with ``h`` hidden layers is described by widths
``[d_0, d_1, ..., d_{h+1}]`` where ``d_0`` is the input dimension and
``d_{h+1}`` the output dimension.  Layer ``i`` applies the affine map
``b_i + w_i psi(.)`` to the previous layer's output; the first layer reads
the raw input and the activation ``psi`` is applied between layers only.
The stochastic variant adds independent Gaussian noise with per-layer
variances ``noise_vars[i-1]`` to every hidden layer output and treats the
output layer as a Gaussian regression (or a tempered-logit classifier).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import RngStream

ACTIVATIONS = ("tanh", "relu", "sigmoid", "identity")
TASKS = ("regression", "classification")

THETA_FORMAT_VERSION = 1


def apply_activation(kind: str, v: np.ndarray) -> np.ndarray:
    """Elementwise activation psi."""
    if kind == "tanh":
        return np.tanh(v)
    if kind == "relu":
        return np.maximum(v, 0.0)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-v))
    if kind == "identity":
        return np.asarray(v, dtype=np.float64)
    raise ValueError(f"unknown activation {kind!r}")


def activation_derivative(kind: str, v: np.ndarray) -> np.ndarray:
    """Elementwise psi'.  The relu derivative at exactly 0 is defined as 0."""
    if kind == "tanh":
        t = np.tanh(v)
        return 1.0 - t * t
    if kind == "relu":
        return np.where(v > 0.0, 1.0, 0.0)
    if kind == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-v))
        return s * (1.0 - s)
    if kind == "identity":
        return np.ones_like(np.asarray(v, dtype=np.float64))
    raise ValueError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture: layer widths, activation, task and per-layer noise.

    ``noise_vars`` has one entry per affine layer (h hidden + 1 output).
    The theory behind the model prefers non-decreasing noise variances;
    :func:`validate_noise_schedule` reports on that without enforcing it.
    """

    widths: tuple[int, ...]
    activation: str = "tanh"
    task: str = "regression"
    noise_vars: tuple[float, ...] = ()

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 3:
            raise ValueError("need at least one hidden layer: len(widths) >= 3")
        if any(w < 1 for w in widths):
            raise ValueError(f"all widths must be >= 1, got {widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        nv = tuple(float(v) for v in self.noise_vars)
        object.__setattr__(self, "noise_vars", nv)
        if len(nv) != self.h + 1:
            raise ValueError(
                f"noise_vars must have length h+1={self.h + 1}, got {len(nv)}"
            )
        if any(not np.isfinite(v) or v <= 0 for v in nv):
            raise ValueError("noise variances must be positive and finite")

    @property
    def p(self) -> int:
        return self.widths[0]

    @property
    def h(self) -> int:
        return len(self.widths) - 2

    @property
    def d_out(self) -> int:
        return self.widths[-1]

    def to_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "activation": self.activation,
            "task": self.task,
            "noise_vars": list(self.noise_vars),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            widths=tuple(d["widths"]),
            activation=d["activation"],
            task=d["task"],
            noise_vars=tuple(d["noise_vars"]),
        )


class Theta:
    """Per-layer affine parameters ``(w_i, b_i)``, i = 1..h+1.

    ``weights[i]`` has shape ``(d_{i+1}, d_i)`` in 0-based indexing and
    ``biases[i]`` has length ``d_{i+1}``.  Instances are treated as
    immutable values: trainers build updated copies instead of mutating.
    """

    def __init__(self, weights, biases):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must have one entry per layer")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def validate_for(self, spec: NetworkSpec) -> None:
        if self.n_layers != spec.h + 1:
            raise ValueError(
                f"theta has {self.n_layers} layers, spec wants {spec.h + 1}"
            )
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (spec.widths[i + 1], spec.widths[i])
            if w.shape != want:
                raise ValueError(f"layer {i + 1}: weight shape {w.shape} != {want}")
            if b.shape != (spec.widths[i + 1],):
                raise ValueError(
                    f"layer {i + 1}: bias shape {b.shape} != ({spec.widths[i + 1]},)"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i + 1}: non-finite parameter")

    def copy(self) -> "Theta":
        return Theta([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Theta) or other.n_layers != self.n_layers:
            return NotImplemented
        return all(
            np.array_equal(w1, w2) and np.array_equal(b1, b2)
            for w1, w2, b1, b2 in zip(
                self.weights, other.weights, self.biases, other.biases
            )
        )


@dataclass
class ForwardTrace:
    """Pre-activation hidden outputs and the output-layer mean.

    ``tilde_y[i]`` is the hidden layer i+1 output (0-based list over the h
    hidden layers); ``output_mean`` is the affine output-layer value (the
    logits, for classification).  Arrays are ``(n, d_i)`` for batched input
    and ``(d_i,)`` for a single observation.
    """

    tilde_y: list
    output_mean: np.ndarray


@dataclass(frozen=True)
class NoiseReport:
    """Noise-calibration report for a spec.

    ``amplification[k-1]`` is the factor by which layer-k noise is amplified
    at the output: ``d_{h+1} * (prod_{i=k+1..h} d_i^2) * d_k``.  The score
    ``scores[k-1] = amplification[k-1] * noise_vars[k-1] * h`` should stay
    well below 1 for the stochastic network to track its deterministic
    skeleton; ``monotone_ok`` flags whether variances are non-decreasing.
    """

    amplification: tuple[int, ...]
    scores: tuple[float, ...]
    monotone_ok: bool

    @property
    def calibrated(self) -> bool:
        return self.monotone_ok and all(s < 1.0 for s in self.scores)


def init_theta(spec: NetworkSpec, stream: RngStream) -> Theta:
    """Random initialization: weights uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)],
    biases zero.  Deterministic given the stream."""
    gen = stream.generator()
    weights, biases = [], []
    for i in range(spec.h + 1):
        fan_in = spec.widths[i]
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(gen.uniform(-bound, bound, size=(spec.widths[i + 1], fan_in)))
        biases.append(np.zeros(spec.widths[i + 1]))
    theta = Theta(weights, biases)
    theta.validate_for(spec)
    return theta


def _check_input(spec: NetworkSpec, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.p:
        raise ValueError(f"input must have {spec.p} columns, got shape {x.shape}")
    return x, single


def forward_dnn(spec: NetworkSpec, theta: Theta, x) -> ForwardTrace:
    """Deterministic forward pass returning all pre-activation hidden outputs.

    Accepts a single observation ``(p,)`` or a batch ``(n, p)``.
    """
    x, single = _check_input(spec, x)
    theta.validate_for(spec)
    tilde = []
    cur = x
    for i in range(spec.h):
        inp = cur if i == 0 else apply_activation(spec.activation, cur)
        cur = inp @ theta.weights[i].T + theta.biases[i]
        tilde.append(cur)
    out = (
        apply_activation(spec.activation, cur) @ theta.weights[spec.h].T
        + theta.biases[spec.h]
    )
    if single:
        return ForwardTrace([t[0] for t in tilde], out[0])
    return ForwardTrace(tilde, out)


def forward_stonet_sample(
    spec: NetworkSpec, theta: Theta, x, stream: RngStream
) -> tuple[list, np.ndarray]:
    """Generative draw of the stochastic network.

    Each hidden layer output receives independent N(0, noise_vars[i]) noise
    before feeding the next layer.  For regression the output is the affine
    output-layer value plus Gaussian noise; for classification it is a class
    label sampled from the softmax of the output logits divided by the
    output-layer noise variance (the temperature).
    """
    x, single = _check_input(spec, x)
    theta.validate_for(spec)
    gen = stream.generator()
    n = x.shape[0]
    latents = []
    cur = x
    for i in range(spec.h):
        inp = cur if i == 0 else apply_activation(spec.activation, cur)
        mean = inp @ theta.weights[i].T + theta.biases[i]
        cur = mean + gen.normal(
            0.0, np.sqrt(spec.noise_vars[i]), size=(n, spec.widths[i + 1])
        )
        latents.append(cur)
    logits = (
        apply_activation(spec.activation, cur) @ theta.weights[spec.h].T
        + theta.biases[spec.h]
    )
    if spec.task == "regression":
        out = logits + gen.normal(
            0.0, np.sqrt(spec.noise_vars[spec.h]), size=(n, spec.d_out)
        )
    else:
        scaled = logits / spec.noise_vars[spec.h]
        scaled = scaled - scaled.max(axis=1, keepdims=True)
        probs = np.exp(scaled)
        probs /= probs.sum(axis=1, keepdims=True)
        u = gen.random((n, 1))
        out = (probs.cumsum(axis=1) < u).sum(axis=1).astype(np.int64)
        out = np.minimum(out, spec.d_out - 1)
    if single:
        return [z[0] for z in latents], out[0]
    return latents, out


def validate_noise_schedule(spec: NetworkSpec) -> NoiseReport:
    """Exact noise amplification factors and calibration scores for a spec.

    Callers should treat a score >= 1 or a non-monotone variance sequence as
    a warning condition, not an error: several useful configurations violate
    monotonicity on purpose.
    """
    h = spec.h
    d = spec.widths
    amp = []
    for k in range(1, h + 1):
        prod = 1
        for i in range(k + 1, h + 1):
            prod *= d[i] ** 2
        amp.append(d[h + 1] * prod * d[k])
    scores = tuple(a * spec.noise_vars[k] * h for k, a in enumerate(amp))
    monotone = all(
        spec.noise_vars[i] <= spec.noise_vars[i + 1] for i in range(len(spec.noise_vars) - 1)
    )
    return NoiseReport(amplification=tuple(amp), scores=scores, monotone_ok=monotone)


def save_theta(path, spec: NetworkSpec, theta: Theta) -> None:
    """Write parameters as versioned JSON with an architecture header."""
    theta.validate_for(spec)
    doc = {
        "format_version": THETA_FORMAT_VERSION,
        "network": spec.to_dict(),
        "layers": [
            {"w": w.tolist(), "b": b.tolist()}
            for w, b in zip(theta.weights, theta.biases)
        ],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_theta(path) -> tuple[NetworkSpec, Theta]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("format_version")
    if version != THETA_FORMAT_VERSION:
        raise ValueError(f"unsupported parameter file version: {version!r}")
    spec = NetworkSpec.from_dict(doc["network"])
    theta = Theta(
        [np.asarray(layer["w"]) for layer in doc["layers"]],
        [np.asarray(layer["b"]) for layer in doc["layers"]],
    )
    theta.validate_for(spec)
    return spec, theta

"""Two-stage training: backward SGHMC imputation + stochastic-approximation
parameter updates.

Each outer iteration draws a mini-batch, re-initializes the latent state
from the deterministic forward trace with zero momenta, runs ``t_hmc``
SGHMC steps sweeping the hidden layers from deepest to shallowest, and then
moves every layer's parameters along the summed parameter gradient scaled
by ``gamma * n_total / batch_size``.

Stage one (parameter training) runs over mini-batches; by default it uses
fixed step sizes, with decaying schedules available via
``theta_stage_decaying``.  Stage two (feature extraction) runs full-data
iterations with the decaying schedules ``eps_k = C_e / (c_e + k^alpha)``
and ``gamma_k = C_g / (c_g + k^alpha)``, keeps the last few sweeps of the
deepest hidden layer, and continues updating parameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import SamplerDivergenceError, UpdateDivergenceError
from .likelihood import dnn_loss, grad_latent, grad_theta_layer
from .model import NetworkSpec, Theta, forward_dnn, init_theta, validate_noise_schedule
from .numerics import RngStream

# Stream-id constants for the stage substreams of one training run.
_INIT_STREAM = 0
_THETA_STAGE_STREAM = 1
_SDR_STAGE_STREAM = 2
_PERM_OFFSET = 1_000_000


def _as_schedule(value) -> tuple[tuple[float, float, float], ...]:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("schedule must be one or more (C, c, alpha) triples")
    out = []
    for C, c, alpha in arr:
        if C <= 0:
            raise ValueError(f"schedule constant C must be positive, got {C}")
        if c < 0:
            raise ValueError(f"schedule constant c must be >= 0, got {c}")
        if not 0 < alpha <= 1:
            raise ValueError(f"schedule exponent alpha must be in (0, 1], got {alpha}")
        if C / (c + 1.0) <= 0:
            raise ValueError("schedule must produce positive values")
        out.append((float(C), float(c), float(alpha)))
    return tuple(out)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the two-stage trainer.

    ``theta_eps`` / ``theta_gammas`` are the fixed stage-one step sizes
    (``theta_gammas`` may be a scalar shared by all layers or one value per
    layer).  ``eps_schedule`` and ``gamma_schedules`` are (C, c, alpha)
    triples for the decaying stage-two schedules; ``gamma_schedules`` takes
    one triple or one per layer, with the last triple reused for deeper
    layers when fewer are given.
    """

    t_hmc: int = 25
    eta: float = 10.0
    beta: float = 1.0
    batch_size: int = 64
    theta_stage_epochs: int = 100
    sdr_stage_epochs: int = 30
    theta_eps: float = 1e-3
    theta_gammas: tuple[float, ...] | float = 1e-5
    eps_schedule: tuple[float, float, float] = (1.0, 1000.0, 0.6)
    gamma_schedules: tuple = ((1e-2, 1e4, 0.6),)
    theta_stage_decaying: bool = False
    sdr_keep_sweeps: int = 5
    loss_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.t_hmc < 1:
            raise ValueError("t_hmc must be >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.theta_stage_epochs < 0 or self.sdr_stage_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.theta_eps <= 0:
            raise ValueError("theta_eps must be positive")
        gammas = np.atleast_1d(np.asarray(self.theta_gammas, dtype=np.float64))
        if np.any(gammas <= 0):
            raise ValueError("theta_gammas must be positive")
        object.__setattr__(self, "theta_gammas", tuple(float(g) for g in gammas))
        object.__setattr__(self, "eps_schedule", _as_schedule(self.eps_schedule)[0])
        object.__setattr__(self, "gamma_schedules", _as_schedule(self.gamma_schedules))
        if self.sdr_keep_sweeps < 1:
            raise ValueError("sdr_keep_sweeps must be >= 1")

    def theta_gamma(self, layer: int) -> float:
        """Fixed stage-one step size for 1-based ``layer``."""
        gammas = self.theta_gammas
        return gammas[min(layer - 1, len(gammas) - 1)]

    @classmethod
    def with_continuation_schedules(
        cls,
        n: int,
        gamma_consts=(3e-5,),
        theta_eps: float = 1e-3,
        eps_schedule=(1.0, 1000.0, 0.6),
        alpha: float = 0.6,
        **kwargs,
    ) -> "TrainConfig":
        """Config whose stage-two schedules continue the fixed stage-one
        steps: stage one uses ``gamma = g/n`` per layer, stage two
        ``gamma_k = (1/n) / (1/g + k^alpha)``, which starts at ``g/n``.
        """
        gamma_consts = tuple(float(g) for g in np.atleast_1d(gamma_consts))
        theta_gammas = tuple(g / n for g in gamma_consts)
        gamma_schedules = tuple((1.0 / n, 1.0 / g, alpha) for g in gamma_consts)
        return cls(
            theta_eps=theta_eps,
            theta_gammas=theta_gammas,
            eps_schedule=eps_schedule,
            gamma_schedules=gamma_schedules,
            **kwargs,
        )


def eps_k(cfg: TrainConfig, k: int) -> float:
    """Decaying sampler step size C_e / (c_e + k^alpha) for iteration k >= 1."""
    if k < 1:
        raise ValueError("iteration index k must be >= 1")
    C, c, alpha = cfg.eps_schedule
    return C / (c + float(k) ** alpha)


def gamma_k(cfg: TrainConfig, layer: int, k: int) -> float:
    """Decaying parameter step size for 1-based ``layer`` at iteration k >= 1."""
    if k < 1:
        raise ValueError("iteration index k must be >= 1")
    if layer < 1:
        raise ValueError("layer must be >= 1")
    sched = cfg.gamma_schedules
    C, c, alpha = sched[min(layer - 1, len(sched) - 1)]
    return C / (c + float(k) ** alpha)


@dataclass
class LatentState:
    """Imputed latent outputs and momenta for a batch of observations.

    ``y[i]`` and ``v[i]`` are ``(batch, d_{i+1})`` arrays for hidden layer
    i+1 (0-based list index).
    """

    y: list
    v: list

    def copy(self) -> "LatentState":
        return LatentState([a.copy() for a in self.y], [a.copy() for a in self.v])


def init_latent_state(spec: NetworkSpec, theta: Theta, X) -> LatentState:
    """Fresh latent state: latents at the deterministic trace, zero momenta."""
    trace = forward_dnn(spec, theta, np.atleast_2d(np.asarray(X, dtype=np.float64)))
    y = [t.copy() for t in trace.tilde_y]
    v = [np.zeros_like(t) for t in trace.tilde_y]
    return LatentState(y=y, v=v)


def sghmc_sweep(
    spec: NetworkSpec,
    theta: Theta,
    X,
    y,
    state: LatentState,
    cfg: TrainConfig,
    stream: RngStream,
    k: int,
    eps: float | None = None,
) -> LatentState:
    """Run ``t_hmc`` SGHMC steps on the latent state, layers deepest-first.

    Every inner step updates, for each hidden layer from h down to 1,

        v <- (1 - eps*eta) v + eps * grad + sqrt(2 eps eta / beta) * e
        y <- y + eps * v_pre

    where ``v_pre`` is the momentum before this step's update, ``grad`` is
    the analytic latent gradient using the freshest neighboring layers, and
    ``e`` is standard Gaussian.  Mutates ``state`` in place and returns it.
    """
    if eps is None:
        eps = eps_k(cfg, k)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    gen = stream.generator()
    noise_scale = np.sqrt(2.0 * eps * cfg.eta / cfg.beta)
    damp = 1.0 - eps * cfg.eta
    for _ in range(cfg.t_hmc):
        for layer in range(spec.h, 0, -1):
            i = layer - 1
            grad = grad_latent(spec, theta, X, state.y, y, layer)
            noise = gen.standard_normal(state.y[i].shape)
            v_pre = state.v[i]
            state.y[i] = state.y[i] + eps * v_pre
            state.v[i] = damp * v_pre + eps * grad + noise_scale * noise
    for layer in range(1, spec.h + 1):
        i = layer - 1
        if not (
            np.all(np.isfinite(state.y[i])) and np.all(np.isfinite(state.v[i]))
        ):
            raise SamplerDivergenceError(k, layer)
    return state


def param_update(
    spec: NetworkSpec,
    theta: Theta,
    X,
    y,
    state: LatentState,
    cfg: TrainConfig,
    k: int,
    n_total: int,
    gammas=None,
) -> Theta:
    """One stochastic-approximation step on every layer's parameters.

    Each layer moves by ``gamma_i * (n_total / batch) * sum_s grad_i(s)``;
    with a full batch the scale factor is exactly 1.  Returns a new Theta.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    batch_n = X.shape[0]
    scale = float(n_total) / float(batch_n)
    new_w, new_b = [], []
    for layer in range(1, spec.h + 2):
        gw, gb = grad_theta_layer(spec, theta, X, state.y, y, layer)
        if gammas is not None:
            g = gammas[min(layer - 1, len(gammas) - 1)]
        else:
            g = gamma_k(cfg, layer, k)
        w = theta.weights[layer - 1] + g * scale * gw
        b = theta.biases[layer - 1] + g * scale * gb
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise UpdateDivergenceError(k, layer)
        new_w.append(w)
        new_b.append(b)
    return Theta(new_w, new_b)


@dataclass
class IterationRecord:
    stage: str
    k: int
    eps: float
    gammas: tuple[float, ...]
    update_norms: tuple[float, ...]
    loss: float | None = None

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "k": self.k,
            "eps": self.eps,
            "gammas": list(self.gammas),
            "update_norms": list(self.update_norms),
            "loss": self.loss,
        }


@dataclass
class TrainReport:
    """Per-iteration training records plus warnings and stage timings."""

    records: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    wall_clock: dict = field(default_factory=dict)

    def add(self, record: IterationRecord) -> None:
        self.records.append(record)

    def losses(self, stage: str | None = None) -> list[tuple[int, float]]:
        return [
            (r.k, r.loss)
            for r in self.records
            if r.loss is not None and (stage is None or r.stage == stage)
        ]

    def to_jsonl(self) -> str:
        import json

        return "\n".join(json.dumps(r.to_dict()) for r in self.records)

    def summary(self) -> dict:
        losses = self.losses()
        return {
            "n_iterations": len(self.records),
            "final_loss": losses[-1][1] if losses else None,
            "warnings": list(self.warnings),
            "wall_clock": dict(self.wall_clock),
        }


def _update_norms(old: Theta, new: Theta) -> tuple[float, ...]:
    norms = []
    for w0, b0, w1, b1 in zip(old.weights, old.biases, new.weights, new.biases):
        norms.append(
            float(np.sqrt(np.sum((w1 - w0) ** 2) + np.sum((b1 - b0) ** 2)))
        )
    return tuple(norms)


def _check_noise_schedule(spec: NetworkSpec, report: TrainReport) -> None:
    import warnings as _warnings

    noise = validate_noise_schedule(spec)
    if not noise.monotone_ok:
        msg = "noise variances are not non-decreasing across layers"
        report.warnings.append(msg)
        _warnings.warn(msg, RuntimeWarning, stacklevel=3)
    bad = [k + 1 for k, s in enumerate(noise.scores) if s >= 1.0]
    if bad:
        msg = f"noise amplification score >= 1 at hidden layer(s) {bad}"
        report.warnings.append(msg)
        _warnings.warn(msg, RuntimeWarning, stacklevel=3)


def run_theta_stage(
    spec: NetworkSpec,
    theta0: Theta,
    X,
    y,
    cfg: TrainConfig,
    stream: RngStream,
    report: TrainReport | None = None,
) -> tuple[Theta, TrainReport]:
    """Mini-batch parameter-training stage.

    Epochs iterate a seeded permutation of the data without replacement;
    every outer iteration re-initializes latents from the current forward
    trace (zero momenta), sweeps, and updates parameters.
    """
    if report is None:
        report = TrainReport()
        _check_noise_schedule(spec, report)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    y = np.asarray(y)
    theta = theta0
    started = time.perf_counter()
    k = 0
    for epoch in range(cfg.theta_stage_epochs):
        perm = stream.child(_PERM_OFFSET + epoch).generator().permutation(n)
        record_loss = cfg.loss_every > 0 and (epoch + 1) % cfg.loss_every == 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            Xb, yb = X[idx], y[idx]
            k += 1
            if cfg.theta_stage_decaying:
                eps = eps_k(cfg, k)
                gammas = tuple(gamma_k(cfg, i, k) for i in range(1, spec.h + 2))
            else:
                eps = cfg.theta_eps
                gammas = tuple(cfg.theta_gamma(i) for i in range(1, spec.h + 2))
            state = init_latent_state(spec, theta, Xb)
            state = sghmc_sweep(
                spec, theta, Xb, yb, state, cfg, stream.child(k), k, eps=eps
            )
            new_theta = param_update(
                spec, theta, Xb, yb, state, cfg, k, n_total=n, gammas=gammas
            )
            last_of_epoch = start + cfg.batch_size >= n
            loss = (
                dnn_loss(spec, new_theta, X, y)
                if (record_loss and last_of_epoch)
                else None
            )
            report.add(
                IterationRecord(
                    stage="theta",
                    k=k,
                    eps=eps,
                    gammas=gammas,
                    update_norms=_update_norms(theta, new_theta),
                    loss=loss,
                )
            )
            theta = new_theta
    report.wall_clock["theta"] = time.perf_counter() - started
    return theta, report


def run_sdr_stage(
    spec: NetworkSpec,
    theta: Theta,
    X,
    y,
    cfg: TrainConfig,
    stream: RngStream,
    report: TrainReport | None = None,
) -> tuple[Theta, LatentState, list, TrainReport]:
    """Full-data feature-extraction stage with decaying schedules.

    Returns the updated parameters, the final latent state, and the deepest
    hidden layer's latents from the last ``sdr_keep_sweeps`` iterations
    (most recent last).
    """
    if report is None:
        report = TrainReport()
        _check_noise_schedule(spec, report)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    y = np.asarray(y)
    started = time.perf_counter()
    kept: list = []
    state = init_latent_state(spec, theta, X)
    for k in range(1, cfg.sdr_stage_epochs + 1):
        state = init_latent_state(spec, theta, X)
        state = sghmc_sweep(spec, theta, X, y, state, cfg, stream.child(k), k)
        new_theta = param_update(spec, theta, X, y, state, cfg, k, n_total=n)
        kept.append(state.y[spec.h - 1].copy())
        if len(kept) > cfg.sdr_keep_sweeps:
            kept.pop(0)
        loss = (
            dnn_loss(spec, new_theta, X, y)
            if cfg.loss_every > 0 and k % cfg.loss_every == 0
            else None
        )
        report.add(
            IterationRecord(
                stage="sdr",
                k=k,
                eps=eps_k(cfg, k),
                gammas=tuple(gamma_k(cfg, i, k) for i in range(1, spec.h + 2)),
                update_norms=_update_norms(theta, new_theta),
                loss=loss,
            )
        )
        theta = new_theta
    report.wall_clock["sdr"] = time.perf_counter() - started
    return theta, state, kept, report


def train(
    spec: NetworkSpec,
    X,
    y,
    cfg: TrainConfig,
    stream: RngStream | None = None,
) -> tuple[Theta, list, TrainReport]:
    """Initialize parameters and run both stages end to end.

    Returns ``(theta, sdr_latents, report)`` where ``sdr_latents`` is the
    list of retained deepest-hidden-layer matrices from the final stage-two
    sweeps.  Deterministic given ``cfg.seed`` (or an explicit stream).
    """
    if stream is None:
        stream = RngStream(cfg.seed)
    theta0 = init_theta(spec, stream.child(_INIT_STREAM))
    theta, report = run_theta_stage(
        spec, theta0, X, y, cfg, stream.child(_THETA_STAGE_STREAM)
    )
    theta, _, kept, report = run_sdr_stage(
        spec, theta, X, y, cfg, stream.child(_SDR_STAGE_STREAM), report=report
    )
    return theta, kept, report

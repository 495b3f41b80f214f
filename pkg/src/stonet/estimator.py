"""Scikit-learn style estimator for stochastic-network dimension reduction.

``fit(X, y)`` trains the stochastic network end to end (parameter stage +
full-data feature stage) and stores the imputed training features in
``features_``; ``transform(X)`` projects new inputs through the
deterministic forward pass to the deepest hidden layer, which is the
response-free projection usable on held-out data.  ``fit_transform(X, y)``
returns the imputed training features, matching the protocol of training a
downstream model on the imputed projections.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .model import NetworkSpec, forward_dnn
from .numerics import RngStream
from .sdr import extract_features
from .trainer import TrainConfig, train
from .validation import as_labels, as_matrix, check_consistent_rows


def _default_noise_vars(n_hidden: int, task: str) -> tuple[float, ...]:
    # Flat small variances keep the stochastic net near its deterministic
    # skeleton while the output term stays strong enough to pull label or
    # response information into the imputed latents.
    return (1e-2,) * (n_hidden + 1)


class StoNetSDR(BaseEstimator, TransformerMixin):
    """Supervised nonlinear dimension reduction via a stochastic network.

    The deepest hidden layer's width is the reduced dimension ``q``; by the
    layer-wise Markov property of the trained network, the response is
    conditionally independent of the inputs given that layer's output.

    Parameters
    ----------
    hidden_widths : tuple of int
        Hidden layer widths; the last entry is the reduced dimension q.
    activation : {"tanh", "relu", "sigmoid", "identity"}
    task : {"regression", "classification"}
    noise_vars : tuple of float or None
        Per-layer noise variances (h hidden + 1 output); None picks an
        ascending default with unit output variance.
    t_hmc, eta, beta : SGHMC steps per iteration, friction, inverse
        temperature.
    batch_size, theta_stage_epochs, sdr_stage_epochs : stage sizing.
    theta_eps, theta_gammas : fixed stage-one step sizes.
    eps_schedule, gamma_schedules : decaying stage-two schedules,
        (C, c, alpha) triples.
    sdr_keep_sweeps : how many final full-data sweeps to average into the
        training features.
    random_state : int
        Seed for the whole run; identical seeds reproduce results exactly.
    """

    def __init__(
        self,
        hidden_widths=(10, 2),
        activation="tanh",
        task="regression",
        noise_vars=None,
        t_hmc=25,
        eta=10.0,
        beta=1.0,
        batch_size=64,
        theta_stage_epochs=100,
        sdr_stage_epochs=30,
        theta_eps=1e-3,
        theta_gammas=1e-5,
        eps_schedule=(1.0, 1000.0, 0.6),
        gamma_schedules=((1e-2, 1e4, 0.6),),
        theta_stage_decaying=False,
        sdr_keep_sweeps=5,
        loss_every=1,
        random_state=0,
    ):
        self.hidden_widths = hidden_widths
        self.activation = activation
        self.task = task
        self.noise_vars = noise_vars
        self.t_hmc = t_hmc
        self.eta = eta
        self.beta = beta
        self.batch_size = batch_size
        self.theta_stage_epochs = theta_stage_epochs
        self.sdr_stage_epochs = sdr_stage_epochs
        self.theta_eps = theta_eps
        self.theta_gammas = theta_gammas
        self.eps_schedule = eps_schedule
        self.gamma_schedules = gamma_schedules
        self.theta_stage_decaying = theta_stage_decaying
        self.sdr_keep_sweeps = sdr_keep_sweeps
        self.loss_every = loss_every
        self.random_state = random_state

    @property
    def q(self) -> int:
        return tuple(self.hidden_widths)[-1]

    def _build_spec(self, p: int, d_out: int) -> NetworkSpec:
        widths = (p, *tuple(int(w) for w in self.hidden_widths), d_out)
        h = len(widths) - 2
        noise = (
            tuple(self.noise_vars)
            if self.noise_vars is not None
            else _default_noise_vars(h, self.task)
        )
        return NetworkSpec(
            widths=widths,
            activation=self.activation,
            task=self.task,
            noise_vars=noise,
        )

    def _build_config(self) -> TrainConfig:
        return TrainConfig(
            t_hmc=self.t_hmc,
            eta=self.eta,
            beta=self.beta,
            batch_size=self.batch_size,
            theta_stage_epochs=self.theta_stage_epochs,
            sdr_stage_epochs=self.sdr_stage_epochs,
            theta_eps=self.theta_eps,
            theta_gammas=self.theta_gammas,
            eps_schedule=self.eps_schedule,
            gamma_schedules=self.gamma_schedules,
            theta_stage_decaying=self.theta_stage_decaying,
            sdr_keep_sweeps=self.sdr_keep_sweeps,
            loss_every=self.loss_every,
            seed=self.random_state,
        )

    def fit(self, X, y):
        X = as_matrix(X, "X", min_rows=2)
        if self.task == "classification":
            labels = as_labels(y, "y")
            check_consistent_rows(X, labels[:, None], names=("X", "y"))
            d_out = int(labels.max()) + 1
            if d_out < 2:
                raise ValueError("classification needs at least 2 classes")
            y_arr = labels
        else:
            y_arr = as_matrix(y, "y")
            check_consistent_rows(X, y_arr, names=("X", "y"))
            d_out = y_arr.shape[1]
        spec = self._build_spec(X.shape[1], d_out)
        cfg = self._build_config()
        theta, kept, report = train(
            spec, X, y_arr, cfg, stream=RngStream(cfg.seed)
        )
        self.spec_ = spec
        self.theta_ = theta
        self.report_ = report
        feats = extract_features(kept, spec, seed=cfg.seed)
        self.features_ = feats.Z
        self.feature_meta_ = feats
        return self

    def transform(self, X) -> np.ndarray:
        """Deterministic projection of new inputs to the deepest hidden layer."""
        X = as_matrix(X, "X")
        trace = forward_dnn(self.spec_, self.theta_, X)
        return trace.tilde_y[self.spec_.h - 1]

    def fit_transform(self, X, y=None, **fit_params):
        """Fit and return the imputed training features (not ``transform(X)``)."""
        if y is None:
            raise ValueError("this reducer is supervised: y is required")
        return self.fit(X, y, **fit_params).features_

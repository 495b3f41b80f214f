"""Stochastic neural networks for nonlinear sufficient dimension reduction."""

from .baselines import PCAReducer, SIRReducer, load_reducer, save_reducer
from .errors import (
    ConfigError,
    DegenerateInputError,
    DivergenceError,
    MissingStateError,
    SamplerDivergenceError,
    UpdateDivergenceError,
)
from .estimator import StoNetSDR
from .harness import (
    Dataset,
    ExperimentConfig,
    ResultBundle,
    gen_circle,
    gen_m1,
    load_csv,
    run_experiment,
    split,
    write_results,
)
from .heads import LinearHead, LogisticHead, Metrics, evaluate, load_head, save_head
from .model import (
    NetworkSpec,
    NoiseReport,
    Theta,
    forward_dnn,
    forward_stonet_sample,
    init_theta,
    load_theta,
    save_theta,
    validate_noise_schedule,
)
from .numerics import (
    RngStream,
    StandardizationStats,
    sample_gaussian_vec,
    sample_generalized_gaussian,
    standardize_columns,
    sym_eig,
)
from .sdr import (
    DependenceResult,
    SdrFeatures,
    distance_correlation,
    extract_features,
    permutation_test,
    write_features_csv,
)
from .trainer import (
    LatentState,
    TrainConfig,
    TrainReport,
    eps_k,
    gamma_k,
    init_latent_state,
    param_update,
    run_sdr_stage,
    run_theta_stage,
    sghmc_sweep,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Dataset",
    "DegenerateInputError",
    "DependenceResult",
    "DivergenceError",
    "ExperimentConfig",
    "LatentState",
    "LinearHead",
    "LogisticHead",
    "Metrics",
    "MissingStateError",
    "NetworkSpec",
    "NoiseReport",
    "PCAReducer",
    "ResultBundle",
    "RngStream",
    "SIRReducer",
    "SamplerDivergenceError",
    "SdrFeatures",
    "StandardizationStats",
    "StoNetSDR",
    "Theta",
    "TrainConfig",
    "TrainReport",
    "UpdateDivergenceError",
    "distance_correlation",
    "eps_k",
    "evaluate",
    "extract_features",
    "forward_dnn",
    "forward_stonet_sample",
    "gamma_k",
    "gen_circle",
    "gen_m1",
    "init_latent_state",
    "init_theta",
    "load_csv",
    "load_head",
    "load_reducer",
    "load_theta",
    "param_update",
    "permutation_test",
    "run_experiment",
    "run_sdr_stage",
    "run_theta_stage",
    "sample_gaussian_vec",
    "sample_generalized_gaussian",
    "save_head",
    "save_reducer",
    "save_theta",
    "sghmc_sweep",
    "split",
    "standardize_columns",
    "sym_eig",
    "train",
    "validate_noise_schedule",
    "write_features_csv",
    "write_results",
]

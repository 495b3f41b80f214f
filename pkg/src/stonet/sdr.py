"""Dimension-reduction feature extraction and the dependence diagnostic.

Features are the deepest hidden layer's imputed latents averaged over the
retained final full-data sweeps.  Run-to-run validation uses empirical
distance correlation with a permutation test: features from two
independently seeded runs on the same data should be detectably dependent.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, MissingStateError
from .model import NetworkSpec
from .numerics import RngStream
from .validation import as_matrix, check_consistent_rows


@dataclass(frozen=True)
class SdrFeatures:
    """Reduced representation with provenance metadata."""

    Z: np.ndarray
    seed: int | None = None
    spec_hash: str | None = None
    n_sweeps_averaged: int = 1

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def q(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True)
class DependenceResult:
    dcor: float
    p_value: float
    n_permutations: int


def spec_hash(spec: NetworkSpec) -> str:
    payload = json.dumps(spec.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def extract_features(
    sdr_latents, spec: NetworkSpec, seed: int | None = None
) -> SdrFeatures:
    """Average the retained deepest-layer latent sweeps into one matrix.

    ``sdr_latents`` is the list returned by the trainer; a single retained
    sweep passes through unchanged.
    """
    if not sdr_latents:
        raise MissingStateError("no retained latent sweeps: run training first")
    mats = [as_matrix(m, "latents") for m in sdr_latents]
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ValueError("retained sweeps have inconsistent shapes")
    if shape[1] != spec.widths[spec.h]:
        raise ValueError(
            f"latents have {shape[1]} columns, spec's deepest hidden layer "
            f"has {spec.widths[spec.h]}"
        )
    Z = np.mean(mats, axis=0)
    return SdrFeatures(
        Z=Z, seed=seed, spec_hash=spec_hash(spec), n_sweeps_averaged=len(mats)
    )


def write_features_csv(features, path) -> None:
    """Export features (an :class:`SdrFeatures` or a plain matrix) as CSV
    with header ``Z1..Zq`` and one row per observation."""
    Z = features.Z if isinstance(features, SdrFeatures) else features
    Z = as_matrix(Z, "features")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"Z{i + 1}" for i in range(Z.shape[1])])
        for row in Z:
            writer.writerow([repr(float(v)) for v in row])


def _centered_distance_matrix(A: np.ndarray) -> np.ndarray:
    sq = np.sum(A * A, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (A @ A.T)
    np.maximum(d2, 0.0, out=d2)
    D = np.sqrt(d2)
    return D - D.mean(axis=0)[None, :] - D.mean(axis=1)[:, None] + D.mean()


def distance_correlation(A, B) -> float:
    """Biased empirical distance correlation of two row-aligned samples.

    Computed from doubly-centered Euclidean distance matrices; the value
    lies in [0, 1] and is 0 only under exact distance-covariance
    degeneracy.  Constant inputs are degenerate and rejected.
    """
    A = as_matrix(A, "A", min_rows=4)
    B = as_matrix(B, "B", min_rows=4)
    check_consistent_rows(A, B, names=("A", "B"))
    CA = _centered_distance_matrix(A)
    CB = _centered_distance_matrix(B)
    n2 = float(A.shape[0]) ** 2
    vxx = np.vdot(CA, CA) / n2
    vyy = np.vdot(CB, CB) / n2
    if vxx <= 0 or vyy <= 0:
        raise DegenerateInputError(
            "constant input: distance covariance is degenerate"
        )
    vxy = np.vdot(CA, CB) / n2
    return float(np.sqrt(max(vxy, 0.0) / np.sqrt(vxx * vyy)))


def permutation_test(
    A, B, n_permutations: int, stream: RngStream
) -> DependenceResult:
    """Permutation p-value for dependence measured by distance correlation.

    Rows of ``B`` are permuted; the p-value is
    ``(1 + #{permuted dcor >= observed}) / (1 + n_permutations)``, so the
    smallest attainable value is ``1 / (n_permutations + 1)``.  Deterministic
    given the stream.
    """
    if n_permutations < 99:
        raise ValueError("n_permutations must be >= 99")
    A = as_matrix(A, "A", min_rows=4)
    B = as_matrix(B, "B", min_rows=4)
    check_consistent_rows(A, B, names=("A", "B"))
    CA = _centered_distance_matrix(A)
    CB = _centered_distance_matrix(B)
    n = A.shape[0]
    n2 = float(n) ** 2
    vxx = np.vdot(CA, CA) / n2
    vyy = np.vdot(CB, CB) / n2
    if vxx <= 0 or vyy <= 0:
        raise DegenerateInputError(
            "constant input: distance covariance is degenerate"
        )
    denom = np.sqrt(vxx * vyy)
    observed = float(np.sqrt(max(np.vdot(CA, CB) / n2, 0.0) / denom))
    gen = stream.generator()
    exceed = 0
    for _ in range(n_permutations):
        perm = gen.permutation(n)
        # Permuting rows of B permutes rows and columns of its centered
        # distance matrix, so no recentering is needed.
        vxy = np.vdot(CA, CB[np.ix_(perm, perm)]) / n2
        stat = float(np.sqrt(max(vxy, 0.0) / denom))
        if stat >= observed:
            exceed += 1
    p = (1.0 + exceed) / (1.0 + n_permutations)
    return DependenceResult(dcor=observed, p_value=p, n_permutations=n_permutations)

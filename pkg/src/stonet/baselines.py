"""Linear dimension-reduction baselines: PCA and sliced inverse regression.

Both follow the scikit-learn estimator protocol (``fit`` / ``transform`` /
``get_params``) so they can slot into pipelines next to the stochastic
network reducer.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .numerics import sym_eig
from .validation import as_labels, as_matrix, check_consistent_rows

REDUCER_FORMAT_VERSION = 1


class PCAReducer(BaseEstimator, TransformerMixin):
    """Project onto the top principal components of the sample covariance.

    Parameters
    ----------
    q : int
        Number of components to keep.
    """

    def __init__(self, q: int = 2):
        self.q = q

    def fit(self, X, y=None):
        X = as_matrix(X, "X", min_rows=2)
        n, p = X.shape
        if self.q > p:
            raise ValueError(f"q={self.q} exceeds the number of features {p}")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        self.center_ = X.mean(axis=0)
        Xc = X - self.center_
        cov = Xc.T @ Xc / (n - 1)
        eigvals, eigvecs = sym_eig(cov)
        self.eigenvalues_ = eigvals
        self.projection_ = eigvecs[:, : self.q]
        total = eigvals.sum()
        self.explained_variance_ratio_ = (
            eigvals[: self.q] / total if total > 0 else np.zeros(self.q)
        )
        return self

    def transform(self, X):
        X = as_matrix(X, "X")
        if X.shape[1] != self.center_.shape[0]:
            raise ValueError(
                f"X has {X.shape[1]} columns, reducer was fit with "
                f"{self.center_.shape[0]}"
            )
        return (X - self.center_) @ self.projection_

    @property
    def directions_(self) -> np.ndarray:
        """Projection directions in the original coordinates (p x q)."""
        return self.projection_


class SIRReducer(BaseEstimator, TransformerMixin):
    """Sliced inverse regression via the slice-mean eigendecomposition.

    Whitens the predictors, slices the response (by quantiles for a
    continuous response, by class for an integer/categorical one), and
    eigendecomposes the proportion-weighted outer products of the slice
    means of the whitened predictors.

    Parameters
    ----------
    q : int
        Number of directions to keep.
    n_slices : int
        Number of response slices for a continuous response.
    ridge : float
        Relative ridge added to a (near-)singular covariance before
        whitening, as a fraction of ``trace/p``.
    """

    def __init__(self, q: int = 2, n_slices: int = 10, ridge: float = 1e-8):
        self.q = q
        self.n_slices = n_slices
        self.ridge = ridge

    def _slice_indices(self, y: np.ndarray) -> list[np.ndarray]:
        if np.issubdtype(y.dtype, np.integer):
            return [np.flatnonzero(y == c) for c in np.unique(y)]
        order = np.argsort(y, kind="stable")
        return [
            chunk for chunk in np.array_split(order, self.n_slices) if len(chunk) > 0
        ]

    def fit(self, X, y):
        X = as_matrix(X, "X", min_rows=2)
        yarr = np.asarray(y)
        if yarr.ndim == 2 and yarr.shape[1] == 1:
            yarr = yarr[:, 0]
        if yarr.ndim != 1:
            raise ValueError("SIR needs a one-dimensional response")
        check_consistent_rows(X, yarr[:, None], names=("X", "y"))
        n, p = X.shape
        if self.q > p:
            raise ValueError(f"q={self.q} exceeds the number of features {p}")
        if self.n_slices < 2:
            raise ValueError("n_slices must be >= 2")
        if np.issubdtype(yarr.dtype, np.integer) or np.issubdtype(yarr.dtype, np.bool_):
            yarr = as_labels(yarr, "y")

        self.center_ = X.mean(axis=0)
        Xc = X - self.center_
        cov = Xc.T @ Xc / (n - 1)
        eigvals, eigvecs = sym_eig(cov)
        jitter = 0.0
        floor = 1e-12 * max(eigvals.max(), 1.0)
        if eigvals.min() <= floor:
            jitter = self.ridge * np.trace(cov) / p
            eigvals, eigvecs = sym_eig(cov + jitter * np.eye(p))
        self.whitening_jitter_ = jitter
        self.whitener_ = eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T

        Xw = Xc @ self.whitener_
        M = np.zeros((p, p))
        slices = self._slice_indices(yarr)
        if len(slices) < 2:
            raise ValueError("response produced fewer than 2 usable slices")
        for idx in slices:
            m = Xw[idx].mean(axis=0)
            M += (len(idx) / n) * np.outer(m, m)
        slice_eigvals, slice_eigvecs = sym_eig(M)
        self.slice_eigenvalues_ = slice_eigvals
        self.projection_ = slice_eigvecs[:, : self.q]
        return self

    def transform(self, X):
        X = as_matrix(X, "X")
        if X.shape[1] != self.center_.shape[0]:
            raise ValueError(
                f"X has {X.shape[1]} columns, reducer was fit with "
                f"{self.center_.shape[0]}"
            )
        return (X - self.center_) @ self.whitener_ @ self.projection_

    @property
    def directions_(self) -> np.ndarray:
        """Effective directions in the original coordinates (p x q):
        whitener composed with the orthonormal whitened-space projection."""
        return self.whitener_ @ self.projection_


def save_reducer(path, reducer) -> None:
    """Write a fitted reducer as versioned JSON (same layout as the network
    parameter files: a header plus named arrays)."""
    if isinstance(reducer, PCAReducer):
        method = "pca"
        arrays = {
            "projection": reducer.projection_.tolist(),
            "center": reducer.center_.tolist(),
            "eigenvalues": reducer.eigenvalues_.tolist(),
        }
        params = {"q": reducer.q}
    elif isinstance(reducer, SIRReducer):
        method = "sir"
        arrays = {
            "projection": reducer.projection_.tolist(),
            "center": reducer.center_.tolist(),
            "whitener": reducer.whitener_.tolist(),
            "slice_eigenvalues": reducer.slice_eigenvalues_.tolist(),
        }
        params = {
            "q": reducer.q,
            "n_slices": reducer.n_slices,
            "ridge": reducer.ridge,
            "whitening_jitter": reducer.whitening_jitter_,
        }
    else:
        raise TypeError(f"unsupported reducer type {type(reducer).__name__}")
    doc = {
        "format_version": REDUCER_FORMAT_VERSION,
        "method": method,
        "params": params,
        "arrays": arrays,
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_reducer(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != REDUCER_FORMAT_VERSION:
        raise ValueError(
            f"unsupported reducer file version: {doc.get('format_version')!r}"
        )
    arrays = {k: np.asarray(v) for k, v in doc["arrays"].items()}
    params = doc["params"]
    if doc["method"] == "pca":
        red = PCAReducer(q=params["q"])
        red.projection_ = arrays["projection"]
        red.center_ = arrays["center"]
        red.eigenvalues_ = arrays["eigenvalues"]
        total = red.eigenvalues_.sum()
        red.explained_variance_ratio_ = (
            red.eigenvalues_[: red.q] / total if total > 0 else np.zeros(red.q)
        )
        return red
    if doc["method"] == "sir":
        red = SIRReducer(
            q=params["q"], n_slices=params["n_slices"], ridge=params["ridge"]
        )
        red.projection_ = arrays["projection"]
        red.center_ = arrays["center"]
        red.whitener_ = arrays["whitener"]
        red.slice_eigenvalues_ = arrays["slice_eigenvalues"]
        red.whitening_jitter_ = params["whitening_jitter"]
        return red
    raise ValueError(f"unknown reducer method {doc['method']!r}")

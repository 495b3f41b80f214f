"""Downstream prediction heads and evaluation metrics.

The heads consume reduced features: ordinary least squares for regression
and a multinomial logistic model for classification.  The logistic model is
fit by damped Newton iterations on the penalized log-likelihood with a
small L2 stabilizer (1e-4 by default) on the non-intercept weights, which
keeps the optimum finite under perfect separation.  The last class's
weights are pinned at zero to remove the softmax gauge freedom.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin

from .errors import DegenerateInputError
from .validation import as_labels, as_matrix, check_consistent_rows

HEAD_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Metrics:
    """Evaluation metrics; fields irrelevant to the task are None.

    ``pearson_r`` is None with ``pearson_degenerate=True`` when predictions
    are constant (the correlation is undefined, not NaN).
    """

    misclassification_rate: float | None = None
    mse: float | None = None
    pearson_r: float | None = None
    pearson_degenerate: bool = False

    def to_dict(self) -> dict:
        out = {}
        if self.misclassification_rate is not None:
            out["misclassification"] = self.misclassification_rate
        if self.mse is not None:
            out["mse"] = self.mse
        if self.pearson_r is not None:
            out["pearson_r"] = self.pearson_r
        return out


def _design(Z: np.ndarray) -> np.ndarray:
    return np.hstack([Z, np.ones((Z.shape[0], 1))])


class LinearHead(BaseEstimator, RegressorMixin):
    """Least-squares regression head.

    Weights have shape ``(q+1, d_out)`` with the intercept as the last row.
    A rank-deficient design falls back to a ridge solve whose jitter is
    recorded in ``fit_meta_``.
    """

    def __init__(self, ridge_fallback: float = 1e-8):
        self.ridge_fallback = ridge_fallback

    def fit(self, Z, y):
        Z = as_matrix(Z, "Z")
        Y = as_matrix(y, "y")
        check_consistent_rows(Z, Y, names=("Z", "y"))
        n, q = Z.shape
        if n <= q:
            raise ValueError(f"need more observations than features: n={n}, q={q}")
        D = _design(Z)
        rank = np.linalg.matrix_rank(D)
        jitter = 0.0
        if rank < D.shape[1]:
            jitter = self.ridge_fallback * max(np.trace(D.T @ D) / D.shape[1], 1.0)
            W = np.linalg.solve(D.T @ D + jitter * np.eye(D.shape[1]), D.T @ Y)
        else:
            W, *_ = np.linalg.lstsq(D, Y, rcond=None)
        self.weights_ = W
        self.fit_meta_ = {"rank": int(rank), "ridge_jitter": jitter}
        return self

    def predict(self, Z) -> np.ndarray:
        Z = as_matrix(Z, "Z")
        return _design(Z) @ self.weights_


class LogisticHead(BaseEstimator, ClassifierMixin):
    """Multinomial logistic regression head fit by damped Newton.

    Parameters
    ----------
    l2 : float
        L2 stabilizer on the non-intercept weights.
    max_iter : int
        Newton iteration cap; non-convergence sets ``converged_ = False``
        instead of raising.
    tol : float
        Gradient-norm stopping threshold.
    """

    def __init__(self, l2: float = 1e-4, max_iter: int = 200, tol: float = 1e-8):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def _probs(self, D: np.ndarray, W: np.ndarray) -> np.ndarray:
        # W has shape ((q+1), C-1); last class logits pinned at 0.
        logits = np.hstack([D @ W, np.zeros((D.shape[0], 1))])
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        return p

    def _objective(self, D, onehot, W) -> float:
        logits = np.hstack([D @ W, np.zeros((D.shape[0], 1))])
        m = logits.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
        loglik = ((logits * onehot).sum(axis=1) - lse).sum()
        penalty = 0.5 * self.l2 * np.sum(W[:-1] ** 2)
        return float(-loglik + penalty)

    def fit(self, Z, y):
        Z = as_matrix(Z, "Z")
        labels = as_labels(y, "y")
        check_consistent_rows(Z, labels[:, None], names=("Z", "y"))
        classes = np.unique(labels)
        if classes.size < 2:
            raise ValueError("need at least 2 classes present")
        self.classes_ = classes
        index_of = {c: i for i, c in enumerate(classes)}
        yi = np.array([index_of[c] for c in labels])
        n, q = Z.shape
        C = classes.size
        D = _design(Z)
        onehot = np.zeros((n, C))
        onehot[np.arange(n), yi] = 1.0

        dim = q + 1
        W = np.zeros((dim, C - 1))
        penalty_mask = np.ones(dim)
        penalty_mask[-1] = 0.0  # intercept unpenalized

        converged = False
        obj = self._objective(D, onehot, W)
        objective_path = [obj]
        it = 0
        for it in range(1, self.max_iter + 1):
            P = self._probs(D, W)
            G = D.T @ (P[:, :-1] - onehot[:, :-1]) + self.l2 * (
                W * penalty_mask[:, None]
            )
            gnorm = float(np.sqrt(np.sum(G * G)))
            if gnorm < self.tol:
                converged = True
                break
            # Full multinomial Hessian over the C-1 free blocks.
            K = dim * (C - 1)
            H = np.zeros((K, K))
            for a in range(C - 1):
                for b in range(C - 1):
                    wab = P[:, a] * ((1.0 if a == b else 0.0) - P[:, b])
                    H[a * dim : (a + 1) * dim, b * dim : (b + 1) * dim] = (
                        D.T * wab
                    ) @ D
            H += self.l2 * np.diag(np.tile(penalty_mask, C - 1))
            H += 1e-10 * np.eye(K)
            step = np.linalg.solve(H, G.T.reshape(-1))
            step = step.reshape(C - 1, dim).T
            # Damping: halve until the objective does not increase.
            t = 1.0
            for _ in range(50):
                W_new = W - t * step
                obj_new = self._objective(D, onehot, W_new)
                if obj_new <= obj + 1e-12:
                    break
                t *= 0.5
            W, obj = W_new, obj_new
            objective_path.append(obj)
        self.weights_ = np.hstack([W, np.zeros((dim, 1))])
        self.converged_ = converged
        self.n_iter_ = it
        self.final_objective_ = obj
        self.objective_path_ = objective_path
        self.fit_meta_ = {
            "iterations": it,
            "final_objective": obj,
            "converged": converged,
        }
        if not converged:
            import warnings

            warnings.warn(
                f"logistic head did not reach tol={self.tol} in "
                f"{self.max_iter} iterations",
                RuntimeWarning,
                stacklevel=2,
            )
        return self

    def decision_function(self, Z) -> np.ndarray:
        Z = as_matrix(Z, "Z")
        return _design(Z) @ self.weights_

    def predict_proba(self, Z) -> np.ndarray:
        logits = self.decision_function(Z)
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        return p

    def predict(self, Z) -> np.ndarray:
        return self.classes_[np.argmax(self.decision_function(Z), axis=1)]


def save_head(path, head) -> None:
    """Write a fitted head as versioned JSON (header plus weight array)."""
    if isinstance(head, LinearHead):
        doc = {
            "format_version": HEAD_FORMAT_VERSION,
            "kind": "linear",
            "weights": head.weights_.tolist(),
            "fit_meta": head.fit_meta_,
        }
    elif isinstance(head, LogisticHead):
        doc = {
            "format_version": HEAD_FORMAT_VERSION,
            "kind": "logistic",
            "weights": head.weights_.tolist(),
            "classes": head.classes_.tolist(),
            "params": {"l2": head.l2, "max_iter": head.max_iter, "tol": head.tol},
            "fit_meta": head.fit_meta_,
        }
    else:
        raise TypeError(f"unsupported head type {type(head).__name__}")
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_head(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != HEAD_FORMAT_VERSION:
        raise ValueError(
            f"unsupported head file version: {doc.get('format_version')!r}"
        )
    if doc["kind"] == "linear":
        head = LinearHead()
        head.weights_ = np.asarray(doc["weights"])
        head.fit_meta_ = doc["fit_meta"]
        return head
    if doc["kind"] == "logistic":
        head = LogisticHead(**doc["params"])
        head.weights_ = np.asarray(doc["weights"])
        head.classes_ = np.asarray(doc["classes"], dtype=np.int64)
        head.fit_meta_ = doc["fit_meta"]
        head.converged_ = bool(doc["fit_meta"].get("converged", True))
        return head
    raise ValueError(f"unknown head kind {doc['kind']!r}")


def pearson_correlation(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        raise DegenerateInputError("correlation undefined for constant input")
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def evaluate(head, Z_test, y_test) -> Metrics:
    """Score a fitted head on held-out features.

    Classification heads report the misclassification rate; regression
    heads report mean squared error and the Pearson correlation between
    prediction and truth (first response column for multi-output).
    """
    Z_test = as_matrix(Z_test, "Z_test")
    if isinstance(head, LogisticHead):
        labels = as_labels(y_test, "y_test")
        check_consistent_rows(Z_test, labels[:, None], names=("Z_test", "y_test"))
        pred = head.predict(Z_test)
        rate = float(np.mean(pred != labels))
        return Metrics(misclassification_rate=rate)
    Y = as_matrix(y_test, "y_test")
    check_consistent_rows(Z_test, Y, names=("Z_test", "y_test"))
    pred = head.predict(Z_test)
    mse = float(np.mean((pred - Y) ** 2))
    try:
        r = pearson_correlation(pred[:, 0], Y[:, 0])
        return Metrics(mse=mse, pearson_r=r)
    except DegenerateInputError:
        return Metrics(mse=mse, pearson_r=None, pearson_degenerate=True)

"""Small input-validation helpers used by the estimators and core routines."""

from __future__ import annotations

import numpy as np


def as_matrix(X, name: str = "X", min_rows: int = 1, dtype=np.float64) -> np.ndarray:
    """Coerce ``X`` to a 2-D float array and check it is finite."""
    A = np.asarray(X, dtype=dtype)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={A.ndim}")
    if A.shape[0] < min_rows:
        raise ValueError(f"{name} needs at least {min_rows} rows, got {A.shape[0]}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def as_vector(v, name: str = "v", dtype=np.float64) -> np.ndarray:
    A = np.asarray(v, dtype=dtype)
    if A.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def as_labels(y, name: str = "y") -> np.ndarray:
    """Coerce class labels to a 1-D int array."""
    a = np.asarray(y)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got ndim={a.ndim}")
    if not np.issubdtype(a.dtype, np.integer):
        rounded = np.rint(np.asarray(a, dtype=np.float64))
        if not np.allclose(a, rounded):
            raise ValueError(f"{name} must hold integer class labels")
        a = rounded.astype(np.int64)
    return a.astype(np.int64)


def check_consistent_rows(*arrays, names: tuple[str, ...] = ()) -> None:
    lengths = [a.shape[0] for a in arrays]
    if len(set(lengths)) > 1:
        labels = names if names else tuple(f"arg{i}" for i in range(len(arrays)))
        detail = ", ".join(f"{n}={l}" for n, l in zip(labels, lengths))
        raise ValueError(f"inconsistent number of rows: {detail}")


def check_positive(value: float, name: str) -> float:
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)

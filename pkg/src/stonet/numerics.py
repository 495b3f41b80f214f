"""Seeded random streams, distribution samplers, standardization, eigensolver.

Randomness is organized around :class:`RngStream`, an immutable value
identifying a counter-based substream of a 64-bit seed.  Two streams with
equal ``(seed, stream_id)`` produce identical draws; distinct ``stream_id``
values select statistically independent Philox substreams, so derived
streams can be consumed in any order (or in parallel) without changing
results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .validation import as_matrix, check_positive

_MASK64 = (1 << 64) - 1


def _mix64(a: int, b: int) -> int:
    """splitmix64-style mixing of two 64-bit words into one."""
    x = (a * 0x9E3779B97F4A7C15 + b + 0x632BE59BD9B4E019) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


@dataclass(frozen=True)
class RngStream:
    """Value identifying one deterministic random substream.

    Parameters
    ----------
    seed : int
        Base 64-bit seed shared by all substreams of a run.
    stream_id : int
        Substream selector.  Derive fresh substreams with :meth:`child`
        rather than picking ids by hand.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """A fresh generator keyed by ``(seed, stream_id)``.

        Each call restarts the substream, so a sampler invoked twice with
        the same stream value returns identical output.
        """
        key = np.array(
            [self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64
        )
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RngStream":
        """Independent substream derived from this one.

        Children with distinct indices are independent of each other and
        of the parent; the derivation is order-independent.
        """
        return RngStream(self.seed, _mix64(self.stream_id & _MASK64, index & _MASK64))


@dataclass(frozen=True)
class StandardizationStats:
    """Column means and scales recorded by :func:`standardize_columns`.

    Scales use the population (divide-by-n) convention.  Constant columns
    are recorded with scale 1 so the transform never divides by zero.
    """

    means: np.ndarray
    std_devs: np.ndarray
    constant_columns: np.ndarray = field(default=None)

    def apply(self, X) -> np.ndarray:
        X = as_matrix(X, "X")
        Z = (X - self.means) / self.std_devs
        if self.constant_columns is not None and self.constant_columns.any():
            Z[:, self.constant_columns] = 0.0
        return Z

    def invert(self, Z) -> np.ndarray:
        Z = as_matrix(Z, "Z")
        X = Z * self.std_devs + self.means
        if self.constant_columns is not None and self.constant_columns.any():
            X[:, self.constant_columns] = self.means[self.constant_columns]
        return X

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "std_devs": self.std_devs.tolist(),
            "constant_columns": (
                self.constant_columns.tolist()
                if self.constant_columns is not None
                else None
            ),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        const = d.get("constant_columns")
        return cls(
            means=np.asarray(d["means"], dtype=np.float64),
            std_devs=np.asarray(d["std_devs"], dtype=np.float64),
            constant_columns=(
                np.asarray(const, dtype=bool) if const is not None else None
            ),
        )


def sample_gaussian_vec(stream: RngStream, dim: int, sigma: float) -> np.ndarray:
    """Draw ``dim`` i.i.d. N(0, sigma^2) values, deterministic given the stream."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    check_positive(sigma, "sigma")
    return stream.generator().normal(0.0, sigma, size=dim)


def sample_generalized_gaussian(
    stream: RngStream, scale: float, shape: float, size: int | None = None
):
    """Sample from the symmetric density proportional to exp(-(|x|/scale)^shape).

    Uses the exact gamma-power construction: ``X = sign * scale * G**(1/shape)``
    with ``G ~ Gamma(1/shape, 1)`` and an independent uniform sign, which is
    rejection-free for every positive shape.

    Returns a scalar when ``size`` is None, otherwise an array of draws.
    """
    check_positive(scale, "scale")
    check_positive(shape, "shape")
    gen = stream.generator()
    n = 1 if size is None else int(size)
    g = gen.gamma(1.0 / shape, 1.0, size=n)
    sign = np.where(gen.random(n) < 0.5, -1.0, 1.0)
    x = sign * scale * g ** (1.0 / shape)
    return float(x[0]) if size is None else x


def generalized_gaussian_variance(scale: float, shape: float) -> float:
    """Closed-form variance scale^2 * Gamma(3/shape) / Gamma(1/shape)."""
    return scale**2 * math.gamma(3.0 / shape) / math.gamma(1.0 / shape)


def standardize_columns(X) -> tuple[np.ndarray, StandardizationStats]:
    """Center and scale columns to zero mean and unit population variance.

    Constant columns are mapped to zeros and recorded with scale 1.  The
    inverse transform (``stats.invert``) recovers the input to floating
    point accuracy.
    """
    X = as_matrix(X, "X", min_rows=2)
    means = X.mean(axis=0)
    stds = X.std(axis=0)  # population convention (divide by n)
    constant = stds == 0.0
    safe = np.where(constant, 1.0, stds)
    stats = StandardizationStats(means=means, std_devs=safe, constant_columns=constant)
    return stats.apply(X), stats


def sym_eig(A) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(eigenvalues, eigenvectors)`` with orthonormal eigenvector
    columns ordered by descending eigenvalue.  Raises ``ValueError`` if the
    input is asymmetric beyond 1e-10 absolute tolerance.
    """
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if not np.allclose(A, A.T, atol=1e-10, rtol=0.0):
        raise ValueError("A is not symmetric within 1e-10 absolute tolerance")
    w, V = np.linalg.eigh((A + A.T) / 2.0)
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]

"""Dense linear-algebra helpers, percentiles and seeded random streams."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "ConvergenceError",
    "RngStream",
    "frobenius_norm",
    "percentile_nearest_rank",
    "row_max_l1",
    "spectral_norm",
]


class ConvergenceError(RuntimeError):
    """Power iteration ran out of iterations; ``estimate`` holds the last iterate."""

    def __init__(self, message: str, estimate: float, vector: np.ndarray):
        super().__init__(message)
        self.estimate = estimate
        self.vector = vector


def _as_matrix(M) -> np.ndarray:
    A = np.asarray(M, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    return A


def spectral_norm(M, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value of ``M`` by power iteration.

    Iterates on the smaller of ``MᵀM`` / ``MMᵀ`` (same nonzero spectrum) from the
    normalized all-ones vector. Stops once the relative change of the Rayleigh
    quotient drops below ``tol``.
    """
    A = _as_matrix(M)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if A.size == 0 or not np.any(A):
        return 0.0
    scale = float(np.abs(A).max())  # keeps the Gram matrix clear of under/overflow
    A = A / scale
    G = A.T @ A if A.shape[1] <= A.shape[0] else A @ A.T
    n = G.shape[0]
    v = np.full(n, 1.0 / math.sqrt(n))
    w = G @ v
    if not np.any(w):
        # all-ones start lies in the null space; fall back to the heaviest column
        v = np.zeros(n)
        v[int(np.argmax(np.abs(G).sum(axis=0)))] = 1.0
        w = G @ v
    lam = float(v @ w)
    for _ in range(max_iter):
        norm_w = np.linalg.norm(w)
        v = w / norm_w
        w = G @ v
        lam_new = float(v @ w)
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return scale * math.sqrt(max(lam_new, 0.0))
        lam = lam_new
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations",
        scale * math.sqrt(max(lam, 0.0)),
        v,
    )


def frobenius_norm(M) -> float:
    A = _as_matrix(M)
    return float(math.sqrt(np.sum(A * A)))


def row_max_l1(M) -> float:
    """``max_i sum_j |M_ij|``, the maximum row l1-norm."""
    A = _as_matrix(M)
    if A.shape[0] == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(A), axis=1)))


def percentile_nearest_rank(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ``ceil(q/100 * n)``-th smallest value.

    ``q`` is interpreted by its decimal literal so that, e.g., ``q=0.1`` on 1000
    values selects the first element rather than the second.
    """
    vals = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = vals.size
    if n == 0:
        raise ValueError("percentile of an empty list")
    if not 0 < q <= 100:
        raise ValueError("q must lie in (0, 100]")
    rank = math.ceil(Fraction(repr(float(q))) * n / 100)
    return float(vals[max(rank, 1) - 1])


class RngStream:
    """Counter-based (Philox) random stream keyed by ``(seed, stream_id)``.

    Equal keys give identical sequences; distinct stream ids give independent
    streams. Common draw methods of :class:`numpy.random.Generator` are
    forwarded. Not meant to be shared between owners.
    """

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = np.array([self.seed & self._MASK, self.stream_id & self._MASK], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def integers(self, *args, **kwargs):
        return self.generator.integers(*args, **kwargs)

    def normal(self, *args, **kwargs):
        return self.generator.normal(*args, **kwargs)

    def uniform(self, *args, **kwargs):
        return self.generator.uniform(*args, **kwargs)

    def random(self, *args, **kwargs):
        return self.generator.random(*args, **kwargs)

    def permutation(self, *args, **kwargs):
        return self.generator.permutation(*args, **kwargs)

    def standard_normal(self, *args, **kwargs):
        return self.generator.standard_normal(*args, **kwargs)

"""Normal-distribution special functions, small dense least squares, seeded streams.

Everything here is pure: no module state, no hidden RNG.  Random draws always
flow through an explicit :class:`RandomStream`, so any consumer can be
replayed bit for bit and replications can run in any order without changing
results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

__all__ = [
    "NumericalError",
    "SingularMatrixError",
    "RandomStream",
    "as_matrix",
    "as_vector",
    "std_normal_cdf",
    "std_normal_upper_tail",
    "std_normal_log_upper_tail",
    "std_normal_quantile",
    "least_squares",
    "gaussian_draws",
]

# Relative tolerance on the pivoted-QR diagonal used to declare rank loss.
RANK_RTOL = 1e-10

_SQRT2 = float(np.sqrt(2.0))
_MASK64 = (1 << 64) - 1


class NumericalError(RuntimeError):
    """A numerical routine could not certify its result."""


class SingularMatrixError(NumericalError):
    """Matrix is rank deficient at the configured relative tolerance."""


def as_vector(x, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array with at least one row and column."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _scalar_or_array(x, out):
    return float(out) if np.ndim(out) == 0 else out


def std_normal_cdf(x):
    """Standard normal CDF, evaluated through erfc so both tails keep relative accuracy."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("argument must be finite")
    return _scalar_or_array(x, 0.5 * special.erfc(-x / _SQRT2))


def std_normal_upper_tail(x):
    """P(Z > x), computed directly as a tail rather than as ``1 - cdf``."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("argument must be finite")
    return _scalar_or_array(x, 0.5 * special.erfc(x / _SQRT2))


def std_normal_log_upper_tail(x):
    """log P(Z > x); stable arbitrarily far into the upper tail."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("argument must be finite")
    return _scalar_or_array(x, special.log_ndtr(-x))


def std_normal_quantile(q):
    """Inverse standard normal CDF on the open interval (0, 1)."""
    qa = np.asarray(q, dtype=np.float64)
    if not np.all(np.isfinite(qa)) or np.any(qa <= 0.0) or np.any(qa >= 1.0):
        raise ValueError("quantile argument must lie strictly inside (0, 1)")
    return _scalar_or_array(qa, special.ndtri(qa))


def least_squares(A, b) -> np.ndarray:
    """Least-squares coefficients of ``A @ beta ~ b`` for full-column-rank ``A``.

    Solved through a column-pivoted QR factorization; refuses to answer when
    the effective rank (relative tolerance ``RANK_RTOL`` on the R diagonal)
    falls short of the column count.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    if A.shape[0] != b.shape[0]:
        raise ValueError(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
    q, r, piv = linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    n_cols = A.shape[1]
    rank = int(np.sum(diag > RANK_RTOL * diag[0])) if diag[0] > 0.0 else 0
    if rank < n_cols:
        raise SingularMatrixError(
            f"{n_cols - rank} of {n_cols} columns are linearly dependent "
            f"at relative tolerance {RANK_RTOL:g}"
        )
    coef = np.empty(n_cols)
    coef[piv] = linalg.solve_triangular(r, q.T @ b)
    return coef


@dataclass(frozen=True)
class RandomStream:
    """Handle for one member of a keyed family of independent generators.

    Equal ``(root_seed, stream_id)`` pairs replay the same draw sequence;
    distinct ids select statistically independent counter-based (Philox)
    streams, so replications may be farmed out in any order.
    """

    root_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not isinstance(self.root_seed, (int, np.integer)) or isinstance(self.root_seed, bool):
            raise ValueError("root_seed must be an integer")
        if not isinstance(self.stream_id, (int, np.integer)) or isinstance(self.stream_id, bool):
            raise ValueError("stream_id must be an integer")
        if self.stream_id < 0:
            raise ValueError("stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array(
            [int(self.root_seed) & _MASK64, int(self.stream_id) & _MASK64],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def stream(self, stream_id: int) -> "RandomStream":
        """Sibling stream under the same root seed."""
        return RandomStream(self.root_seed, stream_id)


def gaussian_draws(stream: RandomStream, count: int) -> np.ndarray:
    """``count`` i.i.d. standard normal draws from the given stream."""
    if count < 1:
        raise ValueError("count must be at least 1")
    return stream.generator().standard_normal(int(count))

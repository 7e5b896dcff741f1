"""Sequential stopping rules that turn ordered p-values into a model size."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["StopDecision", "forward_stop", "first_exceed"]

RULES = ("forward_stop", "first_exceed")


@dataclass(frozen=True)
class StopDecision:
    """Number of initial steps to reject; ``k_hat = 0`` rejects nothing."""

    k_hat: int
    rule: str
    alpha: float
    transformed: tuple[float, ...] = ()

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.k_hat < 0:
            raise ValueError("k_hat must be non-negative")


def _checked(pvals, alpha: float) -> np.ndarray:
    arr = np.asarray(pvals, dtype=np.float64).reshape(-1)
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0.0)):
        raise ValueError("p-values must be finite and non-negative")
    if np.any(arr >= 1.0):
        raise ValueError(
            "p-values must lie in [0, 1); the transform -log(1 - p) diverges at 1 "
            "(clamp upstream if that is intended)"
        )
    if not 0.0 < float(alpha) < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    return arr


def forward_stop(pvals, alpha: float) -> StopDecision:
    """Largest k whose running mean of -log(1 - p_i) stays at or below alpha."""
    arr = _checked(pvals, alpha)
    if arr.size == 0:
        return StopDecision(k_hat=0, rule="forward_stop", alpha=float(alpha))
    y = -np.log1p(-arr)
    means = np.cumsum(y) / np.arange(1, arr.size + 1)
    hits = np.nonzero(means <= alpha)[0]
    k_hat = int(hits[-1] + 1) if hits.size else 0
    return StopDecision(k_hat=k_hat, rule="forward_stop", alpha=float(alpha),
                        transformed=tuple(float(v) for v in y))


def first_exceed(pvals, alpha: float) -> StopDecision:
    """Number of leading p-values before the first one above alpha."""
    arr = _checked(pvals, alpha)
    if arr.size == 0:
        return StopDecision(k_hat=0, rule="first_exceed", alpha=float(alpha))
    above = np.nonzero(arr > alpha)[0]
    k_hat = int(above[0]) if above.size else int(arr.size)
    return StopDecision(k_hat=k_hat, rule="first_exceed", alpha=float(alpha))

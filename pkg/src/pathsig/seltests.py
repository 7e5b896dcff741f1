"""Sequential significance statistics and p-values along the selection path.

Step indices are 1-based throughout: step k tests the variable entering at
the k-th knot, and always needs the following knot, so valid steps run from 1
to ``trace.n_steps - 1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import numkit
from .lasso_path import candidate_directions, lasso_at, restricted_lasso
from .numkit import NumericalError, RandomStream

__all__ = [
    "METHODS",
    "DegenerateKnotError",
    "EstimationError",
    "TestOutcome",
    "ExtremeValueConstants",
    "cov_stat_fit_form",
    "criterion_diff_stat",
    "cov_stat_knot_form",
    "infer_knot_constant",
    "cov_pvalue",
    "spacing_pvalue",
    "tmax_mc_pvalue",
    "tmax_conditional_pvalue",
    "gumbel_pvalue",
    "gap_stat",
]

METHODS = ("covariance", "spacing", "tmax", "tmax_conditional", "gumbel", "gap")
MC_METHODS = frozenset({"tmax", "tmax_conditional"})

# Statistics below this are treated as solver trouble rather than noise.
NEGATIVE_STAT_TOL = 1e-8

_MC_BLOCK = 8192


class DegenerateKnotError(ValueError):
    """Consecutive knots coincide, so the knot-form constant is not inferable."""


class EstimationError(NumericalError):
    """A Monte Carlo estimate could not be formed from the accepted draws."""


@dataclass(frozen=True)
class TestOutcome:
    """One test applied at one step of the path."""

    step: int
    method: str
    statistic: float
    pvalue: float
    mc_se: float | None = None
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 <= self.pvalue <= 1.0:
            raise ValueError(f"pvalue must lie in [0, 1], got {self.pvalue}")
        if (self.mc_se is not None) != (self.method in MC_METHODS):
            raise ValueError("mc_se must be present exactly for Monte Carlo methods")


@dataclass(frozen=True)
class ExtremeValueConstants:
    """Normalizing constants for the maximum of p absolute standard normals.

    ``centering`` is the exact upper quantile at 1 - 1/(2p); ``scaling`` is
    sqrt(2 log p).
    """

    p: int
    centering: float
    scaling: float

    @classmethod
    def for_dimension(cls, p: int) -> "ExtremeValueConstants":
        if p < 2:
            raise ValueError("p must be at least 2")
        return cls(
            p=int(p),
            centering=numkit.std_normal_quantile(1.0 - 1.0 / (2.0 * p)),
            scaling=float(np.sqrt(2.0 * np.log(p))),
        )


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma <= 0.0:
        raise ValueError("sigma must be a positive real")
    return sigma


def _knot_pair(trace, step: int) -> tuple[float, float]:
    last = trace.n_steps - 1
    if not 1 <= step <= last:
        raise ValueError(
            f"step must lie in [1, {last}] so the following knot exists, got {step}"
        )
    return float(trace.knots[step - 1]), float(trace.knots[step])


def _penalized_fits(trace, X, y, step: int):
    """Full and restricted lasso solutions at the knot after ``step``."""
    _, lam_next = _knot_pair(trace, step)
    active = trace.active_set(step)
    warm = trace.coefficients_at(lam_next)
    beta_full = lasso_at(X, y, lam_next, warm_start=warm)
    fit_full = X @ beta_full
    if active.size:
        beta_rest = restricted_lasso(X, active, y, lam_next)
        fit_rest = X[:, active] @ beta_rest
    else:
        beta_rest = np.zeros(0)
        fit_rest = np.zeros_like(y)
    return lam_next, beta_full, fit_full, beta_rest, fit_rest


def cov_stat_fit_form(trace, X, y, step: int, sigma: float) -> float:
    """Covariance statistic at a path step, from the two penalized fits.

    The difference of inner products between the response and (a) the lasso
    fit at the next knot over all columns and (b) the lasso fit restricted to
    the variables active before this step, scaled by 1/sigma^2.
    """
    sigma = _check_sigma(sigma)
    X = numkit.as_matrix(X, "X")
    y = numkit.as_vector(y, "y")
    _, _, fit_full, _, fit_rest = _penalized_fits(trace, X, y, step)
    value = float((y @ fit_full - y @ fit_rest) / sigma**2)
    if value < -NEGATIVE_STAT_TOL:
        warnings.warn(
            f"covariance statistic {value:.3e} fell below -{NEGATIVE_STAT_TOL:g}; "
            "suspect a solver problem",
            RuntimeWarning,
            stacklevel=2,
        )
    return value


def criterion_diff_stat(trace, X, y, step: int, sigma: float) -> float:
    """Difference of penalized criteria between the restricted and full fits.

    Evaluates ``||y - fit||^2 + lam * ||coef||_1`` for both solutions at the
    knot after ``step`` and returns (restricted - full) / sigma^2.  This is
    not twice the covariance statistic: the gap equals the difference of the
    squared fitted norms plus lam times the difference of the l1 norms.
    """
    sigma = _check_sigma(sigma)
    X = numkit.as_matrix(X, "X")
    y = numkit.as_vector(y, "y")
    lam, beta_full, fit_full, beta_rest, fit_rest = _penalized_fits(trace, X, y, step)
    crit_rest = float(np.sum((y - fit_rest) ** 2) + lam * np.sum(np.abs(beta_rest)))
    crit_full = float(np.sum((y - fit_full) ** 2) + lam * np.sum(np.abs(beta_full)))
    return (crit_rest - crit_full) / sigma**2


def _check_knot_gap(lam_k: float, lam_next: float) -> None:
    if lam_k - lam_next <= 1e-12 * max(lam_k, 1.0):
        raise DegenerateKnotError(
            f"knots {lam_k:g} and {lam_next:g} coincide; the per-step constant "
            "cannot be calibrated"
        )


def cov_stat_knot_form(trace, step: int, sigma: float, c: float = 1.0,
                       C: float = 1.0) -> float:
    """Knot form of the covariance statistic with an explicit shrinkage factor.

    Returns ``C * lam_k * (lam_k - c * lam_{k+1}) / sigma^2``.  With ``c = 1``
    and the constant from :func:`infer_knot_constant` this reproduces the fit
    form, and for any ``c`` the value exceeds the ``c = 1`` value by exactly
    ``(1 - c) * C * lam_k * lam_{k+1} / sigma^2``.
    """
    sigma = _check_sigma(sigma)
    c = float(c)
    if not 0.0 < c <= 1.0:
        raise ValueError("shrinkage factor c must lie in (0, 1]")
    C = float(C)
    if not np.isfinite(C) or C <= 0.0:
        raise ValueError("C must be a positive real")
    lam_k, lam_next = _knot_pair(trace, step)
    _check_knot_gap(lam_k, lam_next)
    return float(C * lam_k * (lam_k - c * lam_next) / sigma**2)


def infer_knot_constant(trace, X, y, step: int, sigma: float) -> float:
    """Constant that makes the knot form match the fit form at this step."""
    sigma = _check_sigma(sigma)
    lam_k, lam_next = _knot_pair(trace, step)
    _check_knot_gap(lam_k, lam_next)
    t = cov_stat_fit_form(trace, X, y, step, sigma)
    return float(t * sigma**2 / (lam_k * (lam_k - lam_next)))


def cov_pvalue(t: float, rate: float) -> float:
    """Exponential upper tail exp(-rate * t).

    ``rate`` is the step number when testing under the complete null, and 1
    when all signal variables are already active.
    """
    t = float(t)
    if not np.isfinite(t) or t < 0.0:
        raise ValueError("statistic must be finite and non-negative")
    rate = float(rate)
    if not np.isfinite(rate) or rate <= 0.0:
        raise ValueError("rate must be a positive real")
    return float(np.exp(-rate * t))


def spacing_pvalue(lam1: float, lam2: float, sigma: float) -> float:
    """Ratio of normal upper tails at consecutive knots, evaluated in log space.

    Both tails are computed directly (never as one minus a near-one value),
    so the ratio stays accurate arbitrarily far out.
    """
    sigma = _check_sigma(sigma)
    lam1 = float(lam1)
    lam2 = float(lam2)
    if not np.isfinite(lam1) or not np.isfinite(lam2):
        raise ValueError("knots must be finite")
    if lam2 < 0.0 or lam1 < lam2:
        raise ValueError("knots must satisfy lam1 >= lam2 >= 0")
    log_num = numkit.std_normal_log_upper_tail(lam1 / sigma)
    log_den = numkit.std_normal_log_upper_tail(lam2 / sigma)
    return float(min(np.exp(log_num - log_den), 1.0))


def tmax_mc_pvalue(X, active, observed_tmax: float, n_mc: int,
                   stream: RandomStream) -> tuple[float, float]:
    """Monte Carlo tail probability of the max-|t| statistic under pure noise.

    Draws eps ~ N(0, I_n) and computes, over the candidates outside
    ``active`` (orthogonalized against the active columns), the maximum
    absolute t value; reports the fraction exceeding ``observed_tmax``
    together with the binomial standard error of that fraction.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
    X = numkit.as_matrix(X, "X")
    observed_tmax = float(observed_tmax)
    idx, directions = candidate_directions(X, active)
    if idx.size == 0:
        raise ValueError("no usable candidate predictors outside the active set")
    rng = stream.generator()
    n = X.shape[0]
    exceed = 0
    left = int(n_mc)
    while left > 0:
        block = min(left, _MC_BLOCK)
        eps = rng.standard_normal((n, block))
        tmax = np.max(np.abs(directions.T @ eps), axis=0)
        exceed += int(np.count_nonzero(tmax > observed_tmax))
        left -= block
    phat = exceed / n_mc
    return float(phat), float(np.sqrt(phat * (1.0 - phat) / n_mc))


def tmax_conditional_pvalue(X, j_first: int, y, n_mc: int,
                            stream: RandomStream) -> tuple[float, float, float]:
    """Second-step Monte Carlo p-value conditional on the first selection.

    Simulates ``y* = X_j * bhat_j + eps`` with ``bhat_j`` the least-squares
    coefficient of ``y`` on column ``j_first`` alone, keeps only the draws for
    which that column wins the first stepwise comparison, and reports the
    exceedance fraction of the second-step max-|t|, its standard error, and
    the acceptance rate.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
    X = numkit.as_matrix(X, "X")
    y = numkit.as_vector(y, "y")
    n, p = X.shape
    j_first = int(j_first)
    if not 0 <= j_first < p:
        raise ValueError(f"j_first must lie in [0, {p - 1}]")

    idx0, dir0 = candidate_directions(X, np.zeros(0, dtype=np.intp))
    t0 = dir0.T @ y
    if int(idx0[np.argmax(np.abs(t0))]) != j_first:
        raise ValueError(f"column {j_first} was not the first-step selection for y")
    idx2, dir2 = candidate_directions(X, np.asarray([j_first], dtype=np.intp))
    if idx2.size == 0:
        raise ValueError("no usable candidate predictors beyond the first selection")
    observed = float(np.max(np.abs(dir2.T @ y)))

    xj = X[:, j_first]
    mean = xj * (float(xj @ y) / float(xj @ xj))
    rng = stream.generator()
    accepted = 0
    exceed = 0
    left = int(n_mc)
    while left > 0:
        block = min(left, _MC_BLOCK)
        ystar = mean[:, None] + rng.standard_normal((n, block))
        winners = idx0[np.argmax(np.abs(dir0.T @ ystar), axis=0)]
        keep = winners == j_first
        kept = int(np.count_nonzero(keep))
        if kept:
            accepted += kept
            t2 = np.max(np.abs(dir2.T @ ystar[:, keep]), axis=0)
            exceed += int(np.count_nonzero(t2 > observed))
        left -= block
    if accepted == 0:
        raise EstimationError(
            f"none of the {n_mc} draws selected column {j_first} first; "
            "increase n_mc"
        )
    phat = exceed / accepted
    se = float(np.sqrt(phat * (1.0 - phat) / accepted))
    return float(phat), se, accepted / n_mc


def gumbel_pvalue(U, p: int) -> TestOutcome:
    """Global-null test from the largest absolute score.

    The statistic is ``V1^2 - centering^2`` with ``V1 = max_j |U_j|``; its
    null upper tail is taken from the Gumbel law with location 0 and scale 2.
    """
    U = numkit.as_vector(U, "U")
    if int(p) != U.shape[0]:
        raise ValueError(f"p = {p} must equal the length of U ({U.shape[0]})")
    consts = ExtremeValueConstants.for_dimension(int(p))
    v1 = float(np.max(np.abs(U)))
    stat = v1**2 - consts.centering**2
    pval = float(-np.expm1(-np.exp(-stat / 2.0)))
    return TestOutcome(step=1, method="gumbel", statistic=float(stat), pvalue=pval)


def gap_stat(U, p: int) -> TestOutcome:
    """Global-null test from the gap between the two largest absolute scores.

    The statistic ``sqrt(2 log p) * (V1 - V2)`` is asymptotically standard
    exponential, so the p-value is ``exp(-statistic)``.
    """
    U = numkit.as_vector(U, "U")
    if int(p) != U.shape[0]:
        raise ValueError(f"p = {p} must equal the length of U ({U.shape[0]})")
    consts = ExtremeValueConstants.for_dimension(int(p))
    top2 = np.partition(np.abs(U), U.shape[0] - 2)[-2:]
    v2, v1 = float(top2[0]), float(top2[1])
    stat = consts.scaling * (v1 - v2)
    return TestOutcome(step=1, method="gap", statistic=float(stat),
                       pvalue=float(np.exp(-stat)))

"""Least angle regression paths, fixed-penalty lasso fits, and forward stepwise.

``lar_path`` computes the no-deletion least angle regression sequence: entry
knots, entered variables with their signs, and the piecewise-linear
coefficient segments between consecutive knots.  ``lasso_at`` is an
independent cyclic coordinate-descent solver whose KKT certificate is checked
before it returns, so path evaluations can always be validated against it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import numkit
from .numkit import NumericalError, SingularMatrixError

__all__ = [
    "ConvergenceError",
    "PathSegment",
    "PathTrace",
    "StepwiseTrace",
    "lar_path",
    "lasso_at",
    "restricted_lasso",
    "forward_stepwise",
    "candidate_directions",
]

UNIT_NORM_TOL = 1e-8
TIE_TOL = 1e-10
COLLINEAR_TOL = 1e-10
CD_TOL = 1e-10
CD_MAX_SWEEPS = 100_000


class ConvergenceError(NumericalError):
    """Coordinate descent hit its sweep cap before certifying optimality."""


def _check_unit_columns(X: np.ndarray) -> None:
    norms = np.linalg.norm(X, axis=0)
    bad = np.nonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)[0]
    if bad.size:
        raise ValueError(
            f"columns must have unit norm within {UNIT_NORM_TOL:g}; "
            f"offending columns: {bad.tolist()}"
        )


@dataclass(frozen=True)
class PathSegment:
    """One linear piece of the coefficient path.

    On ``lam_lo <= lam <= lam_hi`` the coefficients on ``active`` equal
    ``offset - lam * slope`` and every other coordinate is zero.
    """

    lam_hi: float
    lam_lo: float
    active: np.ndarray
    offset: np.ndarray
    slope: np.ndarray


@dataclass(frozen=True)
class PathTrace:
    """Knots, entries, signs, and coefficient segments of a no-deletion path.

    Steps are numbered from 1.  ``knots[k-1]`` is the penalty at which the
    k-th variable enters; ``active_set(k)`` is the set active *before* that
    entry.  Segments cover penalties from ``lambda_floor`` (the next entry
    knot after the last computed step, or zero) up to the first knot.
    """

    knots: np.ndarray
    entered: np.ndarray
    signs: np.ndarray
    n_features: int
    segments: tuple[PathSegment, ...]
    lambda_floor: float
    tie_steps: tuple[int, ...] = ()

    @property
    def n_steps(self) -> int:
        return int(self.knots.shape[0])

    def active_set(self, step: int) -> np.ndarray:
        """Variables active before the 1-based ``step`` enters."""
        if not 1 <= step <= self.n_steps:
            raise ValueError(f"step must lie in [1, {self.n_steps}], got {step}")
        return self.entered[: step - 1].copy()

    @property
    def active_sets(self) -> list[np.ndarray]:
        return [self.active_set(k) for k in range(1, self.n_steps + 1)]

    def coefficients_at(self, lam: float) -> np.ndarray:
        """Coefficient vector at penalty ``lam`` within the computed range."""
        lam = float(lam)
        if not np.isfinite(lam) or lam < 0.0:
            raise ValueError("lambda must be finite and non-negative")
        beta = np.zeros(self.n_features)
        if self.n_steps == 0 or lam >= self.knots[0]:
            return beta
        if lam < self.lambda_floor - 1e-12:
            raise ValueError(
                f"lambda {lam:g} is below the computed range "
                f"[{self.lambda_floor:g}, {self.knots[0]:g}]"
            )
        for seg in self.segments:
            if lam >= seg.lam_lo - 1e-12:
                beta[seg.active] = seg.offset - lam * seg.slope
                return beta
        # Only reachable through floating slack at the floor itself.
        seg = self.segments[-1]
        beta[seg.active] = seg.offset - lam * seg.slope
        return beta


def _active_solution(X: np.ndarray, active: list[int], signs: np.ndarray, y: np.ndarray):
    """Offset and slope of the linear coefficient piece on the active set."""
    Xa = X[:, active]
    q, r = linalg.qr(Xa, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.min() <= numkit.RANK_RTOL * diag.max():
        raise SingularMatrixError(
            f"active set {active} is rank deficient; cannot continue the path"
        )
    offset = linalg.solve_triangular(r, q.T @ y)
    slope = linalg.solve_triangular(r, linalg.solve_triangular(r.T, signs, lower=True))
    return offset, slope


def _next_entry(r_vec, w_vec, active_mask, lam_prev):
    """Largest positive crossing of |c_j(lam)| = lam over inactive j.

    Inactive correlations are linear between knots, c_j(lam) = r_j + lam*w_j,
    so each j crosses the two boundaries at r_j/(1-w_j) and -r_j/(1+w_j).
    Returns (lam, j, sign, tied) or None when no valid crossing remains.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        cand_plus = np.where(np.abs(1.0 - w_vec) > 1e-14, r_vec / (1.0 - w_vec), -np.inf)
        cand_minus = np.where(np.abs(1.0 + w_vec) > 1e-14, -r_vec / (1.0 + w_vec), -np.inf)
    upper = np.inf if not np.isfinite(lam_prev) else lam_prev * (1.0 + 1e-10) + 1e-12
    for cand in (cand_plus, cand_minus):
        cand[active_mask] = -np.inf
        cand[~np.isfinite(cand)] = -np.inf
        cand[(cand <= 0.0) | (cand > upper)] = -np.inf
    per_col = np.maximum(cand_plus, cand_minus)
    best = per_col.max()
    if not np.isfinite(best):
        return None
    near = np.nonzero(per_col >= best - TIE_TOL)[0]
    j = int(near[0])
    tied = near.size > 1
    sign = 1 if cand_plus[j] >= cand_minus[j] else -1
    lam = float(per_col[j])
    if np.isfinite(lam_prev):
        lam = min(lam, float(lam_prev))
    return lam, j, sign, tied


def lar_path(X, y, max_steps: int) -> PathTrace:
    """No-deletion least angle regression path for unit-norm predictors.

    The first knot is ``max_j |<X_j, y>|``.  Between consecutive knots the
    active coefficients move linearly so that every active correlation stays
    equal to ``lam`` times its entry sign.  Exact ties at a knot are broken
    toward the lowest column index and recorded in ``tie_steps``.
    """
    X = numkit.as_matrix(X, "X")
    y = numkit.as_vector(y, "y")
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has length {y.shape[0]}")
    limit = min(n - 1, p)
    if not 1 <= max_steps <= limit:
        raise ValueError(f"max_steps must lie in [1, min(rows - 1, cols)] = [1, {limit}]")
    _check_unit_columns(X)

    xty = X.T @ y
    knots: list[float] = []
    entered: list[int] = []
    signs: list[int] = []
    segments: list[PathSegment] = []
    tie_steps: list[int] = []

    active: list[int] = []
    sign_list: list[float] = []
    active_mask = np.zeros(p, dtype=bool)

    r_vec = xty.copy()
    w_vec = np.zeros(p)
    lam_prev = np.inf
    pending = None  # (lam_hi, active snapshot, offset, slope) awaiting its lower knot

    while len(entered) < max_steps:
        found = _next_entry(r_vec, w_vec, active_mask, lam_prev)
        if found is None:
            break
        lam_new, j_new, s_new, tied = found
        if pending is not None:
            lam_hi, act, off, slo = pending
            segments.append(PathSegment(lam_hi, lam_new, act, off, slo))
        step = len(entered) + 1
        if tied:
            tie_steps.append(step)
        knots.append(lam_new)
        entered.append(j_new)
        signs.append(s_new)
        active.append(j_new)
        sign_list.append(float(s_new))
        active_mask[j_new] = True

        sign_arr = np.asarray(sign_list)
        offset, slope = _active_solution(X, active, sign_arr, y)
        fit_offset = X[:, active] @ offset
        fit_slope = X[:, active] @ slope
        r_vec = xty - X.T @ fit_offset
        w_vec = X.T @ fit_slope
        pending = (lam_new, np.asarray(active, dtype=np.intp), offset, slope)
        lam_prev = lam_new

    if pending is not None:
        tail = _next_entry(r_vec, w_vec, active_mask, lam_prev)
        lam_floor = 0.0 if tail is None else tail[0]
        lam_hi, act, off, slo = pending
        segments.append(PathSegment(lam_hi, lam_floor, act, off, slo))
    else:
        lam_floor = 0.0

    return PathTrace(
        knots=np.asarray(knots),
        entered=np.asarray(entered, dtype=np.intp),
        signs=np.asarray(signs, dtype=np.intp),
        n_features=p,
        segments=tuple(segments),
        lambda_floor=float(lam_floor),
        tie_steps=tuple(tie_steps),
    )


def _soft_threshold(z: float, lam: float) -> float:
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def _kkt_gap(corr: np.ndarray, beta: np.ndarray, lam: float) -> float:
    """Largest violation of the stationarity conditions at ``beta``."""
    nonzero = beta != 0.0
    gap = 0.0
    if np.any(nonzero):
        gap = float(np.max(np.abs(corr[nonzero] - lam * np.sign(beta[nonzero]))))
    if np.any(~nonzero):
        gap = max(gap, float(np.max(np.abs(corr[~nonzero])) - lam))
    return max(gap, 0.0)


def lasso_at(X, y, lam, *, warm_start=None, tol: float = CD_TOL,
             max_sweeps: int = CD_MAX_SWEEPS) -> np.ndarray:
    """Lasso solution at a fixed penalty by cyclic coordinate descent.

    Minimizes ``0.5 * ||y - X @ beta||^2 + lam * ||beta||_1`` for unit-norm
    columns.  The solver returns only after the KKT conditions hold within
    ``tol``: inactive correlations below ``lam``, active correlations equal to
    ``lam`` times the coefficient sign.  ``warm_start`` only changes the
    starting point, never the certificate.
    """
    X = numkit.as_matrix(X, "X")
    y = numkit.as_vector(y, "y")
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has length {y.shape[0]}")
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0.0:
        raise ValueError("lam must be finite and non-negative")
    _check_unit_columns(X)

    if lam == 0.0:
        try:
            return numkit.least_squares(X, y)
        except SingularMatrixError:
            pass  # fall through: descent still reaches some least-squares solution

    Xf = np.asfortranarray(X)
    if warm_start is None:
        beta = np.zeros(p)
    else:
        beta = np.array(warm_start, dtype=np.float64).reshape(-1)
        if beta.shape[0] != p:
            raise ValueError("warm_start length must match the number of columns")

    sweeps = 0
    while True:
        resid = y - Xf @ beta
        corr = Xf.T @ resid
        gap = _kkt_gap(corr, beta, lam)
        if gap <= tol:
            return beta
        work = np.nonzero((beta != 0.0) | (np.abs(corr) > lam))[0]
        while True:
            if sweeps >= max_sweeps:
                raise ConvergenceError(
                    f"coordinate descent exceeded {max_sweeps} sweeps at lam={lam:g}; "
                    f"residual KKT gap {gap:.3e}"
                )
            sweeps += 1
            for j in work:
                xj = Xf[:, j]
                old = beta[j]
                z = old + float(xj @ resid)
                new = _soft_threshold(z, lam)
                if new != old:
                    beta[j] = new
                    resid += xj * (old - new)
            corr_w = Xf[:, work].T @ resid
            gap = _kkt_gap(corr_w, beta[work], lam)
            if gap <= tol:
                break


def restricted_lasso(X, active, y, lam) -> np.ndarray:
    """Lasso solution using only the columns in ``active``.

    Returns coefficients aligned with the order of ``active``; an empty set
    yields an empty coefficient vector (the fit is identically zero).
    """
    X = numkit.as_matrix(X, "X")
    active = np.asarray(active, dtype=np.intp).reshape(-1)
    if active.size == 0:
        return np.zeros(0)
    if np.unique(active).size != active.size:
        raise ValueError("active set contains repeated indices")
    if active.min() < 0 or active.max() >= X.shape[1]:
        raise ValueError(f"active indices must lie in [0, {X.shape[1] - 1}]")
    return lasso_at(X[:, active], y, lam)


def candidate_directions(X, active):
    """Unit-norm residual directions of non-active columns.

    Each remaining column is orthogonalized against the active columns and
    rescaled to unit norm; columns whose residual norm falls below
    ``COLLINEAR_TOL`` are dropped.  Returns ``(indices, directions)`` with
    directions stored column-wise.
    """
    X = numkit.as_matrix(X, "X")
    active = np.asarray(active, dtype=np.intp).reshape(-1)
    p = X.shape[1]
    if active.size and (active.min() < 0 or active.max() >= p):
        raise ValueError(f"active indices must lie in [0, {p - 1}]")
    mask = np.ones(p, dtype=bool)
    mask[active] = False
    rest = np.nonzero(mask)[0]
    R = X[:, rest]
    if active.size:
        q, r = linalg.qr(X[:, active], mode="economic")
        diag = np.abs(np.diag(r))
        if diag.min() <= numkit.RANK_RTOL * diag.max():
            raise SingularMatrixError("active columns are rank deficient")
        R = R - q @ (q.T @ R)
    norms = np.linalg.norm(R, axis=0)
    keep = norms >= COLLINEAR_TOL
    return rest[keep], R[:, keep] / norms[keep]


@dataclass(frozen=True)
class StepwiseTrace:
    """Forward-stepwise entries with the candidate t statistics at each step.

    ``candidate_stats[k]`` holds the signed t value of every candidate at
    step ``k+1`` (NaN for active or dropped columns); ``tstats[k]`` is the
    realized max absolute value, attained by ``entered[k]``.
    """

    entered: np.ndarray
    tstats: np.ndarray
    candidate_stats: tuple[np.ndarray, ...]
    excluded: tuple[tuple[int, int], ...] = ()


def forward_stepwise(X, y, steps: int) -> StepwiseTrace:
    """Forward stepwise selection by the max-|t| rule.

    At each step the remaining predictors are orthogonalized against the
    active ones; the t value of candidate j is the inner product of that
    residual direction (unit normalized) with ``y``.  Candidates whose
    residual norm falls below ``COLLINEAR_TOL`` are excluded and recorded as
    ``(step, column)`` pairs.
    """
    X = numkit.as_matrix(X, "X")
    y = numkit.as_vector(y, "y")
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has length {y.shape[0]}")
    limit = min(n - 1, p)
    if not 1 <= steps <= limit:
        raise ValueError(f"steps must lie in [1, min(rows - 1, cols)] = [1, {limit}]")

    Xr = X.copy()
    active_mask = np.zeros(p, dtype=bool)
    entered: list[int] = []
    tmaxes: list[float] = []
    stats: list[np.ndarray] = []
    excluded: list[tuple[int, int]] = []

    for step in range(1, steps + 1):
        norms = np.linalg.norm(Xr, axis=0)
        cand = ~active_mask
        usable = cand & (norms >= COLLINEAR_TOL)
        for j in np.nonzero(cand & ~usable)[0]:
            excluded.append((step, int(j)))
        if not np.any(usable):
            raise SingularMatrixError(
                f"no usable candidate at step {step}: all remaining columns are "
                "collinear with the active set"
            )
        tvals = np.full(p, np.nan)
        idx = np.nonzero(usable)[0]
        tvals[idx] = (Xr[:, idx].T @ y) / norms[idx]
        j_new = int(np.nanargmax(np.abs(tvals)))
        entered.append(j_new)
        tmaxes.append(float(np.abs(tvals[j_new])))
        stats.append(tvals)
        direction = Xr[:, j_new] / norms[j_new]
        Xr = Xr - np.outer(direction, direction @ Xr)
        active_mask[j_new] = True

    return StepwiseTrace(
        entered=np.asarray(entered, dtype=np.intp),
        tstats=np.asarray(tmaxes),
        candidate_stats=tuple(stats),
        excluded=tuple(excluded),
    )

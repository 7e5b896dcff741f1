"""Data generators and the replicated experiments built on the path tests.

Every experiment is a pure function of its configuration and a root
:class:`~pathsig.numkit.RandomStream`.  Replication ``r`` draws from streams
with id ``base + slot * reps + r`` (slot 0 for the design, slot 1 for the
response noise, slots 2+ for per-step Monte Carlo work), so outputs never
depend on scheduling or worker count, and rerunning a configuration
reproduces them exactly.

Documented defaults for signal layouts: the true support is the first ``k0``
columns, all true coefficients equal ``beta_min`` with positive sign, and the
screening study sweeps ``DEFAULT_BETA_MIN_GRID``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from . import numkit
from .lasso_path import forward_stepwise, lar_path
from .numkit import RandomStream, gaussian_draws
from .seltests import cov_pvalue, cov_stat_fit_form, spacing_pvalue, tmax_mc_pvalue
from .stopping import forward_stop

__all__ = [
    "STRUCTURES",
    "DEFAULT_BETA_MIN_GRID",
    "DesignSpec",
    "SignalSpec",
    "MetricsRow",
    "ScreeningCell",
    "ScreeningRecord",
    "ScreeningResult",
    "QQRecord",
    "QQResult",
    "FdrRecord",
    "FdrResult",
    "EquicorrResult",
    "generate_design",
    "generate_response",
    "screening_experiment",
    "qq_experiment",
    "fdr_experiment",
    "equicorr_limit_experiment",
    "uvr_metric",
    "classic_metrics",
]

STRUCTURES = ("orthogonal", "ar1", "equicorrelated")
QQ_METHODS = ("covariance", "spacing", "tmax")

# Beta-min sweep for the screening study, on the unit-norm-column scale where
# the detection threshold sits near sqrt(2 log p).
DEFAULT_BETA_MIN_GRID = (0.5, 1.0, 2.0, 4.0)

# Coefficients at or below this in the projected mean count as uninformative.
UVR_ZERO_TOL = 1e-8

# Keeps -log(1 - p) finite when a p-value is exactly 1.
_PVALUE_CAP = 1.0 - 1e-12


@dataclass(frozen=True)
class DesignSpec:
    """Shape and column-correlation structure of a simulated design.

    ``rho`` is the adjacent-column correlation for ``ar1`` (decaying as
    rho^|j - j'|) and the common pairwise correlation for ``equicorrelated``;
    it is ignored for ``orthogonal``.
    """

    n: int
    p: int
    structure: str = "ar1"
    rho: float = 0.0

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}, got {self.structure!r}")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.structure == "orthogonal" and self.n < self.p:
            raise ValueError("orthogonal designs require n >= p")


@dataclass(frozen=True)
class SignalSpec:
    """True-coefficient layout: support size, magnitude, placement, signs."""

    k0: int
    beta_min: float = 0.0
    support: tuple[int, ...] | None = None
    signs: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.k0 < 0:
            raise ValueError("k0 must be non-negative")
        if self.beta_min < 0.0:
            raise ValueError("beta_min must be non-negative")
        if self.k0 > 0 and self.beta_min == 0.0:
            raise ValueError("beta_min must be positive when k0 > 0")
        if self.support is not None:
            if len(self.support) != self.k0:
                raise ValueError("support must contain exactly k0 indices")
            if len(set(self.support)) != self.k0 or any(j < 0 for j in self.support):
                raise ValueError("support indices must be distinct and non-negative")
        if self.signs is not None:
            if len(self.signs) != self.k0:
                raise ValueError("signs must contain exactly k0 entries")
            if any(s not in (-1, 1) for s in self.signs):
                raise ValueError("signs must be +1 or -1")

    def support_for(self, p: int) -> tuple[int, ...]:
        if self.k0 > p:
            raise ValueError(f"k0 = {self.k0} exceeds p = {p}")
        sup = tuple(range(self.k0)) if self.support is None else tuple(self.support)
        if sup and max(sup) >= p:
            raise ValueError(f"support index {max(sup)} out of range for p = {p}")
        return sup

    def beta_for(self, p: int, beta_min: float | None = None) -> np.ndarray:
        mag = self.beta_min if beta_min is None else float(beta_min)
        beta = np.zeros(p)
        sup = self.support_for(p)
        signs = np.ones(self.k0) if self.signs is None else np.asarray(self.signs, dtype=float)
        beta[list(sup)] = signs * mag
        return beta


@dataclass(frozen=True)
class MetricsRow:
    """Selection-quality aggregates with a Monte Carlo SE for each field."""

    avg_selected: float
    avg_selected_se: float
    avg_fp: float
    avg_fp_se: float
    avg_tp: float
    avg_tp_se: float
    fwer: float
    fwer_se: float
    fdr: float
    fdr_se: float
    uvr: float
    uvr_se: float


@dataclass(frozen=True)
class ScreeningCell:
    beta_min: float
    k: int
    prob: float
    se: float


@dataclass(frozen=True)
class ScreeningRecord:
    rep: int
    beta_min: float
    k: int
    contained: bool


@dataclass(frozen=True)
class ScreeningResult:
    cells: tuple[ScreeningCell, ...]
    records: tuple[ScreeningRecord, ...]


@dataclass(frozen=True)
class QQRecord:
    rep: int
    step: int
    method: str
    pvalue: float
    mc_se: float | None = None


@dataclass(frozen=True)
class QQResult:
    records: tuple[QQRecord, ...]

    def pvalues(self, method: str, step: int) -> np.ndarray:
        """All replication p-values for one (method, step) cell."""
        return np.asarray(
            [r.pvalue for r in self.records if r.method == method and r.step == step]
        )


@dataclass(frozen=True)
class FdrRecord:
    rep: int
    n_selected: int
    fp: int
    tp: int
    fdp: float
    uvr: float
    fwer_violation: bool


@dataclass(frozen=True)
class FdrResult:
    metrics: MetricsRow
    records: tuple[FdrRecord, ...]


@dataclass(frozen=True)
class EquicorrResult:
    samples: np.ndarray
    ks_distance: float


def _slot_stream(stream: RandomStream, reps: int, slot: int, rep: int) -> RandomStream:
    return stream.stream(stream.stream_id + slot * reps + rep)


def _covariance_factor(spec: DesignSpec) -> np.ndarray:
    if spec.structure == "ar1":
        cov = linalg.toeplitz(spec.rho ** np.arange(spec.p))
    else:
        cov = np.full((spec.p, spec.p), spec.rho)
        np.fill_diagonal(cov, 1.0)
    return linalg.cholesky(cov, lower=True)


def generate_design(spec: DesignSpec, stream: RandomStream) -> np.ndarray:
    """Simulated design with exactly unit-norm columns.

    Rows are i.i.d. Gaussian with the covariance implied by the spec;
    ``orthogonal`` instead returns an exactly orthonormal basis.
    """
    rng = stream.generator()
    Z = rng.standard_normal((spec.n, spec.p))
    if spec.structure == "orthogonal":
        q, _ = np.linalg.qr(Z)
        return q
    X = Z if spec.rho == 0.0 else Z @ _covariance_factor(spec).T
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0.0):
        raise numkit.NumericalError("drew a zero column; cannot normalize")
    return X / norms


def generate_response(X, beta, sigma: float, stream: RandomStream) -> np.ndarray:
    """Gaussian-noise response ``X @ beta + sigma * eps``."""
    X = numkit.as_matrix(X, "X")
    beta = numkit.as_vector(beta, "beta")
    if beta.shape[0] != X.shape[1]:
        raise ValueError(
            f"beta has length {beta.shape[0]} but X has {X.shape[1]} columns"
        )
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma < 0.0:
        raise ValueError("sigma must be finite and non-negative")
    return X @ beta + sigma * gaussian_draws(stream, X.shape[0])


def classic_metrics(selected, true_support) -> tuple[int, int, bool]:
    """False positives, true positives, and whether any false positive occurred."""
    sel = set(int(j) for j in selected)
    sup = set(int(j) for j in true_support)
    fp = len(sel - sup)
    tp = len(sel & sup)
    return fp, tp, fp >= 1


def uvr_metric(selected, X, beta_true) -> tuple[float, np.ndarray]:
    """Uninformative-variable rate of a selection.

    Projects the true mean ``X @ beta_true`` onto the span of the selected
    columns; a selected variable is uninformative when its coefficient in
    that projection is zero within ``UVR_ZERO_TOL``.  Returns the flagged
    fraction and the per-variable flags in selection order.
    """
    X = numkit.as_matrix(X, "X")
    sel = np.asarray(selected, dtype=np.intp).reshape(-1)
    if sel.size == 0:
        raise ValueError("selected set must be non-empty")
    if sel.min() < 0 or sel.max() >= X.shape[1]:
        raise ValueError(f"selected indices must lie in [0, {X.shape[1] - 1}]")
    beta_true = numkit.as_vector(beta_true, "beta_true")
    if beta_true.shape[0] != X.shape[1]:
        raise ValueError("beta_true length must match the number of columns")
    coef = numkit.least_squares(X[:, sel], X @ beta_true)
    flags = np.abs(coef) <= UVR_ZERO_TOL
    return float(np.mean(flags)), flags


def screening_experiment(design: DesignSpec, signal: SignalSpec, sigma: float,
                         k_grid, reps: int, stream: RandomStream,
                         beta_min_grid=None) -> ScreeningResult:
    """Probability that the true support sits inside the first k path entries.

    For every ``beta_min`` on the grid and every ``k`` in ``k_grid``, runs the
    path on fresh data and records whether all truly nonzero variables appear
    among the first ``k`` entered.  The design and noise are shared across
    grid points within a replication.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    sigma = float(sigma)
    if sigma < 0.0:
        raise ValueError("sigma must be non-negative")
    k_grid = tuple(int(k) for k in k_grid)
    if not k_grid or any(k < 1 for k in k_grid):
        raise ValueError("k_grid must contain positive step counts")
    k_max = max(k_grid)
    if k_max > min(design.n - 1, design.p):
        raise ValueError(
            f"max(k_grid) = {k_max} exceeds the path length bound "
            f"{min(design.n - 1, design.p)}"
        )
    grid = DEFAULT_BETA_MIN_GRID if beta_min_grid is None else tuple(
        float(b) for b in beta_min_grid
    )
    if not grid:
        raise ValueError("beta_min_grid must be non-empty")
    support = set(signal.support_for(design.p))

    counts = {(b, k): 0 for b in grid for k in k_grid}
    records: list[ScreeningRecord] = []
    for rep in range(reps):
        X = generate_design(design, _slot_stream(stream, reps, 0, rep))
        eps = gaussian_draws(_slot_stream(stream, reps, 1, rep), design.n)
        for b in grid:
            y = X @ signal.beta_for(design.p, b) + sigma * eps
            trace = lar_path(X, y, k_max)
            entered = trace.entered
            for k in k_grid:
                contained = support.issubset(int(j) for j in entered[:k])
                counts[(b, k)] += contained
                records.append(ScreeningRecord(rep, b, k, bool(contained)))

    cells = []
    for b in grid:
        for k in k_grid:
            prob = counts[(b, k)] / reps
            cells.append(
                ScreeningCell(b, k, prob, float(np.sqrt(prob * (1.0 - prob) / reps)))
            )
    return ScreeningResult(cells=tuple(cells), records=tuple(records))


def qq_experiment(design: DesignSpec, sigma: float, steps: int, methods,
                  reps: int, stream: RandomStream, n_mc: int = 1000) -> QQResult:
    """Per-step null p-value samples for QQ inspection under the global null.

    ``covariance`` uses the step-k exponential rate appropriate to the global
    null, ``spacing`` is reported at step 1 only (its exact law), and ``tmax``
    compares each stepwise statistic to a fresh Monte Carlo noise null.
    """
    methods = tuple(methods)
    if not methods:
        raise ValueError("methods must be non-empty")
    if len(set(methods)) != len(methods):
        raise ValueError("methods must not repeat")
    unknown = [m for m in methods if m not in QQ_METHODS]
    if unknown:
        raise ValueError(f"unsupported methods {unknown}; choose from {QQ_METHODS}")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if reps < 1:
        raise ValueError("reps must be at least 1")
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")

    path_steps = 0
    if "covariance" in methods:
        path_steps = steps + 1
    elif "spacing" in methods:
        path_steps = 2
    limit = min(design.n - 1, design.p)
    if path_steps > limit:
        raise ValueError(
            f"covariance p-values through step {steps} need {steps + 1} knots, "
            f"but the path length bound is {limit}"
        )

    records: list[QQRecord] = []
    for rep in range(reps):
        X = generate_design(design, _slot_stream(stream, reps, 0, rep))
        y = sigma * gaussian_draws(_slot_stream(stream, reps, 1, rep), design.n)
        trace = lar_path(X, y, path_steps) if path_steps else None
        if "covariance" in methods:
            for k in range(1, steps + 1):
                t = max(cov_stat_fit_form(trace, X, y, k, sigma), 0.0)
                records.append(QQRecord(rep, k, "covariance", cov_pvalue(t, rate=k)))
        if "spacing" in methods:
            pv = spacing_pvalue(trace.knots[0], trace.knots[1], sigma)
            records.append(QQRecord(rep, 1, "spacing", pv))
        if "tmax" in methods:
            fs = forward_stepwise(X, y, steps)
            for k in range(1, steps + 1):
                mc_stream = _slot_stream(stream, reps, 1 + k, rep)
                pv, se = tmax_mc_pvalue(
                    X, fs.entered[: k - 1], fs.tstats[k - 1], n_mc, mc_stream
                )
                records.append(QQRecord(rep, k, "tmax", pv, mc_se=se))
    return QQResult(records=tuple(records))


def _mean_and_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / np.sqrt(values.size))


def fdr_experiment(design: DesignSpec, signal: SignalSpec, sigma: float,
                   alpha: float, reps: int, stream: RandomStream,
                   steps: int = 20, cov_rate: str = "incremental") -> FdrResult:
    """Covariance p-values plus the forward-stop rule, scored per replication.

    Each replication runs the path for ``steps`` entries, forms covariance
    p-values for every step with a following knot, applies the forward-stop
    rule at ``alpha``, and scores the selected prefix.  ``cov_rate`` chooses
    the exponential rate: ``"incremental"`` (rate 1, the sequential-testing
    regime where earlier signal is treated as already active) or ``"step"``
    (rate k, the complete-null regime).
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if not 0.0 < float(alpha) < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if cov_rate not in ("incremental", "step"):
        raise ValueError("cov_rate must be 'incremental' or 'step'")
    limit = min(design.n - 1, design.p)
    if not 2 <= steps <= limit:
        raise ValueError(f"steps must lie in [2, {limit}]")
    support = signal.support_for(design.p)
    beta = signal.beta_for(design.p)

    records: list[FdrRecord] = []
    for rep in range(reps):
        X = generate_design(design, _slot_stream(stream, reps, 0, rep))
        y = generate_response(X, beta, sigma, _slot_stream(stream, reps, 1, rep))
        trace = lar_path(X, y, steps)
        pvals = []
        for k in range(1, trace.n_steps):
            t = max(cov_stat_fit_form(trace, X, y, k, sigma), 0.0)
            rate = 1.0 if cov_rate == "incremental" else float(k)
            pvals.append(min(cov_pvalue(t, rate), _PVALUE_CAP))
        decision = forward_stop(pvals, alpha)
        selected = trace.entered[: decision.k_hat]
        fp, tp, violation = classic_metrics(selected, support)
        n_sel = int(selected.size)
        fdp = fp / max(n_sel, 1)
        uvr = uvr_metric(selected, X, beta)[0] if n_sel else 0.0
        records.append(FdrRecord(rep, n_sel, fp, tp, float(fdp), float(uvr), violation))

    sel = np.asarray([r.n_selected for r in records], dtype=float)
    fps = np.asarray([r.fp for r in records], dtype=float)
    tps = np.asarray([r.tp for r in records], dtype=float)
    fdps = np.asarray([r.fdp for r in records])
    uvrs = np.asarray([r.uvr for r in records])
    viols = np.asarray([r.fwer_violation for r in records], dtype=float)
    fields = []
    for values in (sel, fps, tps, viols, fdps, uvrs):
        fields.extend(_mean_and_se(values))
    metrics = MetricsRow(*fields)
    return FdrResult(metrics=metrics, records=tuple(records))


def equicorr_limit_experiment(p: int, rho: float, reps: int,
                              stream: RandomStream) -> EquicorrResult:
    """Centered maxima of equicorrelated scores, with a half-normal KS check.

    Scores are drawn directly from their law, U = sqrt(rho) * Z0 +sqrt(1 - rho) * Z,
    each sample is ``max_j |U_j| - sqrt(2 * rho * log p)``, and the reported
    KS distance is against the absolute value of N(0, 1 - rho).
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    rho = float(rho)
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie strictly inside (0, 1)")
    if reps < 1:
        raise ValueError("reps must be at least 1")
    center = float(np.sqrt(2.0 * rho * np.log(p)))
    sq_common = np.sqrt(rho)
    sq_own = np.sqrt(1.0 - rho)
    samples = np.empty(reps)
    for rep in range(reps):
        rng = _slot_stream(stream, reps, 0, rep).generator()
        z0 = rng.standard_normal()
        z = rng.standard_normal(p)
        samples[rep] = np.max(np.abs(sq_common * z0 + sq_own * z)) - center
    ref = stats.halfnorm(scale=np.sqrt(1.0 - rho))
    ks = float(stats.kstest(samples, ref.cdf).statistic)
    return EquicorrResult(samples=samples, ks_distance=ks)

"""Correlation, confidence intervals, density estimates, and classifier
performance metrics used to evaluate subject scores.

Fisher-z is the default CI method: for ρ=0.814, n=55 it gives (0.700, 0.888)
and for ρ=0.736, n=55 it gives (0.584, 0.838) at the 95% level, so reported
intervals are comparable with the common clinical-correlation convention.
A percentile bootstrap is available as a small-n robustness alternative.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .core import NO_GROUP, AssessmentTable, ProbabilityRecord, SubjectScore, _readonly
from .errors import (
    DegenerateData,
    DegenerateVariance,
    InputError,
    InsufficientOverlap,
    LengthMismatch,
    MissingLabels,
    RhoOutOfRange,
    TooFewPairs,
    TooManyDegenerateResamples,
)
from .scoring import predict_class


class CiMethod(enum.Enum):
    FISHER_Z = "fisher-z"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class CorrelationReport:
    """Pearson ρ with a confidence interval."""

    rho: float
    n: int
    ci_low: float
    ci_high: float
    ci_method: CiMethod
    level: float

    def __post_init__(self) -> None:
        if not -1.0 <= self.rho <= 1.0:
            raise RhoOutOfRange(f"rho {self.rho!r} outside [-1, 1]")
        if self.n < 3:
            raise TooFewPairs(f"n={self.n} < 3")
        if self.ci_method is CiMethod.FISHER_Z and not (
            self.ci_low <= self.rho <= self.ci_high
        ):
            raise InputError(
                f"CI ({self.ci_low!r}, {self.ci_high!r}) does not bracket "
                f"rho {self.rho!r}"
            )


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def __post_init__(self) -> None:
        grid = _readonly(self.grid)
        density = _readonly(self.density)
        if grid.shape != density.shape or grid.ndim != 1:
            raise InputError("grid and density must be equal-length 1-D arrays")
        if np.any(np.diff(grid) <= 0):
            raise InputError("grid must be strictly ascending")
        if np.any(density < 0):
            raise InputError("density must be non-negative")
        if self.bandwidth <= 0:
            raise InputError("bandwidth must be positive")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))


@dataclass(frozen=True)
class PerformanceReport:
    """Accuracy and macro-averaged precision for one record group."""

    group: str
    n: int
    accuracy: float
    accuracy_ci: tuple[float, float]
    macro_precision: float
    macro_precision_ci: tuple[float, float]

    def __post_init__(self) -> None:
        for name, value in (("accuracy", self.accuracy),
                            ("macro_precision", self.macro_precision)):
            if not 0.0 <= value <= 1.0:
                raise InputError(f"{name} {value!r} outside [0, 1]")


@dataclass(frozen=True)
class CorrelationResult:
    """Joined score/assessment correlation plus the pairs behind it."""

    report: CorrelationReport
    pairs: tuple[tuple[str, float, float], ...]  # (subject_id, score, clinical)
    dropped_missing: int
    dropped_unmatched: int


@dataclass(frozen=True)
class StratifiedCorrelation:
    per_stratum: dict[str, CorrelationReport]
    pooled: CorrelationReport
    skipped: dict[str, int]  # stratum -> pair count below the minimum of 3


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation, clamped into [-1, 1]."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"got lengths {x.shape} and {y.shape}")
    n = x.shape[0]
    if n < 3:
        raise TooFewPairs(f"need at least 3 pairs, got {n}")
    # exact constancy check: centering a constant float array can leave
    # ~1e-34 residue that would masquerade as signal
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateVariance("an input has zero variance")
    dx = x - x.mean()
    dy = y - y.mean()
    r = float(np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))
    return min(1.0, max(-1.0, r))


def fisher_ci(rho: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Fisher-z interval: tanh(atanh(ρ) ± z_{(1+level)/2} / √(n−3))."""
    if not -1.0 < rho < 1.0:
        raise RhoOutOfRange(f"rho {rho!r} must satisfy |rho| < 1")
    if n < 4:
        raise TooFewPairs(f"need n >= 4, got {n}")
    if not 0.0 < level < 1.0:
        raise InputError(f"level {level!r} outside (0, 1)")
    z = float(norm.ppf((1.0 + level) / 2.0))
    center = np.arctanh(rho)
    half = z / np.sqrt(n - 3)
    return float(np.tanh(center - half)), float(np.tanh(center + half))


def bootstrap_ci(
    pairs: Sequence[tuple[float, float]],
    level: float = 0.95,
    iters: int = 2000,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for Pearson ρ.

    Each iteration draws from its own counter-derived RNG stream, so results
    do not depend on evaluation order. Resamples where either coordinate is
    constant are redrawn, at most 100 attempts per iteration.
    """
    x = np.asarray([p[0] for p in pairs], dtype=np.float64)
    y = np.asarray([p[1] for p in pairs], dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        raise TooFewPairs(f"need at least 4 pairs, got {n}")
    if iters < 1000:
        raise InputError(f"need at least 1000 iterations, got {iters}")
    rhos = np.empty(iters, dtype=np.float64)
    for i in range(iters):
        rng = np.random.default_rng([seed, i])
        for _attempt in range(100):
            idx = rng.integers(0, n, size=n)
            rx, ry = x[idx], y[idx]
            if np.all(rx == rx[0]) or np.all(ry == ry[0]):
                continue
            dx = rx - rx.mean()
            dy = ry - ry.mean()
            r = float(np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))
            rhos[i] = min(1.0, max(-1.0, r))
            break
        else:
            raise TooManyDegenerateResamples(
                f"iteration {i}: 100 degenerate resamples in a row"
            )
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(rhos, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def correlation_report(
    xs: Sequence[float],
    ys: Sequence[float],
    ci_method: CiMethod = CiMethod.FISHER_Z,
    level: float = 0.95,
    bootstrap_iters: int = 2000,
    seed: int = 0,
) -> CorrelationReport:
    """Pearson ρ plus CI, with the boundary cases the plain fisher_ci
    contract excludes: |ρ| = 1 collapses to a point interval and n = 3
    (Fisher standard error 1/√0) widens to (-1, 1)."""
    rho = pearson(xs, ys)
    n = len(xs)
    if ci_method is CiMethod.FISHER_Z:
        if abs(rho) == 1.0:
            lo, hi = rho, rho
        elif n == 3:
            lo, hi = -1.0, 1.0
        else:
            lo, hi = fisher_ci(rho, n, level)
    else:
        lo, hi = bootstrap_ci(list(zip(xs, ys)), level, bootstrap_iters, seed)
    return CorrelationReport(rho, n, lo, hi, ci_method, level)


def correlate_scores(
    scores: Sequence[SubjectScore],
    assess: AssessmentTable,
    ci_method: CiMethod = CiMethod.FISHER_Z,
    level: float = 0.95,
    bootstrap_iters: int = 2000,
    seed: int = 0,
) -> CorrelationResult:
    """Join scores with clinical assessments on subject_id and correlate.

    MISSING scores and subjects absent from the assessment table are dropped
    (counted separately). Fewer than 3 surviving pairs is an error.
    """
    pairs: list[tuple[str, float, float]] = []
    dropped_missing = 0
    dropped_unmatched = 0
    for s in scores:
        if s.score is None:
            dropped_missing += 1
            continue
        if s.subject_id not in assess:
            dropped_unmatched += 1
            continue
        pairs.append((s.subject_id, s.score, assess[s.subject_id]))
    if len(pairs) < 3:
        raise InsufficientOverlap(
            f"only {len(pairs)} joinable subject(s); need at least 3 "
            f"({dropped_missing} missing scores, {dropped_unmatched} unmatched)"
        )
    report = correlation_report(
        [p[1] for p in pairs], [p[2] for p in pairs],
        ci_method, level, bootstrap_iters, seed,
    )
    return CorrelationResult(report, tuple(pairs), dropped_missing, dropped_unmatched)


def stratified_correlation(
    pairs: Sequence[tuple[str, float, float]],
    strata: Mapping[str, str],
    ci_method: CiMethod = CiMethod.FISHER_Z,
    level: float = 0.95,
    bootstrap_iters: int = 2000,
    seed: int = 0,
) -> StratifiedCorrelation:
    """Correlations within confounder strata, next to the pooled correlation.

    Subjects not in the strata mapping land in the "∅" stratum. Strata with
    fewer than 3 pairs are skipped (reported with their pair counts).
    """
    by_stratum: dict[str, list[tuple[str, float, float]]] = {}
    for sid, x, y in pairs:
        stratum = strata.get(sid, NO_GROUP)
        by_stratum.setdefault(stratum, []).append((sid, x, y))
    per_stratum: dict[str, CorrelationReport] = {}
    skipped: dict[str, int] = {}
    for stratum, members in by_stratum.items():
        if len(members) < 3:
            skipped[stratum] = len(members)
            continue
        per_stratum[stratum] = correlation_report(
            [m[1] for m in members], [m[2] for m in members],
            ci_method, level, bootstrap_iters, seed,
        )
    pooled = correlation_report(
        [p[1] for p in pairs], [p[2] for p in pairs],
        ci_method, level, bootstrap_iters, seed,
    )
    return StratifiedCorrelation(per_stratum, pooled, skipped)


def silverman_bandwidth(values: np.ndarray) -> float:
    """h = 0.9 · min(σ, IQR/1.34) · n^{-1/5} with σ the population std.

    Falls back to σ alone when the IQR is zero (heavily tied data)."""
    v = np.asarray(values, dtype=np.float64)
    sigma = float(np.std(v))
    q75, q25 = np.percentile(v, [75.0, 25.0])
    iqr = float(q75 - q25)
    scale = min(sigma, iqr / 1.34) if iqr > 0 else sigma
    return 0.9 * scale * v.shape[0] ** (-0.2)


#: Number of evaluation points in a density curve.
KDE_GRID_SIZE = 512


def kde(values: Sequence[float], bandwidth: float | None = None) -> DensityCurve:
    """Gaussian-kernel density on a 512-point grid spanning the data range
    extended by 4 bandwidths on each side."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise DegenerateData(f"need at least 2 values, got {v.size}")
    if np.all(v == v[0]):
        raise DegenerateData("all values identical")
    if bandwidth is None:
        h = silverman_bandwidth(v)
    else:
        h = float(bandwidth)
        if h <= 0:
            raise InputError(f"bandwidth {bandwidth!r} must be positive")
    grid = np.linspace(v.min() - 4.0 * h, v.max() + 4.0 * h, KDE_GRID_SIZE)
    z = (grid[:, None] - v[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) / (v.shape[0] * h * np.sqrt(2 * np.pi))
    return DensityCurve(grid, density, h)


def _confusion_metrics(pred: np.ndarray, true: np.ndarray, k: int) -> tuple[float, float]:
    accuracy = float(np.mean(pred == true))
    precisions = np.zeros(k, dtype=np.float64)
    for c in range(k):
        predicted_c = pred == c
        total = int(predicted_c.sum())
        if total:
            precisions[c] = float((true[predicted_c] == c).sum()) / total
    return accuracy, float(precisions.mean())


def performance_metrics(
    records: Sequence[ProbabilityRecord],
    group_by: str = "none",
    cohort_labels: Mapping[str, str] | None = None,
    iters: int = 2000,
    seed: int = 0,
    level: float = 0.95,
) -> list[PerformanceReport]:
    """Accuracy and macro precision, optionally split by record group or by
    a subject-level cohort label.

    Macro precision averages per-class precision without class weighting;
    classes never predicted contribute 0 (with a warning). CIs are percentile
    bootstrap over datapoints.
    """
    if not records:
        raise InputError("no records")
    unlabeled = sum(1 for r in records if r.true_label is None)
    if unlabeled:
        raise MissingLabels(f"{unlabeled} record(s) lack true_label")
    if group_by not in ("none", "group", "cohort-label"):
        raise InputError(f"unknown group_by {group_by!r}")
    k = records[0].k

    def key_of(rec: ProbabilityRecord) -> str:
        if group_by == "none":
            return "all"
        if group_by == "group":
            return rec.group if rec.group is not None else NO_GROUP
        if cohort_labels is None or rec.subject_id not in cohort_labels:
            raise InputError(
                f"subject {rec.subject_id!r} has no cohort label"
            )
        return cohort_labels[rec.subject_id]

    buckets: dict[str, list[ProbabilityRecord]] = {}
    for rec in records:
        buckets.setdefault(key_of(rec), []).append(rec)

    reports = []
    for group, members in buckets.items():
        pred = np.asarray([predict_class(r.probs) for r in members], dtype=np.int64)
        true = np.asarray([r.true_label for r in members], dtype=np.int64)
        never = sorted(set(range(k)) - set(pred.tolist()))
        if never:
            warnings.warn(
                f"group {group!r}: classes {never} never predicted; "
                "they contribute precision 0",
                stacklevel=2,
            )
        accuracy, macro = _confusion_metrics(pred, true, k)
        n = pred.shape[0]
        accs = np.empty(iters, dtype=np.float64)
        precs = np.empty(iters, dtype=np.float64)
        for i in range(iters):
            rng = np.random.default_rng([seed, i])
            idx = rng.integers(0, n, size=n)
            accs[i], precs[i] = _confusion_metrics(pred[idx], true[idx], k)
        alpha = (1.0 - level) / 2.0
        a_lo, a_hi = np.quantile(accs, [alpha, 1.0 - alpha])
        p_lo, p_hi = np.quantile(precs, [alpha, 1.0 - alpha])
        reports.append(
            PerformanceReport(
                group=group,
                n=n,
                accuracy=accuracy,
                accuracy_ci=(float(a_lo), float(a_hi)),
                macro_precision=macro,
                macro_precision_ci=(float(p_lo), float(p_hi)),
            )
        )
    return reports

"""Consolidated analysis report: scores, correlations, contrasts, densities.

This is the one-stop summary a run of the pipeline produces: the subject
scores against the clinical assessment, the same correlation recomputed with
the non-relevant and all-classes score variants (the relevance contrast), a
per-group correlation table, a confidence density curve, optional stratified
correlations, and optional classifier performance metrics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import ClassSet, ProbabilityRecord, AssessmentTable, SubjectScore, partition_by_subject
from .errors import CobraError, DegenerateData
from .scoring import MissingPolicy, ScoreConfig, cobra_by_group, cohort_scores, confidence, predict_class
from .stats import (
    CiMethod,
    CorrelationReport,
    CorrelationResult,
    DensityCurve,
    PerformanceReport,
    StratifiedCorrelation,
    correlate_scores,
    kde,
    performance_metrics,
    stratified_correlation,
)


@dataclass(frozen=True)
class GroupCorrelationRow:
    group: str
    n_subjects: int
    n_pairs: int
    report: CorrelationReport | None
    note: str | None  # reason the correlation was skipped, if it was


@dataclass(frozen=True)
class ReportBundle:
    class_set: ClassSet
    scores: tuple[SubjectScore, ...]
    cobra: CorrelationResult
    contrast: dict[str, CorrelationReport | None]
    contrast_notes: dict[str, str]
    per_group: tuple[GroupCorrelationRow, ...]
    confidences: np.ndarray
    density: DensityCurve | None
    density_note: str | None
    stratified: StratifiedCorrelation | None
    performance: dict[str, PerformanceReport] | None
    performance_note: str | None


def _try_correlate(
    scores: list[SubjectScore],
    assess: AssessmentTable,
    ci_method: CiMethod,
    level: float,
    iters: int,
    seed: int,
) -> tuple[CorrelationReport | None, int, str | None]:
    """Correlate, turning statistical failure modes into a skip note."""
    try:
        result = correlate_scores(scores, assess, ci_method, level, iters, seed)
        return result.report, len(result.pairs), None
    except CobraError as exc:
        return None, 0, str(exc)


def build_report(
    records: list[ProbabilityRecord],
    assess: AssessmentTable,
    class_set: ClassSet,
    strata: dict[str, str] | None = None,
    ci_method: CiMethod = CiMethod.FISHER_Z,
    level: float = 0.95,
    bootstrap_iters: int = 2000,
    seed: int = 0,
) -> ReportBundle:
    datasets = partition_by_subject(records)
    cfg = ScoreConfig(class_set, MissingPolicy.EXCLUDE_SUBJECT)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scores = cohort_scores(datasets, cfg)
        cobra = correlate_scores(scores, assess, ci_method, level, bootstrap_iters, seed)

        # relevance contrast: same pipeline with the complementary and the
        # full class subsets
        contrast: dict[str, CorrelationReport | None] = {}
        contrast_notes: dict[str, str] = {}
        variants: dict[str, frozenset[int] | None] = {
            "relevant": class_set.relevant,
            "non_relevant": class_set.complement() or None,
            "all": frozenset(range(class_set.k)),
        }
        for name, relevant in variants.items():
            if relevant is None:
                contrast[name] = None
                contrast_notes[name] = "empty class subset"
                continue
            variant_cfg = ScoreConfig(
                ClassSet(class_set.k, relevant, class_set.class_names),
                MissingPolicy.EXCLUDE_SUBJECT,
            )
            report, _n, note = _try_correlate(
                cohort_scores(datasets, variant_cfg), assess,
                ci_method, level, bootstrap_iters, seed,
            )
            contrast[name] = report
            if note:
                contrast_notes[name] = note

        # per-group correlations
        per_group: list[GroupCorrelationRow] = []
        for group, group_scores in sorted(cobra_by_group(datasets, cfg).items()):
            report, n_pairs, note = _try_correlate(
                group_scores, assess, ci_method, level, bootstrap_iters, seed
            )
            per_group.append(
                GroupCorrelationRow(group, len(group_scores), n_pairs, report, note)
            )

    confidences = np.asarray(
        [confidence(r.probs) for r in records], dtype=np.float64
    )
    density: DensityCurve | None
    density_note: str | None = None
    try:
        density = kde(confidences)
    except DegenerateData as exc:
        density = None
        density_note = str(exc)

    stratified: StratifiedCorrelation | None = None
    if strata is not None:
        stratified = stratified_correlation(
            cobra.pairs, strata, ci_method, level, bootstrap_iters, seed
        )

    performance: dict[str, PerformanceReport] | None = None
    performance_note: str | None = None
    if all(r.true_label is not None for r in records):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            performance = {
                "overall": performance_metrics(
                    records, "none", iters=bootstrap_iters, seed=seed, level=level
                )[0]
            }
            relevant_predicted = [
                r for r in records if predict_class(r.probs) in class_set.relevant
            ]
            if relevant_predicted:
                performance["relevant_predicted"] = performance_metrics(
                    relevant_predicted, "none",
                    iters=bootstrap_iters, seed=seed, level=level,
                )[0]
            else:
                performance_note = "no record predicted in a relevant class"
    else:
        performance_note = "true labels absent; performance metrics skipped"

    return ReportBundle(
        class_set=class_set,
        scores=tuple(scores),
        cobra=cobra,
        contrast=contrast,
        contrast_notes=contrast_notes,
        per_group=tuple(per_group),
        confidences=confidences,
        density=density,
        density_note=density_note,
        stratified=stratified,
        performance=performance,
        performance_note=performance_note,
    )


def _report_json(report: CorrelationReport | None) -> dict | None:
    if report is None:
        return None
    return {
        "rho": report.rho,
        "n": report.n,
        "ci_low": report.ci_low,
        "ci_high": report.ci_high,
        "ci_method": report.ci_method.value,
        "level": report.level,
    }


def _performance_json(report: PerformanceReport) -> dict:
    return {
        "group": report.group,
        "n": report.n,
        "accuracy": report.accuracy,
        "accuracy_ci": list(report.accuracy_ci),
        "macro_precision": report.macro_precision,
        "macro_precision_ci": list(report.macro_precision_ci),
    }


def bundle_to_json(bundle: ReportBundle, manifest: dict) -> dict:
    """JSON payload for the consolidated report file."""
    out: dict = {
        "manifest": manifest,
        "classes": {
            "k": bundle.class_set.k,
            "relevant": sorted(bundle.class_set.relevant),
            "names": list(bundle.class_set.class_names)
            if bundle.class_set.class_names
            else None,
        },
        "cobra": {
            "correlation": _report_json(bundle.cobra.report),
            "n_pairs": len(bundle.cobra.pairs),
            "dropped_missing": bundle.cobra.dropped_missing,
            "dropped_unmatched": bundle.cobra.dropped_unmatched,
        },
        "relevance_contrast": {
            name: {
                "correlation": _report_json(report),
                "note": bundle.contrast_notes.get(name),
            }
            for name, report in bundle.contrast.items()
        },
        "per_group": [
            {
                "group": row.group,
                "n_subjects": row.n_subjects,
                "n_pairs": row.n_pairs,
                "correlation": _report_json(row.report),
                "note": row.note,
            }
            for row in bundle.per_group
        ],
        "confidence_density": {
            "bandwidth": bundle.density.bandwidth if bundle.density else None,
            "integral": bundle.density.integral() if bundle.density else None,
            "n_values": int(bundle.confidences.shape[0]),
            "note": bundle.density_note,
        },
    }
    if bundle.stratified is not None:
        out["stratified"] = {
            "pooled": _report_json(bundle.stratified.pooled),
            "per_stratum": {
                stratum: _report_json(report)
                for stratum, report in sorted(bundle.stratified.per_stratum.items())
            },
            "skipped": dict(sorted(bundle.stratified.skipped.items())),
        }
    else:
        out["stratified"] = None
    if bundle.performance is not None:
        out["performance"] = {
            name: _performance_json(report)
            for name, report in bundle.performance.items()
        }
    else:
        out["performance"] = None
    if bundle.performance_note:
        out.setdefault("performance_notes", bundle.performance_note)
    return out

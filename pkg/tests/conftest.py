"""Shared fixtures: the end-to-end synthetic pipelines are expensive enough
(two model trainings) to build once per session."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pytest

from cobra.core import ClassSet, partition_by_subject
from cobra.refmodel import RefModel, TrainConfig, forward, predict_dataset, train
from cobra.scoring import MissingPolicy, ScoreConfig, cohort_scores
from cobra.stats import CorrelationResult, StratifiedCorrelation, correlate_scores, stratified_correlation
from cobra.synth import (
    ConfounderConfig,
    SynthCohort,
    SynthConfig,
    cohort_test_vectors,
    generate_cohort,
)


@dataclass
class Pipeline:
    cfg: SynthConfig
    cohort: SynthCohort
    model: RefModel
    loss_history: list[float]
    train_accuracy: float
    records: list
    feature_sets: list
    datasets: list
    scores: dict[str, list]  # relevant / non_relevant / all
    results: dict[str, CorrelationResult]
    means_by_severity: dict[float, float]
    stratified: StratifiedCorrelation | None = None


def _run_pipeline(cfg: SynthConfig) -> Pipeline:
    cohort = generate_cohort(cfg)
    history: list[float] = []
    model = train(
        cohort.healthy_train.x,
        cohort.healthy_train.require_labels(),
        TrainConfig(),
        loss_history=history,
    )
    probs, _ = forward(model, cohort.healthy_train.x)
    accuracy = float(
        np.mean(probs.argmax(axis=1) == cohort.healthy_train.require_labels())
    )
    records, feature_sets = predict_dataset(model, cohort_test_vectors(cohort))
    datasets = partition_by_subject(records)
    variants = {
        "relevant": cfg.relevant,
        "non_relevant": frozenset(range(cfg.k)) - cfg.relevant,
        "all": frozenset(range(cfg.k)),
    }
    scores: dict[str, list] = {}
    results: dict[str, CorrelationResult] = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, rel in variants.items():
            sc = cohort_scores(
                datasets,
                ScoreConfig(ClassSet(cfg.k, rel), MissingPolicy.EXCLUDE_SUBJECT),
            )
            scores[name] = sc
            results[name] = correlate_scores(sc, cohort.assessments)
        stratified = None
        if cfg.confounder is not None:
            stratified = stratified_correlation(
                results["relevant"].pairs, cohort.strata
            )
    by_sev: dict[float, list[float]] = {}
    for s in scores["relevant"]:
        if s.score is not None:
            by_sev.setdefault(cohort.severities[s.subject_id], []).append(s.score)
    means = {sev: float(np.mean(vals)) for sev, vals in sorted(by_sev.items())}
    return Pipeline(
        cfg=cfg,
        cohort=cohort,
        model=model,
        loss_history=history,
        train_accuracy=accuracy,
        records=records,
        feature_sets=feature_sets,
        datasets=datasets,
        scores=scores,
        results=results,
        means_by_severity=means,
        stratified=stratified,
    )


#: One verdict line per acceptance criterion, printed after the test run.
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def clean_pipeline() -> Pipeline:
    """Default config, seed 42, no confounder."""
    return _run_pipeline(SynthConfig())


@pytest.fixture(scope="session")
def confounded_pipeline() -> Pipeline:
    """Same cohort shape with the confounder on half the subjects."""
    return _run_pipeline(SynthConfig(confounder=ConfounderConfig(2.25, 0.5)))

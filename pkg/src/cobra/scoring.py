"""Confidence-based anomaly (COBRA) scoring.

A subject's score is the arithmetic mean of the model's confidence (max
probability) over the subject's datapoints whose predicted class falls in the
clinically-relevant subset. Lower scores mean the model is less sure, i.e.
the subject deviates more from the healthy training population.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .core import NO_GROUP, ClassSet, ProbabilityRecord, SubjectDataset, SubjectScore
from .errors import EmptyRelevantSubset, InputError


class MissingPolicy(enum.Enum):
    """What to do when a subject has no predictions in the relevant classes."""

    EXCLUDE_SUBJECT = "exclude-subject"
    ERROR_OUT = "error-out"


@dataclass(frozen=True)
class ScoreConfig:
    class_set: ClassSet
    missing_policy: MissingPolicy = MissingPolicy.EXCLUDE_SUBJECT

    def __post_init__(self) -> None:
        if not isinstance(self.missing_policy, MissingPolicy):
            object.__setattr__(
                self, "missing_policy", MissingPolicy(self.missing_policy)
            )


def predict_class(probs: np.ndarray) -> int:
    """Smallest index attaining the maximum probability (ties to lowest)."""
    return int(np.argmax(probs))


def confidence(probs: np.ndarray) -> float:
    """Maximum probability; in [1/K, 1] for a vector on the simplex."""
    return float(np.max(probs))


def cobra_score(dataset: SubjectDataset, cfg: ScoreConfig) -> SubjectScore:
    """Score one subject.

    Mean confidence over the records predicted in a relevant class. With no
    such record the score is MISSING (``None``) under EXCLUDE_SUBJECT and an
    error under ERROR_OUT.
    """
    relevant = cfg.class_set.relevant
    k = cfg.class_set.k
    confs = []
    for rec in dataset.records:
        if rec.k != k:
            raise InputError(
                f"record {rec.point_id!r} has {rec.k} classes, config has {k}"
            )
        if predict_class(rec.probs) in relevant:
            confs.append(confidence(rec.probs))
    n_total = len(dataset.records)
    if not confs:
        if cfg.missing_policy is MissingPolicy.ERROR_OUT:
            raise EmptyRelevantSubset(
                f"subject {dataset.subject_id!r}: no datapoint predicted in "
                f"relevant classes {sorted(relevant)}"
            )
        warnings.warn(
            f"subject {dataset.subject_id!r} has no relevant predictions; "
            "score set to MISSING",
            stacklevel=2,
        )
        return SubjectScore(dataset.subject_id, None, n_total, 0)
    # np.mean uses pairwise summation: record-count independent at ~1e-12
    score = float(np.mean(np.asarray(confs, dtype=np.float64)))
    return SubjectScore(dataset.subject_id, score, n_total, len(confs))


def cohort_scores(
    datasets: list[SubjectDataset], cfg: ScoreConfig
) -> list[SubjectScore]:
    """One score per subject, same order as the input."""
    seen: set[str] = set()
    for ds in datasets:
        if ds.subject_id in seen:
            raise InputError(f"duplicate subject {ds.subject_id!r}")
        seen.add(ds.subject_id)
    return [cobra_score(ds, cfg) for ds in datasets]


def cobra_by_group(
    datasets: list[SubjectDataset], cfg: ScoreConfig
) -> dict[str, list[SubjectScore]]:
    """Per-group scores: each group's score uses only that group's records.

    Records without a group label land in the "∅" group. A subject with no
    records in some group is simply absent from that group's list.
    """
    grouped: dict[str, dict[str, list[ProbabilityRecord]]] = {}
    for ds in datasets:
        for rec in ds.records:
            group = rec.group if rec.group is not None else NO_GROUP
            grouped.setdefault(group, {}).setdefault(ds.subject_id, []).append(rec)
    out: dict[str, list[SubjectScore]] = {}
    for group, per_subject in grouped.items():
        out[group] = [
            cobra_score(SubjectDataset(sid, tuple(recs)), cfg)
            for sid, recs in per_subject.items()
        ]
    return out

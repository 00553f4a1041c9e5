"""Domain types and CSV ingestion shared by every other module.

File formats (UTF-8, "." decimal separator, LF or CRLF line endings):

* predictions:      ``subject_id,point_id,group,true_label,p_0,...,p_{K-1}``
* assessments:      ``subject_id,clinical_score``
* strata:           ``subject_id,stratum``
* features:         ``subject_id,f_0,...,f_{D-1}``
* labeled vectors:  ``subject_id,label,f_0,...,f_{D-1}``
* scores:           ``subject_id,score,n_total,n_relevant`` (``group`` column
  inserted after ``subject_id`` for per-group score files)

``group`` and ``true_label`` may be empty. Probability rows are validated,
never renormalized: a malformed row is a hard error naming the file and line.
Floats are written with shortest round-trip formatting so that re-ingesting a
file reproduces the original values exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    InputError,
    NegativeEntry,
    SumOutOfTolerance,
    WrongArity,
)

#: Tolerance on |sum(p) - 1| for one probability vector.
PROB_SUM_TOL = 1e-6

#: Group key used for records that carry no group label.
NO_GROUP = "∅"


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


def validate_record(raw: Sequence[float], k: int) -> np.ndarray:
    """Check one probability vector against the dataset-wide class count.

    Returns the vector as a read-only float64 array. Does NOT renormalize:
    a row that fails any check is a hard error.
    """
    probs = np.asarray(raw, dtype=np.float64)
    if probs.ndim != 1 or probs.shape[0] != k:
        raise WrongArity(f"expected {k} probabilities, got {probs.size}")
    if np.any(probs < 0.0):
        bad = float(probs[probs < 0.0][0])
        raise NegativeEntry(f"negative probability {bad!r}")
    total = float(probs.sum())
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise SumOutOfTolerance(
            f"probabilities sum to {total!r}, outside 1 ± {PROB_SUM_TOL}"
        )
    return _readonly(probs)


@dataclass(frozen=True)
class ProbabilityRecord:
    """One datapoint's class-probability vector, keyed by subject."""

    subject_id: str
    point_id: str
    probs: np.ndarray
    group: str | None = None
    true_label: int | None = None

    def __post_init__(self) -> None:
        raw = np.atleast_1d(np.asarray(self.probs, dtype=np.float64))
        checked = validate_record(raw, raw.shape[0])
        if checked.shape[0] < 2:
            raise WrongArity("need at least two classes")
        object.__setattr__(self, "probs", checked)
        if self.true_label is not None:
            k = checked.shape[0]
            if not 0 <= int(self.true_label) < k:
                raise InputError(
                    f"true_label {self.true_label} outside [0, {k})"
                )

    @property
    def k(self) -> int:
        return int(self.probs.shape[0])


@dataclass(frozen=True)
class SubjectDataset:
    """All records of one subject, in ingestion order."""

    subject_id: str
    records: tuple[ProbabilityRecord, ...]

    def __post_init__(self) -> None:
        if not self.records:
            raise InputError(f"subject {self.subject_id!r} has no records")
        for r in self.records:
            if r.subject_id != self.subject_id:
                raise InputError(
                    f"record {r.point_id!r} belongs to {r.subject_id!r}, "
                    f"not {self.subject_id!r}"
                )
        object.__setattr__(self, "records", tuple(self.records))


@dataclass(frozen=True)
class ClassSet:
    """Class count plus the subset considered clinically relevant."""

    k: int
    relevant: frozenset[int]
    class_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.k < 2:
            raise InputError("need at least two classes")
        object.__setattr__(self, "relevant", frozenset(int(i) for i in self.relevant))
        if not self.relevant:
            raise InputError("relevant class subset must be non-empty")
        if not self.relevant <= set(range(self.k)):
            raise InputError(
                f"relevant classes {sorted(self.relevant)} not within [0, {self.k})"
            )
        if self.class_names is not None:
            names = tuple(self.class_names)
            if len(names) != self.k:
                raise InputError(
                    f"got {len(names)} class names for {self.k} classes"
                )
            object.__setattr__(self, "class_names", names)

    def complement(self) -> frozenset[int]:
        return frozenset(range(self.k)) - self.relevant

    def resolve(self, tokens: Iterable[str]) -> frozenset[int]:
        """Map class indices or names to indices. Indices are authoritative."""
        out = set()
        for tok in tokens:
            tok = tok.strip()
            try:
                out.add(int(tok))
                continue
            except ValueError:
                pass
            if self.class_names is None or tok not in self.class_names:
                raise InputError(f"unknown class {tok!r}")
            out.add(self.class_names.index(tok))
        return frozenset(out)


@dataclass(frozen=True)
class SubjectScore:
    """A subject's anomaly score. ``score`` is None when no datapoint was
    predicted in a relevant class (the MISSING state)."""

    subject_id: str
    score: float | None
    n_total: int
    n_relevant: int

    def __post_init__(self) -> None:
        if self.n_relevant > self.n_total:
            raise InputError("n_relevant cannot exceed n_total")
        if (self.score is None) != (self.n_relevant == 0):
            raise InputError("score must be MISSING exactly when n_relevant is 0")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise InputError(f"score {self.score!r} outside [0, 1]")


@dataclass(frozen=True)
class AssessmentTable:
    """Mapping subject -> scalar clinical score (FMA-like or KL-like)."""

    scores: Mapping[str, float]
    name: str = "clinical_score"
    orientation: int = 1  # +1 higher = healthier, -1 higher = more severe

    def __post_init__(self) -> None:
        if self.orientation not in (1, -1):
            raise InputError("orientation must be +1 or -1")
        object.__setattr__(
            self, "scores", {str(k): float(v) for k, v in self.scores.items()}
        )

    def __contains__(self, subject_id: str) -> bool:
        return subject_id in self.scores

    def __getitem__(self, subject_id: str) -> float:
        return self.scores[subject_id]

    def __len__(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class GaussianSummary:
    """Sample mean and covariance of a feature set."""

    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self) -> None:
        mean = _readonly(np.atleast_1d(self.mean))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise InputError(
                f"mean of dimension {d} needs a {d}x{d} covariance, got {cov.shape}"
            )
        if self.n < 2:
            raise InputError("need at least 2 samples")
        if cov.size and float(np.max(np.abs(cov - cov.T))) > 1e-9:
            raise InputError("covariance not symmetric within 1e-9")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", _readonly(cov))

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


@dataclass(frozen=True)
class LabeledVectors:
    """Rows of a labeled-vector file: per-row subject id, feature vector, label."""

    subjects: tuple[str, ...]
    x: np.ndarray
    labels: tuple[int | None, ...]

    def __post_init__(self) -> None:
        x = _readonly(np.atleast_2d(self.x))
        if x.shape[0] != len(self.subjects) or len(self.labels) != len(self.subjects):
            raise InputError("subjects, vectors, and labels must align row-wise")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "labels", tuple(self.labels))

    def by_subject(self) -> list[tuple[str, np.ndarray, tuple[int | None, ...]]]:
        """Group rows per subject, preserving first-appearance order."""
        index: dict[str, list[int]] = {}
        for i, sid in enumerate(self.subjects):
            index.setdefault(sid, []).append(i)
        return [
            (sid, self.x[rows], tuple(self.labels[i] for i in rows))
            for sid, rows in index.items()
        ]

    def require_labels(self) -> np.ndarray:
        if any(lbl is None for lbl in self.labels):
            n = sum(1 for lbl in self.labels if lbl is None)
            raise InputError(f"{n} rows have no label")
        return np.asarray(self.labels, dtype=np.int64)


def partition_by_subject(records: Iterable[ProbabilityRecord]) -> list[SubjectDataset]:
    """Stable partition preserving input order within each subject."""
    buckets: dict[str, list[ProbabilityRecord]] = {}
    for rec in records:
        buckets.setdefault(rec.subject_id, []).append(rec)
    return [SubjectDataset(sid, tuple(rs)) for sid, rs in buckets.items()]


# --------------------------------------------------------------------------
# CSV ingestion and serialization
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    # repr() is the shortest string that round-trips the exact float
    return repr(float(x))


def _open_rows(path: Path | str):
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    return handle


def _header_error(path, expected, got):
    raise InputError(f"{path}:1: expected header {expected!r}, got {got!r}")


def read_predictions(path: Path | str) -> list[ProbabilityRecord]:
    """Read a predictions file. K is taken from the header."""
    path = Path(path)
    with _open_rows(path) as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        fixed = ["subject_id", "point_id", "group", "true_label"]
        k = len(header) - len(fixed)
        expected = fixed + [f"p_{i}" for i in range(k)]
        if k < 2 or header != expected:
            _header_error(path, fixed + ["p_0", "..."], header)
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise WrongArity(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            sid, pid, group, label = row[0], row[1], row[2], row[3]
            try:
                probs = [float(cell) for cell in row[4:]]
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            try:
                true_label = int(label) if label != "" else None
                rec = ProbabilityRecord(
                    subject_id=sid,
                    point_id=pid,
                    probs=np.asarray(probs),
                    group=group if group != "" else None,
                    true_label=true_label,
                )
            except InputError as exc:
                # keep the precise error class so exit codes stay correct
                raise type(exc)(f"{path}:{lineno}: {exc}") from None
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            records.append(rec)
    return records


def write_predictions(path: Path | str, records: Sequence[ProbabilityRecord]) -> None:
    if not records:
        raise InputError("no records to write")
    k = records[0].k
    rows = [["subject_id", "point_id", "group", "true_label"] + [f"p_{i}" for i in range(k)]]
    for rec in records:
        if rec.k != k:
            raise WrongArity(
                f"record {rec.point_id!r} has {rec.k} classes, file has {k}"
            )
        rows.append(
            [rec.subject_id, rec.point_id, rec.group or "",
             "" if rec.true_label is None else str(rec.true_label)]
            + [_fmt(p) for p in rec.probs]
        )
    _write_csv(path, rows)


def read_assessments(
    path: Path | str, name: str = "clinical_score", orientation: int = 1
) -> AssessmentTable:
    path = Path(path)
    scores: dict[str, float] = {}
    with _open_rows(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["subject_id", "clinical_score"]:
            _header_error(path, ["subject_id", "clinical_score"], header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            sid = row[0]
            if sid in scores:
                raise InputError(f"{path}:{lineno}: duplicate subject {sid!r}")
            try:
                scores[sid] = float(row[1])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
    return AssessmentTable(scores, name=name, orientation=orientation)


def write_assessments(path: Path | str, table: AssessmentTable) -> None:
    rows = [["subject_id", "clinical_score"]]
    rows += [[sid, _fmt(v)] for sid, v in table.scores.items()]
    _write_csv(path, rows)


def read_strata(path: Path | str) -> dict[str, str]:
    path = Path(path)
    strata: dict[str, str] = {}
    with _open_rows(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["subject_id", "stratum"]:
            _header_error(path, ["subject_id", "stratum"], header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            if row[0] in strata:
                raise InputError(f"{path}:{lineno}: duplicate subject {row[0]!r}")
            strata[row[0]] = row[1]
    return strata


def write_strata(path: Path | str, strata: Mapping[str, str]) -> None:
    rows = [["subject_id", "stratum"]]
    rows += [[sid, stratum] for sid, stratum in strata.items()]
    _write_csv(path, rows)


def read_features(path: Path | str) -> dict[str, np.ndarray]:
    """Read a features file into per-subject row matrices, in file order."""
    path = Path(path)
    rows_by_subject: dict[str, list[list[float]]] = {}
    with _open_rows(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0] != "subject_id" or header[1:] != [
            f"f_{i}" for i in range(len(header) - 1)
        ]:
            _header_error(path, ["subject_id", "f_0", "..."], header)
        d = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise InputError(
                    f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}"
                )
            try:
                vec = [float(cell) for cell in row[1:]]
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            rows_by_subject.setdefault(row[0], []).append(vec)
    return {sid: np.asarray(rows, dtype=np.float64) for sid, rows in rows_by_subject.items()}


def write_features(path: Path | str, features: Mapping[str, np.ndarray]) -> None:
    mats = [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in features.values()]
    if not mats:
        raise InputError("no features to write")
    d = mats[0].shape[1]
    rows = [["subject_id"] + [f"f_{i}" for i in range(d)]]
    for sid, mat in zip(features, mats):
        if mat.shape[1] != d:
            raise InputError(
                f"subject {sid!r} has {mat.shape[1]}-dim vectors, file has {d}"
            )
        for vec in mat:
            rows.append([sid] + [_fmt(v) for v in vec])
    _write_csv(path, rows)


def read_labeled_vectors(path: Path | str) -> LabeledVectors:
    path = Path(path)
    subjects: list[str] = []
    labels: list[int | None] = []
    vectors: list[list[float]] = []
    with _open_rows(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[:2] != ["subject_id", "label"] or header[2:] != [
            f"f_{i}" for i in range(len(header) - 2)
        ]:
            _header_error(path, ["subject_id", "label", "f_0", "..."], header)
        d = len(header) - 2
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise InputError(
                    f"{path}:{lineno}: expected {d + 2} fields, got {len(row)}"
                )
            try:
                labels.append(int(row[1]) if row[1] != "" else None)
                vectors.append([float(cell) for cell in row[2:]])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            subjects.append(row[0])
    if not subjects:
        raise InputError(f"{path}: no data rows")
    return LabeledVectors(tuple(subjects), np.asarray(vectors), tuple(labels))


def write_labeled_vectors(
    path: Path | str,
    subjects: Sequence[str],
    x: np.ndarray,
    labels: Sequence[int | None],
) -> None:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    rows = [["subject_id", "label"] + [f"f_{i}" for i in range(x.shape[1])]]
    for sid, vec, lbl in zip(subjects, x, labels):
        rows.append([sid, "" if lbl is None else str(int(lbl))] + [_fmt(v) for v in vec])
    _write_csv(path, rows)


def read_scores(path: Path | str) -> list[SubjectScore]:
    """Read an ungrouped scores file (empty score field means MISSING)."""
    path = Path(path)
    out: list[SubjectScore] = []
    seen: set[str] = set()
    with _open_rows(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header == ["subject_id", "group", "score", "n_total", "n_relevant"]:
            raise InputError(
                f"{path}: per-group scores file; correlation needs ungrouped scores"
            )
        if header != ["subject_id", "score", "n_total", "n_relevant"]:
            _header_error(path, ["subject_id", "score", "n_total", "n_relevant"], header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise InputError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            if row[0] in seen:
                raise InputError(f"{path}:{lineno}: duplicate subject {row[0]!r}")
            seen.add(row[0])
            try:
                score = float(row[1]) if row[1] != "" else None
                out.append(SubjectScore(row[0], score, int(row[2]), int(row[3])))
            except (ValueError, InputError) as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
    return out


def write_scores(
    path: Path | str,
    scores: Sequence[SubjectScore],
    group_of: Mapping[str, str] | None = None,
    grouped: Sequence[tuple[str, SubjectScore]] | None = None,
) -> None:
    """Write a scores file; pass ``grouped`` (group, score) pairs for the
    per-group layout."""
    if grouped is not None:
        rows = [["subject_id", "group", "score", "n_total", "n_relevant"]]
        for group, s in grouped:
            rows.append(
                [s.subject_id, group, "" if s.score is None else _fmt(s.score),
                 str(s.n_total), str(s.n_relevant)]
            )
    else:
        rows = [["subject_id", "score", "n_total", "n_relevant"]]
        for s in scores:
            rows.append(
                [s.subject_id, "" if s.score is None else _fmt(s.score),
                 str(s.n_total), str(s.n_relevant)]
            )
    _write_csv(path, rows)


def _write_csv(path: Path | str, rows: Iterable[Sequence[str]]) -> None:
    """Write rows atomically (temp file + rename), LF line endings."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerows(rows)
    tmp.replace(path)

"""Synthetic cohort generator.

Produces a healthy training population and a test cohort with a controllable
severity parameter s ∈ [0, 1]: the clinically-relevant class means are
interpolated toward the grand mean, m_k(s) = (1−s)·m_k + s·m̄, so those
classes become progressively harder to tell apart while the rest of the task
stays fixed. The derived clinical score is 66·(1−s), oriented like an FMA
total (66 = healthy, 0 = maximum impairment).

An optional confounder adds a severity-independent shift to every point of an
affected subject, mimicking an acquisition artifact that depresses model
confidence without any clinical meaning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AssessmentTable, LabeledVectors
from .errors import InputError


@dataclass(frozen=True)
class ConfounderConfig:
    """Severity-independent shift applied to a fraction of test subjects."""

    magnitude: float
    fraction: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction <= 1.0:
            raise InputError("fraction must lie in [0, 1]")
        if self.magnitude < 0:
            raise InputError("magnitude must be non-negative")


@dataclass(frozen=True)
class SynthConfig:
    k: int = 5
    d_in: int = 8
    relevant: frozenset[int] = frozenset({0, 1, 2})
    class_mean_scale: float = 3.0
    class_means: tuple[tuple[float, ...], ...] | None = None
    sigma: float = 1.0
    points_per_subject: int = 80
    train_subjects: int = 20
    subjects_per_level: int = 10
    severity_grid: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    confounder: ConfounderConfig | None = None
    degrade_all_classes: bool = False
    seed: int = 42

    def __post_init__(self) -> None:
        if self.k < 2:
            raise InputError("need at least 2 classes")
        if self.sigma <= 0:
            raise InputError("sigma must be positive")
        if self.class_means is None and self.k > self.d_in:
            raise InputError(
                f"default basis means need K <= D_in, got K={self.k}, "
                f"D_in={self.d_in}"
            )
        object.__setattr__(
            self, "relevant", frozenset(int(i) for i in self.relevant)
        )
        if not self.relevant <= set(range(self.k)):
            raise InputError("relevant classes out of range")
        for s in self.severity_grid:
            if not 0.0 <= s <= 1.0:
                raise InputError(f"severity {s!r} outside [0, 1]")
        if self.class_means is not None:
            means = tuple(tuple(float(v) for v in row) for row in self.class_means)
            if len(means) != self.k or any(len(r) != self.d_in for r in means):
                raise InputError("class_means must be K rows of D_in values")
            object.__setattr__(self, "class_means", means)
        if self.points_per_subject < 1 or self.train_subjects < 1:
            raise InputError("cohort sizes must be positive")
        if self.subjects_per_level < 1 or not self.severity_grid:
            raise InputError("need at least one severity level and subject")


@dataclass(frozen=True)
class SynthSubject:
    subject_id: str
    severity: float
    confounded: bool
    x: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        x.setflags(write=False)
        labels.setflags(write=False)
        if x.shape[0] != labels.shape[0]:
            raise InputError("labels must align with rows")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "labels", labels)

    @property
    def clinical_score(self) -> float:
        return 66.0 * (1.0 - self.severity)


@dataclass(frozen=True)
class SynthCohort:
    config: SynthConfig
    healthy_train: LabeledVectors
    subjects: tuple[SynthSubject, ...]
    assessments: AssessmentTable
    strata: dict[str, str]  # subject_id -> "confounded" | "clean"
    severities: dict[str, float]


def resolve_class_means(cfg: SynthConfig) -> np.ndarray:
    """K×D class-mean matrix: scaled standard basis unless overridden."""
    if cfg.class_means is not None:
        return np.asarray(cfg.class_means, dtype=np.float64)
    means = np.zeros((cfg.k, cfg.d_in), dtype=np.float64)
    means[np.arange(cfg.k), np.arange(cfg.k)] = cfg.class_mean_scale
    return means


def class_means_at(cfg: SynthConfig, severity: float) -> np.ndarray:
    """Class means at severity s: relevant rows pulled toward the grand mean.

    Non-relevant classes stay put (unless degrade_all_classes), so the
    degradation is specific to the clinically-relevant subset.
    """
    if not 0.0 <= severity <= 1.0:
        raise InputError(f"severity {severity!r} outside [0, 1]")
    means = resolve_class_means(cfg)
    grand = means.mean(axis=0)
    out = means.copy()
    targets = range(cfg.k) if cfg.degrade_all_classes else sorted(cfg.relevant)
    for c in targets:
        out[c] = (1.0 - severity) * means[c] + severity * grand
    return out


def _confounder_shift(cfg: SynthConfig) -> np.ndarray:
    """Shift vector for confounded subjects: from the grand mean toward the
    last class mean.

    Every affected point drifts toward the last class's territory, so a
    frozen model loses confidence on the other classes at every severity, the
    way a constant acquisition artifact would. Directions with no component
    along any between-class axis (for example along unused feature
    dimensions) barely move trained decision boundaries and would make the
    confounder a no-op.
    """
    assert cfg.confounder is not None
    means = resolve_class_means(cfg)
    direction = means[cfg.k - 1] - means.mean(axis=0)
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        direction = np.ones(cfg.d_in)
        norm = float(np.linalg.norm(direction))
    return cfg.confounder.magnitude * direction / norm


def _draw_points(
    rng: np.random.Generator, means: np.ndarray, sigma: float, n: int
) -> tuple[np.ndarray, np.ndarray]:
    k, d = means.shape
    labels = rng.integers(0, k, size=n)
    x = means[labels] + sigma * rng.standard_normal((n, d))
    return x, labels


def generate_healthy(cfg: SynthConfig) -> LabeledVectors:
    """Healthy training set: severity-0 parameters, one block per subject.

    Each subject draws from its own counter-derived stream, so the set is
    reproducible subject-by-subject.
    """
    means = resolve_class_means(cfg)
    subjects: list[str] = []
    blocks: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    for i in range(cfg.train_subjects):
        rng = np.random.default_rng([cfg.seed, 0, i])
        x, y = _draw_points(rng, means, cfg.sigma, cfg.points_per_subject)
        sid = f"H{i:03d}"
        subjects.extend([sid] * cfg.points_per_subject)
        blocks.append(x)
        labels.append(y)
    y_all = np.concatenate(labels)
    return LabeledVectors(
        tuple(subjects), np.concatenate(blocks), tuple(int(v) for v in y_all)
    )


def generate_subject(
    cfg: SynthConfig,
    subject_id: str,
    severity: float,
    confounded: bool,
    seed,
) -> SynthSubject:
    """One test subject at the given severity, from its own generator."""
    rng = np.random.default_rng(seed)
    means = class_means_at(cfg, severity)
    x, labels = _draw_points(rng, means, cfg.sigma, cfg.points_per_subject)
    if confounded:
        if cfg.confounder is None:
            raise InputError("confounded subject requested without a confounder config")
        x = x + _confounder_shift(cfg)
    return SynthSubject(subject_id, float(severity), bool(confounded), x, labels)


def generate_cohort(cfg: SynthConfig) -> SynthCohort:
    """Healthy training set plus a test cohort over the severity grid.

    Confounder assignment is balanced within each severity level (an affected
    fraction f confounds round(f·m) of the level's m subjects, chosen by a
    seeded permutation), so each stratum spans the full severity range.
    """
    healthy = generate_healthy(cfg)
    subjects: list[SynthSubject] = []
    assessments: dict[str, float] = {}
    strata: dict[str, str] = {}
    severities: dict[str, float] = {}
    assign_rng = np.random.default_rng([cfg.seed, 2])
    idx = 0
    for level_i, severity in enumerate(cfg.severity_grid):
        m = cfg.subjects_per_level
        confounded_slots = np.zeros(m, dtype=bool)
        if cfg.confounder is not None and cfg.confounder.fraction > 0:
            n_conf = int(round(cfg.confounder.fraction * m))
            order = assign_rng.permutation(m)
            confounded_slots[order[:n_conf]] = True
        for j in range(m):
            sid = f"S{idx:03d}"
            subj = generate_subject(
                cfg, sid, severity, bool(confounded_slots[j]),
                seed=[cfg.seed, 1, level_i, j],
            )
            subjects.append(subj)
            assessments[sid] = subj.clinical_score
            strata[sid] = "confounded" if subj.confounded else "clean"
            severities[sid] = float(severity)
            idx += 1
    table = AssessmentTable(assessments, name="fma_like", orientation=1)
    return SynthCohort(
        config=cfg,
        healthy_train=healthy,
        subjects=tuple(subjects),
        assessments=table,
        strata=strata,
        severities=severities,
    )


def cohort_test_vectors(cohort: SynthCohort) -> LabeledVectors:
    """Flatten test subjects into one labeled-vector table for prediction."""
    subjects: list[str] = []
    blocks: list[np.ndarray] = []
    labels: list[int] = []
    for subj in cohort.subjects:
        subjects.extend([subj.subject_id] * subj.x.shape[0])
        blocks.append(subj.x)
        labels.extend(int(v) for v in subj.labels)
    return LabeledVectors(tuple(subjects), np.concatenate(blocks), tuple(labels))

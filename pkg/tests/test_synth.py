import numpy as np
import pytest

from cobra.errors import InputError
from cobra.synth import (
    ConfounderConfig,
    SynthConfig,
    class_means_at,
    cohort_test_vectors,
    generate_cohort,
    generate_healthy,
    generate_subject,
    resolve_class_means,
)


class TestConfigValidation:
    def test_defaults_valid(self):
        cfg = SynthConfig()
        assert cfg.k == 5
        assert cfg.relevant == frozenset({0, 1, 2})

    def test_k_exceeding_d_in_needs_explicit_means(self):
        with pytest.raises(InputError):
            SynthConfig(k=9, d_in=8)
        explicit = tuple(tuple(float(i == j) for j in range(4)) for i in range(9))
        with pytest.raises(InputError):
            SynthConfig(k=9, d_in=4, class_means=explicit[:8])  # wrong row count

    def test_bad_severity_grid(self):
        with pytest.raises(InputError):
            SynthConfig(severity_grid=(0.0, 1.5))

    def test_bad_sigma(self):
        with pytest.raises(InputError):
            SynthConfig(sigma=0.0)

    def test_bad_relevant(self):
        with pytest.raises(InputError):
            SynthConfig(relevant=frozenset({7}), k=5)

    def test_bad_confounder(self):
        with pytest.raises(InputError):
            ConfounderConfig(magnitude=1.0, fraction=1.5)
        with pytest.raises(InputError):
            ConfounderConfig(magnitude=-1.0, fraction=0.5)


class TestClassMeans:
    def test_default_scaled_basis(self):
        cfg = SynthConfig()
        means = resolve_class_means(cfg)
        assert means.shape == (5, 8)
        np.testing.assert_allclose(means[:, :5], 3.0 * np.eye(5))
        np.testing.assert_allclose(means[:, 5:], 0.0)

    def test_interpolation_exact(self):
        cfg = SynthConfig()
        base = resolve_class_means(cfg)
        grand = base.mean(axis=0)
        for s in (0.0, 0.3, 0.75, 1.0):
            at = class_means_at(cfg, s)
            for c in range(cfg.k):
                if c in cfg.relevant:
                    np.testing.assert_allclose(
                        at[c], (1 - s) * base[c] + s * grand, atol=0
                    )
                else:
                    np.testing.assert_array_equal(at[c], base[c])

    def test_full_severity_collapses_relevant_means(self):
        cfg = SynthConfig()
        at = class_means_at(cfg, 1.0)
        grand = resolve_class_means(cfg).mean(axis=0)
        for c in cfg.relevant:
            assert float(np.linalg.norm(at[c] - grand)) == 0.0

    def test_degrade_all_classes(self):
        cfg = SynthConfig(degrade_all_classes=True)
        at = class_means_at(cfg, 1.0)
        grand = resolve_class_means(cfg).mean(axis=0)
        np.testing.assert_allclose(at, np.tile(grand, (cfg.k, 1)), atol=0)

    def test_severity_out_of_range(self):
        with pytest.raises(InputError):
            class_means_at(SynthConfig(), 1.01)


class TestGenerateHealthy:
    def test_tiny_sigma_sticks_to_means(self):
        cfg = SynthConfig(sigma=1e-6, train_subjects=2, points_per_subject=50)
        data = generate_healthy(cfg)
        means = resolve_class_means(cfg)
        labels = data.require_labels()
        gaps = np.linalg.norm(data.x - means[labels], axis=1)
        assert float(gaps.max()) < 1e-4

    def test_same_seed_identical(self):
        cfg = SynthConfig(train_subjects=3)
        a = generate_healthy(cfg)
        b = generate_healthy(cfg)
        assert np.array_equal(a.x, b.x)
        assert a.labels == b.labels
        assert a.subjects == b.subjects

    def test_class_frequencies_near_uniform(self):
        cfg = SynthConfig(train_subjects=1, points_per_subject=10_000)
        data = generate_healthy(cfg)
        labels = data.require_labels()
        n, k = labels.shape[0], cfg.k
        expected = n / k
        sd = np.sqrt(n * (1 / k) * (1 - 1 / k))
        for c in range(k):
            count = int(np.sum(labels == c))
            assert abs(count - expected) <= 3 * sd

    def test_shape_and_ids(self):
        cfg = SynthConfig(train_subjects=4, points_per_subject=6)
        data = generate_healthy(cfg)
        assert data.x.shape == (24, cfg.d_in)
        assert set(data.subjects) == {"H000", "H001", "H002", "H003"}

    def test_subject_streams_independent_of_count(self):
        base = SynthConfig(train_subjects=2, points_per_subject=7)
        more = SynthConfig(train_subjects=5, points_per_subject=7)
        a = generate_healthy(base)
        b = generate_healthy(more)
        np.testing.assert_array_equal(a.x, b.x[: a.x.shape[0]])


class TestGenerateSubject:
    def test_severity_zero_matches_healthy_parameters(self):
        cfg = SynthConfig()
        np.testing.assert_array_equal(
            class_means_at(cfg, 0.0), resolve_class_means(cfg)
        )
        # same stream + same parameters -> identical draws
        healthy_like = generate_subject(cfg, "a", 0.0, False, seed=[cfg.seed, 0, 0])
        healthy = generate_healthy(
            SynthConfig(train_subjects=1, points_per_subject=cfg.points_per_subject)
        )
        np.testing.assert_array_equal(healthy_like.x, healthy.x)

    def test_clinical_score_orientation(self):
        cfg = SynthConfig()
        assert generate_subject(cfg, "a", 0.0, False, 1).clinical_score == 66.0
        assert generate_subject(cfg, "a", 1.0, False, 1).clinical_score == 0.0
        assert generate_subject(cfg, "a", 0.25, False, 1).clinical_score == pytest.approx(49.5)

    def test_confounder_shift_applied_to_every_point(self):
        cfg = SynthConfig(confounder=ConfounderConfig(2.0, 1.0))
        plain = generate_subject(cfg, "a", 0.5, False, seed=9)
        shifted = generate_subject(cfg, "a", 0.5, True, seed=9)
        delta = shifted.x - plain.x
        np.testing.assert_allclose(delta - delta[0], 0.0, atol=1e-12)
        assert float(np.linalg.norm(delta[0])) == pytest.approx(2.0, abs=1e-12)

    def test_confounded_without_config_rejected(self):
        with pytest.raises(InputError):
            generate_subject(SynthConfig(), "a", 0.5, True, seed=9)


class TestGenerateCohort:
    def test_sizes_match_config(self):
        cfg = SynthConfig(train_subjects=7, subjects_per_level=4,
                          severity_grid=(0.0, 0.5, 1.0), points_per_subject=11)
        cohort = generate_cohort(cfg)
        assert len(set(cohort.healthy_train.subjects)) == 7
        assert len(cohort.subjects) == 12
        assert len(cohort.assessments) == 12
        assert all(s.x.shape == (11, cfg.d_in) for s in cohort.subjects)

    def test_zero_grid_means_all_healthy_scores(self):
        cfg = SynthConfig(severity_grid=(0.0,), subjects_per_level=5)
        cohort = generate_cohort(cfg)
        assert all(v == 66.0 for v in cohort.assessments.scores.values())

    def test_deterministic(self):
        cfg = SynthConfig(confounder=ConfounderConfig(1.0, 0.5))
        a = generate_cohort(cfg)
        b = generate_cohort(cfg)
        assert a.strata == b.strata
        assert a.severities == b.severities
        for sa, sb in zip(a.subjects, b.subjects):
            assert np.array_equal(sa.x, sb.x)
            assert np.array_equal(sa.labels, sb.labels)

    def test_confounder_balanced_per_level(self):
        cfg = SynthConfig(confounder=ConfounderConfig(1.0, 0.5),
                          subjects_per_level=10)
        cohort = generate_cohort(cfg)
        by_level: dict[float, int] = {}
        for s in cohort.subjects:
            by_level.setdefault(s.severity, 0)
            by_level[s.severity] += int(s.confounded)
        assert all(count == 5 for count in by_level.values())

    def test_no_confounder_all_clean(self):
        cohort = generate_cohort(SynthConfig())
        assert set(cohort.strata.values()) == {"clean"}

    def test_strata_reflect_flags(self):
        cfg = SynthConfig(confounder=ConfounderConfig(1.0, 0.3))
        cohort = generate_cohort(cfg)
        for s in cohort.subjects:
            expected = "confounded" if s.confounded else "clean"
            assert cohort.strata[s.subject_id] == expected

    def test_assessment_table_orientation(self):
        cohort = generate_cohort(SynthConfig())
        assert cohort.assessments.orientation == 1
        assert cohort.assessments.name == "fma_like"

    def test_flattened_vectors_align(self):
        cfg = SynthConfig(subjects_per_level=2, severity_grid=(0.0, 1.0),
                          points_per_subject=5)
        cohort = generate_cohort(cfg)
        flat = cohort_test_vectors(cohort)
        assert flat.x.shape == (20, cfg.d_in)
        assert flat.subjects[:5] == ("S000",) * 5
        np.testing.assert_array_equal(flat.x[:5], cohort.subjects[0].x)


class TestEndToEndPhenomena:
    def test_mean_score_strictly_decreasing_in_severity(self, clean_pipeline):
        means = clean_pipeline.means_by_severity
        levels = sorted(means)
        assert levels == [0.0, 0.25, 0.5, 0.75, 1.0]
        values = [means[s] for s in levels]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_pooled_correlation_below_min_stratum(self, confounded_pipeline):
        strat = confounded_pipeline.stratified
        assert strat is not None
        assert set(strat.per_stratum) == {"clean", "confounded"}
        pooled = abs(strat.pooled.rho)
        per = [abs(r.rho) for r in strat.per_stratum.values()]
        assert pooled < min(per)

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cobra.core import AssessmentTable, ProbabilityRecord, SubjectScore
from cobra.errors import (
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
from cobra.stats import (
    KDE_GRID_SIZE,
    CiMethod,
    bootstrap_ci,
    correlate_scores,
    correlation_report,
    fisher_ci,
    kde,
    pearson,
    performance_metrics,
    silverman_bandwidth,
    stratified_correlation,
)


class TestPearson:
    def test_exact_linearity(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == 1.0

    def test_sign_flip(self):
        assert pearson([1, 2, 3], [-2, -4, -6]) == -1.0

    def test_hand_formula(self):
        # covariance-sum 4.0 over sqrt(5.0 * 5.0)
        assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            pearson([1, 2, 3], [1, 2])

    def test_too_few_pairs(self):
        with pytest.raises(TooFewPairs):
            pearson([1, 2], [3, 4])

    def test_zero_variance(self):
        with pytest.raises(DegenerateVariance):
            pearson([1, 1, 1], [1, 2, 3])
        with pytest.raises(DegenerateVariance):
            pearson([1, 2, 3], [5, 5, 5])

    # integer-valued samples keep the affine identity well-conditioned;
    # pathological float spacing would only probe round-off, not the math
    @given(
        st.lists(st.integers(-100, 100), min_size=3, max_size=40),
        st.floats(0.01, 50),
        st.floats(-100, 100),
    )
    @settings(max_examples=100)
    def test_positive_affine_invariance(self, xs, a, b):
        ys = list(range(len(xs)))
        if all(v == xs[0] for v in xs):
            return
        base = pearson(xs, ys)
        mapped = pearson([a * v + b for v in xs], ys)
        assert mapped == pytest.approx(base, abs=1e-9)

    @given(st.lists(st.integers(-100, 100), min_size=3, max_size=40))
    @settings(max_examples=100)
    def test_negation_under_negative_scaling(self, xs):
        ys = list(range(len(xs)))
        if all(v == xs[0] for v in xs):
            return
        base = pearson(xs, ys)
        flipped = pearson([-v for v in xs], ys)
        assert flipped == pytest.approx(-base, abs=1e-9)


class TestFisherCi:
    def test_reported_interval_first(self):
        lo, hi = fisher_ci(0.814, 55, 0.95)
        assert lo == pytest.approx(0.700, abs=0.002)
        assert hi == pytest.approx(0.888, abs=0.002)

    def test_reported_interval_second(self):
        lo, hi = fisher_ci(0.736, 55, 0.95)
        assert lo == pytest.approx(0.584, abs=0.002)
        assert hi == pytest.approx(0.838, abs=0.002)

    def test_hand_transcription(self):
        # tanh(atanh(0.5) ± 1.959964/sqrt(22)) written out longhand
        z = 1.959963984540054
        lo, hi = fisher_ci(0.5, 25, 0.95)
        assert lo == pytest.approx(math.tanh(math.atanh(0.5) - z / math.sqrt(22)), abs=1e-12)
        assert hi == pytest.approx(math.tanh(math.atanh(0.5) + z / math.sqrt(22)), abs=1e-12)

    def test_symmetric_about_zero(self):
        for n in (4, 10, 100):
            lo, hi = fisher_ci(0.0, n)
            assert lo == pytest.approx(-hi, abs=1e-12)

    def test_width_strictly_decreasing_in_n(self):
        widths = []
        for n in (4, 5, 10, 30, 100, 1000):
            lo, hi = fisher_ci(0.6, n)
            assert lo < hi
            widths.append(hi - lo)
        assert all(a > b for a, b in zip(widths, widths[1:]))

    def test_rho_bounds(self):
        for bad in (1.0, -1.0, 1.5):
            with pytest.raises(RhoOutOfRange):
                fisher_ci(bad, 10)

    def test_n_bound(self):
        with pytest.raises(TooFewPairs):
            fisher_ci(0.5, 3)

    def test_level_bounds(self):
        with pytest.raises(InputError):
            fisher_ci(0.5, 10, level=1.0)

    @given(st.floats(-0.99, 0.99), st.integers(4, 500))
    @settings(max_examples=100)
    def test_brackets_rho(self, rho, n):
        lo, hi = fisher_ci(rho, n)
        assert lo < rho < hi


class TestBootstrapCi:
    def test_perfectly_linear(self):
        pairs = [(i, 2 * i + 1) for i in range(1, 9)]
        assert bootstrap_ci(pairs) == (1.0, 1.0)

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        pairs = list(zip(rng.normal(size=20), rng.normal(size=20)))
        assert bootstrap_ci(pairs, seed=3) == bootstrap_ci(pairs, seed=3)

    def test_matches_fisher_on_bivariate_normal(self):
        rng = np.random.default_rng(42)
        cov = [[1.0, 0.8], [0.8, 1.0]]
        sample = rng.multivariate_normal([0, 0], cov, size=50)
        xs, ys = sample[:, 0].tolist(), sample[:, 1].tolist()
        rho = pearson(xs, ys)
        f_lo, f_hi = fisher_ci(rho, 50)
        b_lo, b_hi = bootstrap_ci(list(zip(xs, ys)), iters=2000, seed=42)
        assert abs(f_lo - b_lo) < 0.05
        assert abs(f_hi - b_hi) < 0.05

    def test_too_few_pairs(self):
        with pytest.raises(TooFewPairs):
            bootstrap_ci([(1, 2), (2, 3), (3, 5)])

    def test_iteration_floor(self):
        pairs = [(i, i * i) for i in range(6)]
        with pytest.raises(InputError):
            bootstrap_ci(pairs, iters=999)

    def test_constant_column_exhausts_redraws(self):
        pairs = [(1.0, float(y)) for y in range(6)]
        with pytest.raises(TooManyDegenerateResamples):
            bootstrap_ci(pairs)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_endpoints_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 30))
        pairs = list(zip(rng.normal(size=n), rng.normal(size=n)))
        lo, hi = bootstrap_ci(pairs, iters=1000, seed=seed)
        assert -1.0 <= lo <= hi <= 1.0


class TestCorrelationReport:
    def test_bracket_invariant(self):
        rep = correlation_report([1, 2, 3, 4, 5], [1.1, 1.9, 3.2, 3.8, 5.1])
        assert rep.ci_low <= rep.rho <= rep.ci_high
        assert rep.ci_method is CiMethod.FISHER_Z

    def test_perfect_rho_collapses_interval(self):
        rep = correlation_report([1, 2, 3, 4], [2, 4, 6, 8])
        assert rep.rho == 1.0
        assert (rep.ci_low, rep.ci_high) == (1.0, 1.0)

    def test_three_pairs_widest_interval(self):
        rep = correlation_report([1, 2, 3], [1, 3, 4])
        assert (rep.ci_low, rep.ci_high) == (-1.0, 1.0)

    def test_bootstrap_method_selectable(self):
        rng = np.random.default_rng(0)
        xs = rng.normal(size=30)
        rep = correlation_report(
            xs.tolist(), (xs + rng.normal(size=30)).tolist(),
            ci_method=CiMethod.BOOTSTRAP, seed=5,
        )
        assert rep.ci_method is CiMethod.BOOTSTRAP
        assert -1.0 <= rep.ci_low <= rep.ci_high <= 1.0


def make_scores(values):
    out = []
    for i, v in enumerate(values):
        sid = f"s{i}"
        if v is None:
            out.append(SubjectScore(sid, None, 5, 0))
        else:
            out.append(SubjectScore(sid, v, 5, 5))
    return out


class TestCorrelateScores:
    def test_identity_join(self):
        scores = make_scores([0.2, 0.4, 0.6, 0.8])
        assess = AssessmentTable({s.subject_id: s.score for s in scores})
        res = correlate_scores(scores, assess)
        assert res.report.rho == 1.0
        assert res.report.n == 4
        assert res.dropped_missing == 0
        assert res.dropped_unmatched == 0
        assert [p[0] for p in res.pairs] == ["s0", "s1", "s2", "s3"]

    def test_one_missing_among_ten(self):
        values = [0.1 * (i + 1) for i in range(9)] + [None]
        scores = make_scores(values)
        assess = AssessmentTable({f"s{i}": float(i) for i in range(10)})
        res = correlate_scores(scores, assess)
        assert res.report.n == 9
        assert res.dropped_missing == 1

    def test_unmatched_subjects_counted(self):
        scores = make_scores([0.2, 0.4, 0.6, 0.8])
        assess = AssessmentTable({"s0": 1.0, "s1": 2.0, "s2": 3.0})
        res = correlate_scores(scores, assess)
        assert res.report.n == 3
        assert res.dropped_unmatched == 1

    def test_insufficient_overlap(self):
        scores = make_scores([0.2, 0.4])
        assess = AssessmentTable({"s0": 1.0, "s1": 2.0})
        with pytest.raises(InsufficientOverlap):
            correlate_scores(scores, assess)


class TestStratifiedCorrelation:
    def test_single_stratum_equals_pooled(self):
        pairs = [(f"s{i}", float(i), float(i) + 0.5 * (i % 2)) for i in range(6)]
        strata = {p[0]: "only" for p in pairs}
        out = stratified_correlation(pairs, strata)
        assert set(out.per_stratum) == {"only"}
        assert out.per_stratum["only"] == out.pooled
        assert out.skipped == {}

    def test_intercept_shift_pools_below_one(self):
        pairs = [(f"a{i}", float(i), float(i)) for i in range(1, 6)]
        pairs += [(f"b{i}", float(i), float(i) - 10.0) for i in range(1, 6)]
        strata = {p[0]: p[0][0] for p in pairs}
        out = stratified_correlation(pairs, strata)
        assert out.per_stratum["a"].rho == 1.0
        assert out.per_stratum["b"].rho == 1.0
        assert out.pooled.rho < 1.0

    def test_small_strata_skipped(self):
        pairs = [(f"a{i}", float(i), 2.0 * i) for i in range(4)]
        pairs += [("b0", 1.0, 1.0), ("b1", 2.0, 3.0)]
        strata = {p[0]: p[0][0] for p in pairs}
        out = stratified_correlation(pairs, strata)
        assert set(out.per_stratum) == {"a"}
        assert out.skipped == {"b": 2}

    def test_unassigned_subjects_form_their_own_stratum(self):
        pairs = [(f"s{i}", float(i), float(i)) for i in range(6)]
        strata = {"s0": "x", "s1": "x", "s2": "x"}
        out = stratified_correlation(pairs, strata)
        assert "∅" in out.per_stratum
        assert out.per_stratum["∅"].n == 3


class TestKde:
    def test_integral_near_one(self):
        rng = np.random.default_rng(1)
        curve = kde(rng.normal(size=200).tolist())
        assert 0.98 <= curve.integral() <= 1.02

    def test_density_non_negative_everywhere(self):
        rng = np.random.default_rng(2)
        curve = kde(rng.exponential(size=50).tolist())
        assert np.all(curve.density >= 0.0)

    def test_grid_shape_and_span(self):
        values = [0.0, 1.0, 2.0, 3.0]
        curve = kde(values, bandwidth=0.5)
        assert curve.grid.shape == (KDE_GRID_SIZE,)
        assert curve.grid[0] == pytest.approx(0.0 - 4 * 0.5)
        assert curve.grid[-1] == pytest.approx(3.0 + 4 * 0.5)

    def test_peak_near_cluster(self):
        rng = np.random.default_rng(3)
        values = (5.0 + 0.01 * rng.normal(size=100)).tolist()
        curve = kde(values)
        peak_x = float(curve.grid[int(np.argmax(curve.density))])
        assert abs(peak_x - 5.0) < 0.05

    def test_gaussian_kernel_peak_value(self):
        # two kernels at ±1 with h=1: density(0) = exp(-1/2)/sqrt(2*pi),
        # density(±1) = (1 + exp(-2)) / (2*sqrt(2*pi))
        curve = kde([-1.0, 1.0], bandwidth=1.0)
        at_zero = float(np.interp(0.0, curve.grid, curve.density))
        assert at_zero == pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi), abs=1e-4)
        at_one = float(np.interp(1.0, curve.grid, curve.density))
        expected = (1.0 + math.exp(-2.0)) / (2.0 * math.sqrt(2 * math.pi))
        assert at_one == pytest.approx(expected, abs=1e-4)

    def test_matches_scipy_reference(self):
        from scipy.stats import gaussian_kde

        rng = np.random.default_rng(4)
        v = rng.normal(size=80)
        h = 0.3
        curve = kde(v.tolist(), bandwidth=h)
        reference = gaussian_kde(v, bw_method=h / np.std(v, ddof=1))
        np.testing.assert_allclose(curve.density, reference(curve.grid), atol=1e-10)

    def test_identical_values_degenerate(self):
        with pytest.raises(DegenerateData):
            kde([2.0, 2.0, 2.0])

    def test_single_value_degenerate(self):
        with pytest.raises(DegenerateData):
            kde([2.0])

    def test_bad_bandwidth(self):
        with pytest.raises(InputError):
            kde([1.0, 2.0], bandwidth=0.0)

    def test_silverman_uses_smaller_of_sigma_and_iqr(self):
        v = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 100.0])
        h = silverman_bandwidth(v)
        sigma = float(np.std(v))
        q75, q25 = np.percentile(v, [75, 25])
        expected = 0.9 * min(sigma, (q75 - q25) / 1.34) * len(v) ** -0.2
        assert h == pytest.approx(expected, abs=1e-12)
        assert (q75 - q25) / 1.34 < sigma

    def test_silverman_zero_iqr_falls_back_to_sigma(self):
        v = np.array([1.0] * 10 + [5.0])
        h = silverman_bandwidth(v)
        assert h == pytest.approx(0.9 * float(np.std(v)) * len(v) ** -0.2, abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_integral_property(self, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(loc=rng.uniform(-5, 5), scale=rng.uniform(0.1, 3), size=int(rng.integers(5, 200)))
        curve = kde(v.tolist())
        assert 0.98 <= curve.integral() <= 1.02
        assert np.all(np.diff(curve.grid) > 0)


def labeled(sid, probs, true_label, group=None):
    return ProbabilityRecord(sid, f"{sid}-{id(probs)}", np.asarray(probs, float),
                             group, true_label)


class TestPerformanceMetrics:
    def test_all_correct(self):
        records = [
            labeled("s", [0.9, 0.1], 0),
            labeled("s", [0.2, 0.8], 1),
            labeled("s", [0.7, 0.3], 0),
        ]
        (rep,) = performance_metrics(records, iters=1000)
        assert rep.accuracy == 1.0
        assert rep.macro_precision == 1.0
        assert rep.group == "all"
        assert rep.n == 3

    def test_binary_all_class_zero_half_correct(self):
        records = [
            labeled("s", [0.9, 0.1], 0),
            labeled("s", [0.8, 0.2], 1),
            labeled("s", [0.7, 0.3], 0),
            labeled("s", [0.6, 0.4], 1),
        ]
        with pytest.warns(UserWarning, match="never predicted"):
            (rep,) = performance_metrics(records, iters=1000)
        assert rep.accuracy == pytest.approx(0.5)
        # class 0 precision 0.5, class 1 never predicted so 0
        assert rep.macro_precision == pytest.approx(0.25)

    def test_accuracy_equals_direct_loop(self):
        rng = np.random.default_rng(11)
        records = []
        for i in range(120):
            probs = rng.dirichlet(np.ones(4))
            records.append(labeled(f"s{i % 7}", probs, int(rng.integers(0, 4))))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            (rep,) = performance_metrics(records, iters=1000)
        correct = 0
        for r in records:
            if int(np.argmax(r.probs)) == r.true_label:
                correct += 1
        assert rep.accuracy == pytest.approx(correct / len(records), abs=1e-15)

    def test_missing_labels_rejected(self):
        records = [
            labeled("s", [0.9, 0.1], 0),
            ProbabilityRecord("s", "p1", np.array([0.5, 0.5])),
        ]
        with pytest.raises(MissingLabels):
            performance_metrics(records)

    def test_group_split(self):
        records = [
            labeled("s", [0.9, 0.1], 0, group="left"),
            labeled("s", [0.9, 0.1], 0, group="left"),
            labeled("s", [0.1, 0.9], 1, group="right"),
            labeled("s", [0.9, 0.1], 1, group="right"),
        ]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            reports = performance_metrics(records, group_by="group", iters=1000)
        by_group = {r.group: r for r in reports}
        assert by_group["left"].accuracy == 1.0
        assert by_group["right"].accuracy == 0.5

    def test_cohort_label_split(self):
        records = [
            labeled("a", [0.9, 0.1], 0),
            labeled("a", [0.1, 0.9], 1),
            labeled("b", [0.9, 0.1], 1),
            labeled("b", [0.1, 0.9], 1),
        ]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            reports = performance_metrics(
                records, group_by="cohort-label",
                cohort_labels={"a": "healthy", "b": "impaired"}, iters=1000,
            )
        by_group = {r.group: r for r in reports}
        assert by_group["healthy"].accuracy == 1.0
        assert by_group["impaired"].accuracy == 0.5

    def test_cohort_label_missing_subject(self):
        records = [labeled("a", [0.9, 0.1], 0)]
        with pytest.raises(InputError):
            performance_metrics(records, group_by="cohort-label", cohort_labels={})

    def test_unknown_group_by(self):
        records = [labeled("a", [0.9, 0.1], 0)]
        with pytest.raises(InputError):
            performance_metrics(records, group_by="subject")

    def test_ci_deterministic_and_bracketing(self):
        rng = np.random.default_rng(13)
        records = [
            labeled(f"s{i}", rng.dirichlet(np.ones(3)), int(rng.integers(0, 3)))
            for i in range(60)
        ]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            (a,) = performance_metrics(records, iters=1000, seed=9)
            (b,) = performance_metrics(records, iters=1000, seed=9)
        assert a == b
        assert 0.0 <= a.accuracy_ci[0] <= a.accuracy_ci[1] <= 1.0
        assert 0.0 <= a.macro_precision_ci[0] <= a.macro_precision_ci[1] <= 1.0

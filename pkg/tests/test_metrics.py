import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from atebench.ate import AteQuery, AteSampleSet
from atebench.errors import AggregationError, ParameterError
from atebench.metrics import (
    ModeCounts,
    ModeSet,
    PairModes,
    PairReport,
    RegroupConfig,
    RunReport,
    aggregate,
    evaluate_pair,
    evaluate_pair_sets,
    filter_low_mass,
    mode_precision_recall,
    read_modes_csv,
    read_pair_reports_csv,
    regroup,
    relaxation_rows,
    wasserstein_1d,
    write_modes_csv,
    write_pair_reports_csv,
    write_run_report_csv,
)

from conftest import random_weighted_sample


def sample_set(values, weights=None, tag="t", q=None):
    q = q or AteQuery(0, 1)
    values = np.asarray(values, dtype=float)
    if weights is None:
        weights = np.full(values.size, 1.0 / values.size)
    return AteSampleSet(q, values, weights, tag)


# --- Wasserstein distance --------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000))
def test_wd_symmetry_identity_translation(seed):
    rng = np.random.default_rng(seed)
    x = random_weighted_sample(rng)
    y = random_weighted_sample(rng)
    c = float(rng.normal() * 3)
    assert wasserstein_1d(x, y) == pytest.approx(wasserstein_1d(y, x), abs=1e-12)
    assert wasserstein_1d(x, x) <= 1e-12
    shifted = (x[0] + c, x[1])
    assert wasserstein_1d(shifted, x) == pytest.approx(abs(c), abs=1e-10)


def test_wd_matches_scipy_on_uneven_sizes():
    rng = np.random.default_rng(5)
    x = random_weighted_sample(rng, size=3)
    y = random_weighted_sample(rng, size=11)
    expected = stats.wasserstein_distance(x[0], y[0], x[1], y[1])
    assert wasserstein_1d(x, y) == pytest.approx(expected, abs=1e-12)


def test_wd_rejects_bad_weights():
    with pytest.raises(ParameterError):
        wasserstein_1d(([1.0], [0.5]), ([1.0], [1.0]))


# --- regrouping ------------------------------------------------------------


def test_regroup_merges_float_noise_into_one_mode():
    cfg = RegroupConfig()
    ms = regroup([1.000000001, 1.0], [0.5, 0.5], cfg)
    assert len(ms) == 1
    assert ms.masses[0] == pytest.approx(1.0)
    assert ms.representatives[0] == pytest.approx(1.0000000005)


def test_regroup_keeps_distinct_values_apart():
    cfg = RegroupConfig()
    ms = regroup([0.0, 1.0, -2.0, 1.0], [0.25] * 4, cfg)
    assert ms.modes == [(-2.0, 0.25), (0.0, 0.25), (1.0, 0.5)]


def test_regroup_representative_is_weighted_mean():
    cfg = RegroupConfig(rtol=0.0, atol=0.5)
    ms = regroup([0.0, 0.2], [0.75, 0.25], cfg)
    assert len(ms) == 1
    assert ms.representatives[0] == pytest.approx(0.05)


def test_regroup_is_not_idempotent_on_adversarial_spacing():
    # two groups split at the anchor boundary, but their weighted means land
    # within tolerance of each other; grouping is defined as single-pass over
    # the raw values, this pins that choice
    cfg = RegroupConfig(rtol=0.0, atol=1.0)
    values = [0.0, 0.99, 1.01, 1.02]
    weights = [0.01, 0.49, 0.49, 0.01]
    ms = regroup(values, weights, cfg)
    assert len(ms) == 2
    again = regroup(ms.representatives, ms.masses, cfg)
    assert len(again) == 1


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000))
def test_regroup_idempotent_when_groups_are_well_separated(seed):
    rng = np.random.default_rng(seed)
    cfg = RegroupConfig(rtol=0.0, atol=0.1)
    centers = np.cumsum(rng.uniform(1.0, 2.0, size=4))
    values = np.concatenate([c + rng.uniform(-0.04, 0.04, size=3) for c in centers])
    weights = np.full(values.size, 1.0 / values.size)
    ms = regroup(values, weights, cfg)
    again = regroup(ms.representatives, ms.masses, cfg)
    assert len(ms) == 4
    assert again == ms


def test_regroup_masses_sum_to_one():
    rng = np.random.default_rng(9)
    v, w = random_weighted_sample(rng, size=30)
    ms = regroup(v, w, RegroupConfig())
    assert ms.masses.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(ms.representatives) > 0)


def test_regroup_config_validation():
    with pytest.raises(ParameterError):
        RegroupConfig(rtol=0.0, atol=0.0)
    with pytest.raises(ParameterError):
        RegroupConfig(rtol=-1e-3)


# --- mode precision and recall --------------------------------------------


def test_precision_recall_exact_match():
    cfg = RegroupConfig()
    ms = ModeSet([0.0, 1.0], [0.5, 0.5])
    p, r, counts = mode_precision_recall(ms, ms, cfg)
    assert p == 1.0 and r == 1.0
    assert counts == ModeCounts(2, 2, 2, 0, 0)


def test_precision_recall_spurious_learned_mode():
    cfg = RegroupConfig()
    true = ModeSet([0.0, 1.0], [0.5, 0.5])
    learned = ModeSet([0.0, 1.0, 7.0], [0.4, 0.4, 0.2])
    p, r, counts = mode_precision_recall(true, learned, cfg)
    assert p == pytest.approx(2 / 3)
    assert r == 1.0
    assert counts == ModeCounts(2, 3, 2, 1, 0)


def test_precision_recall_missed_true_mode():
    cfg = RegroupConfig()
    true = ModeSet([0.0, 1.0, 2.0], [0.4, 0.3, 0.3])
    learned = ModeSet([1.0], [1.0])
    p, r, counts = mode_precision_recall(true, learned, cfg)
    assert p == 1.0
    assert r == pytest.approx(1 / 3)
    assert counts.fn == 2


def test_precision_recall_empty_sides_are_undefined():
    cfg = RegroupConfig()
    empty = ModeSet([], [])
    full = ModeSet([1.0], [1.0])
    p, r, _ = mode_precision_recall(empty, full, cfg)
    assert p == 0.0 and r is None
    p, r, _ = mode_precision_recall(full, empty, cfg)
    assert p is None and r == 0.0


def test_precision_recall_uses_reference_side_tolerances():
    # closeness is |a - b| <= atol + rtol|b| with b the reference; with pure
    # rtol a zero reference accepts nothing
    cfg = RegroupConfig(rtol=2.0, atol=0.0)
    true = ModeSet([0.0], [1.0])
    learned = ModeSet([0.2], [1.0])
    p, r, counts = mode_precision_recall(true, learned, cfg)
    # recall references the learned value: |0 - 0.2| <= 2 * 0.2, found;
    # the learned mode references the true value: |0.2 - 0| > 2 * 0, so it
    # still counts as spurious and dilutes precision to tp / (tp + fp)
    assert r == 1.0
    assert counts == ModeCounts(1, 1, 1, 1, 0)
    assert p == 0.5


# --- low-mass filtering ----------------------------------------------------


def test_filter_drops_and_renormalizes():
    ms = ModeSet([0.0, 1.0, 2.0], [0.9, 0.06, 0.04])
    out = filter_low_mass(ms, 0.05)
    assert out.modes == [(0.0, pytest.approx(0.9 / 0.96)), (1.0, pytest.approx(0.06 / 0.96))]


def test_filter_all_below_gives_empty_sentinel():
    ms = ModeSet([0.0, 1.0], [0.5, 0.5])
    out = filter_low_mass(ms, 0.9)
    assert out.is_empty


def test_filter_zero_tolerance_is_identity():
    ms = ModeSet([0.0, 1.0], [0.5, 0.5])
    assert filter_low_mass(ms, 0.0) == ms


def test_filter_validates_tolerance():
    ms = ModeSet([0.0], [1.0])
    with pytest.raises(ParameterError):
        filter_low_mass(ms, 1.0)


# --- pair evaluation -------------------------------------------------------


def test_evaluate_pair_identical_sets():
    ss = sample_set([0.5, 1.5, 0.5], [0.25, 0.5, 0.25])
    report, pm = evaluate_pair(ss, ss, RegroupConfig())
    assert report.wd <= 1e-12
    assert report.precision == 1.0 and report.recall == 1.0
    assert report.filtered_precision == 1.0 and report.filtered_recall == 1.0
    assert pm.true_modes == pm.learned_modes


def test_evaluate_pair_filtering_rescues_precision():
    true = sample_set([0.0, 1.0], [0.5, 0.5])
    learned = sample_set([0.0, 1.0, 9.0], [0.495, 0.495, 0.01])
    report, _ = evaluate_pair(true, learned, RegroupConfig(), filter_tolerance=0.05)
    assert report.precision == pytest.approx(2 / 3)
    assert report.filtered_precision == 1.0
    assert report.recall == 1.0 and report.filtered_recall == 1.0


def test_evaluate_pair_mismatched_queries_raise():
    a = sample_set([0.0], q=AteQuery(0, 1))
    b = sample_set([0.0], q=AteQuery(1, 0))
    with pytest.raises(ParameterError):
        evaluate_pair(a, b, RegroupConfig())


def test_evaluate_pair_sets_requires_same_pairs():
    a = {AteQuery(0, 1): sample_set([0.0], q=AteQuery(0, 1))}
    b = {AteQuery(1, 0): sample_set([0.0], q=AteQuery(1, 0))}
    with pytest.raises(AggregationError):
        evaluate_pair_sets(a, b, RegroupConfig())


def test_evaluate_pair_sets_orders_by_pair():
    qs = [AteQuery(1, 0), AteQuery(0, 1)]
    sets = {q: sample_set([float(q.treatment)], q=q) for q in qs}
    reports, modes = evaluate_pair_sets(sets, sets, RegroupConfig())
    got = [(r.query.treatment, r.query.outcome) for r in reports]
    assert got == [(0, 1), (1, 0)]
    assert [(m.query.treatment, m.query.outcome) for m in modes] == got


# --- aggregation -----------------------------------------------------------


def report_of(t, y, wd, p, r):
    return PairReport(AteQuery(t, y), wd, p, r, p, r, ModeCounts(1, 1, 1, 0, 0))


def test_single_seed_aggregation_uses_pair_spread():
    reports = [report_of(0, 1, 0.2, 1.0, 0.5), report_of(1, 0, 0.4, 0.5, 1.0)]
    s = aggregate({0: reports}, "m")
    assert s.wd_mean == pytest.approx(0.3)
    assert s.wd_se == pytest.approx(np.std([0.2, 0.4], ddof=1))
    assert s.precision_mean == pytest.approx(0.75)
    assert s.num_seeds == 1 and s.num_pairs == 2


def test_multi_seed_aggregation_uses_standard_error_of_seed_means():
    by_seed = {
        0: [report_of(0, 1, 0.2, 1.0, 1.0), report_of(1, 0, 0.4, 1.0, 1.0)],
        1: [report_of(0, 1, 0.6, 0.0, 1.0), report_of(1, 0, 0.8, 0.0, 1.0)],
    }
    s = aggregate(by_seed, "m")
    means = [0.3, 0.7]
    assert s.wd_mean == pytest.approx(0.5)
    assert s.wd_se == pytest.approx(np.std(means, ddof=1) / np.sqrt(2))
    assert s.precision_mean == pytest.approx(0.5)


def test_aggregation_excludes_none_metrics_and_counts_them():
    reports = [report_of(0, 1, 0.2, None, 1.0), report_of(1, 0, 0.4, 0.5, 1.0)]
    s = aggregate({0: reports}, "m")
    assert s.precision_mean == pytest.approx(0.5)
    assert s.excluded["precision"] == 1
    assert s.excluded["wd"] == 0


def test_aggregation_rejects_mismatched_pair_sets():
    with pytest.raises(AggregationError):
        aggregate({0: [report_of(0, 1, 0.1, 1, 1)], 1: [report_of(1, 0, 0.1, 1, 1)]}, "m")


def test_run_report_requires_rows():
    with pytest.raises(AggregationError):
        RunReport([])


# --- relaxation table ------------------------------------------------------


def test_relaxation_rows_track_the_filtering_grid():
    true = ModeSet([0.0, 1.0], [0.5, 0.5])
    learned = ModeSet([0.0, 1.0, 9.0], [0.495, 0.495, 0.01])
    pm = PairModes(AteQuery(0, 1), true, learned)
    rows = relaxation_rows({0: [pm]}, grid=(0.0, 0.05))
    assert rows[0]["tolerance"] == 0.0
    assert rows[0]["precision_mean"] == pytest.approx(2 / 3)
    assert rows[1]["tolerance"] == 0.05
    assert rows[1]["precision_mean"] == 1.0
    assert rows[0]["recall_mean"] == rows[1]["recall_mean"] == 1.0


def test_relaxation_marks_filtered_out_pairs_excluded():
    pm = PairModes(AteQuery(0, 1), ModeSet([0.0], [1.0]), ModeSet([1.0], [1.0]))
    skinny = PairModes(
        AteQuery(1, 0),
        ModeSet([0.0, 1.0], [0.97, 0.03]),
        ModeSet([0.0, 1.0], [0.03, 0.97]),
    )
    rows = relaxation_rows({0: [pm, skinny]}, grid=(0.5,))
    assert rows[0]["excluded_pairs"] == 0
    rows = relaxation_rows({0: [skinny]}, grid=(0.98,))
    assert rows[0]["excluded_pairs"] == 1
    assert rows[0]["precision_mean"] is None


# --- CSV round trips -------------------------------------------------------


def test_pair_reports_csv_round_trip(tmp_path):
    labels = ("X0", "X1")
    reports = [
        PairReport(AteQuery(0, 1), 0.25, 2 / 3, 1.0, None, None, ModeCounts(2, 3, 2, 1, 0)),
        PairReport(AteQuery(1, 0), 0.0, 1.0, 1.0, 1.0, 1.0, ModeCounts(1, 1, 1, 0, 0)),
    ]
    path = tmp_path / "pairs.csv"
    write_pair_reports_csv(reports, labels, path)
    back = read_pair_reports_csv(path, labels)
    assert len(back) == 2
    for a, b in zip(reports, back):
        assert a.query == b.query
        assert b.wd == a.wd
        assert b.precision == pytest.approx(a.precision)
        assert b.filtered_precision == a.filtered_precision
        assert b.mode_counts == a.mode_counts


def test_modes_csv_round_trip(tmp_path):
    labels = ("X0", "X1")
    pm = PairModes(
        AteQuery(0, 1),
        ModeSet([0.0, 2.0], [0.75, 0.25]),
        ModeSet([0.5], [1.0]),
    )
    path = tmp_path / "modes.csv"
    write_modes_csv([pm], labels, "true-mec", "m", path)
    back = read_modes_csv(path, labels, "true-mec")
    assert len(back) == 1
    assert back[0].query == pm.query
    assert back[0].true_modes == pm.true_modes
    assert back[0].learned_modes == pm.learned_modes


def test_run_report_csv_has_one_row_per_method(tmp_path):
    s = aggregate({0: [report_of(0, 1, 0.1, 1.0, 0.5)]}, "m1")
    path = tmp_path / "report.csv"
    write_run_report_csv(RunReport([s, s._replace(method="m2")]), path)
    rows = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    assert rows[0].split(",")[0] == "method"
    assert [r.split(",")[0] for r in rows[1:]] == ["m1", "m2"]

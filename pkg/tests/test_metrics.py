import json

import numpy as np
import pytest

from mpcdetect.errors import ParameterError, ValidationError
from mpcdetect.metrics import (
    TABLE_II,
    MatchReport,
    MetricsConfig,
    compute_metrics,
    evaluate,
    f1_score,
    metrics_json,
    relaxed_match,
    table2_consistency,
)

from oracles import brute_force_max_matching


def random_case(rng, max_items=12, span=80):
    nt = int(rng.integers(0, max_items + 1))
    nd = int(rng.integers(0, max_items + 1))
    truths = sorted(rng.choice(span, size=nt, replace=False).tolist())
    dets = sorted(rng.choice(span, size=nd, replace=False).tolist())
    return dets, truths


def test_hand_example():
    m = relaxed_match([102, 300], [100, 200], MetricsConfig(5))
    assert (m.tp, m.fp, m.fn) == (1, 1, 1)
    assert m.pairs == ((100, 102),)


@pytest.mark.parametrize("n", [0, 1, 5, 50])
def test_exact_detections(n):
    idx = [3, 17, 40, 41]
    m = relaxed_match(idx, idx, MetricsConfig(n))
    assert (m.tp, m.fp, m.fn) == (4, 0, 0)


def test_tie_goes_to_smaller_detection():
    m = relaxed_match([97, 103], [100], MetricsConfig(5))
    assert m.pairs == ((100, 97),)
    assert (m.tp, m.fp) == (1, 1)


def test_earliest_rule_beats_nearest_rule():
    # nearest-first would pair 10 with 13 and strand 14; earliest-first
    # pairs 10-6 and 14-13
    m = relaxed_match([6, 13], [10, 14], MetricsConfig(4))
    assert m.tp == 2
    assert brute_force_max_matching([6, 13], [10, 14], 4) == 2


@pytest.mark.parametrize("bad", [[5, 3], [2, 2]])
def test_unsorted_or_duplicate_input(bad):
    with pytest.raises(ValidationError):
        relaxed_match(bad, [1])
    with pytest.raises(ValidationError):
        relaxed_match([1], bad)


def test_negative_tolerance_rejected():
    with pytest.raises(ParameterError):
        MetricsConfig(-1)


def test_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(300):
        dets, truths = random_case(rng)
        n = int(rng.choice([0, 2, 5]))
        m = relaxed_match(dets, truths, MetricsConfig(n))
        assert m.tp == brute_force_max_matching(dets, truths, n), (dets, truths, n)


@pytest.mark.parametrize("seed", range(30))
def test_match_report_invariants(seed):
    rng = np.random.default_rng(seed)
    dets, truths = random_case(rng)
    n = int(rng.integers(0, 8))
    m = relaxed_match(dets, truths, MetricsConfig(n))
    assert m.tp == len(m.pairs) <= min(len(dets), len(truths))
    assert len({t for t, _ in m.pairs}) == len({d for _, d in m.pairs}) == m.tp
    assert all(abs(t - d) <= n for t, d in m.pairs)
    assert m.fp == len(dets) - m.tp and m.fn == len(truths) - m.tp
    zero = relaxed_match(dets, truths, MetricsConfig(0))
    assert zero.tp == len(set(dets) & set(truths))


@pytest.mark.parametrize("seed", range(30))
def test_tp_grows_with_tolerance(seed):
    dets, truths = random_case(np.random.default_rng(100 + seed))
    tps = [relaxed_match(dets, truths, MetricsConfig(n)).tp for n in range(12)]
    assert tps == sorted(tps)


def test_reported_table_examples():
    assert round(f1_score(0.73, 0.61), 2) == 0.66
    assert round(f1_score(0.42, 0.55), 2) == 0.48


def test_table_consistency():
    for arch, (recomputed, reported, _) in table2_consistency().items():
        assert recomputed == reported, arch
    assert set(TABLE_II) == {"CNN", "GRU", "LSTM", "TRANSFORMER"}


def test_empty_counts():
    r = compute_metrics(MatchReport(0, 0, 0))
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)


def test_micro_average_sums_counts():
    per = {1: MatchReport(3, 1, 0), 2: MatchReport(0, 0, 4)}
    r = compute_metrics(per)
    assert (r.tp, r.fp, r.fn) == (3, 1, 4)
    assert r.precision == pytest.approx(0.75)
    assert r.recall == pytest.approx(3 / 7)
    # a macro average would give a different recall
    assert r.recall != pytest.approx((1.0 + 0.0) / 2)


def test_evaluate_missing_record_counts_as_misses():
    r = evaluate({1: [10]}, {1: [10], 2: [5, 50]}, MetricsConfig(2))
    assert (r.tp, r.fp, r.fn) == (1, 0, 2)


def test_metrics_json_is_stable():
    r = evaluate({1: [10, 40]}, {1: [11]}, MetricsConfig(3))
    text = metrics_json(r, MetricsConfig(3), {"threshold_k": 2.0})
    assert text == metrics_json(r, MetricsConfig(3), {"threshold_k": 2.0})
    doc = json.loads(text)
    assert doc["aggregate"]["tp"] == 1
    assert doc["per_record"]["1"]["pairs"] == [[11, 10]]
    assert doc["config"] == {"threshold_k": 2.0, "tolerance_n": 3}

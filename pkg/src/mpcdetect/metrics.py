"""Relaxed precision / recall / F1 with an N-sample tolerance window."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParameterError, ValidationError

# reference (precision, recall, f1) per architecture on measured data
TABLE_II = {
    "CNN": (0.42, 0.53, 0.47),
    "GRU": (0.46, 0.44, 0.45),
    "LSTM": (0.42, 0.55, 0.48),
    "TRANSFORMER": (0.73, 0.61, 0.66),
}


@dataclass(frozen=True)
class MetricsConfig:
    tolerance_n: int = 5

    def __post_init__(self):
        if int(self.tolerance_n) != self.tolerance_n or self.tolerance_n < 0:
            raise ParameterError(f"tolerance_n must be a non-negative integer, got {self.tolerance_n}")


@dataclass(frozen=True)
class MatchReport:
    tp: int
    fp: int
    fn: int
    pairs: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    per_record: dict = field(default_factory=dict)


def _check_sorted(name, xs):
    xs = [int(x) for x in xs]
    for a, b in zip(xs, xs[1:]):
        if b <= a:
            raise ValidationError(f"{name} must be strictly increasing, got {a} before {b}")
    return xs


def relaxed_match(detections, truths, cfg: MetricsConfig = MetricsConfig()) -> MatchReport:
    """One-to-one matching of detections to truths within ``tolerance_n``.

    Truths are swept in ascending order and each takes the smallest unmatched
    detection inside its window. Because every window has the same width,
    this earliest-first rule yields a maximum-cardinality matching; on a tie
    between two equally near detections it picks the smaller index.
    """
    dets = _check_sorted("detections", detections)
    trs = _check_sorted("truths", truths)
    n = cfg.tolerance_n
    pairs = []
    j = 0
    for t in trs:
        # detections left of this window are also left of every later window
        while j < len(dets) and dets[j] < t - n:
            j += 1
        if j < len(dets) and dets[j] <= t + n:
            pairs.append((t, dets[j]))
            j += 1
    tp = len(pairs)
    return MatchReport(tp, len(dets) - tp, len(trs) - tp, tuple(pairs))


def prf(tp, fp, fn):
    if min(tp, fp, fn) < 0:
        raise ParameterError("counts must be non-negative")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, f1_score(precision, recall)


def f1_score(precision, recall):
    s = precision + recall
    return 2.0 * precision * recall / s if s else 0.0


def compute_metrics(report) -> MetricsReport:
    """Metrics for a single :class:`MatchReport`, or micro-averaged over a
    ``{record_id: MatchReport}`` mapping (counts are summed first)."""
    if isinstance(report, MatchReport):
        p, r, f = prf(report.tp, report.fp, report.fn)
        return MetricsReport(p, r, f, report.tp, report.fp, report.fn)
    per = dict(report)
    tp = sum(m.tp for m in per.values())
    fp = sum(m.fp for m in per.values())
    fn = sum(m.fn for m in per.values())
    p, r, f = prf(tp, fp, fn)
    return MetricsReport(p, r, f, tp, fp, fn, per)


def evaluate(detections: dict, truths: dict, cfg: MetricsConfig = MetricsConfig()) -> MetricsReport:
    """Micro-averaged relaxed metrics over records keyed by id.

    Records missing from ``detections`` count as having no detections.
    """
    per = {}
    for rid in sorted(set(truths) | set(detections)):
        per[rid] = relaxed_match(detections.get(rid, ()), truths.get(rid, ()), cfg)
    return compute_metrics(per)


def table2_consistency(decimals=2):
    """Recompute F1 from each reported (precision, recall) pair.

    Returns ``{arch: (recomputed_rounded, reported, exact)}``.
    """
    out = {}
    for arch, (p, r, f) in TABLE_II.items():
        exact = f1_score(p, r)
        out[arch] = (round(exact, decimals), f, exact)
    return out


def metrics_json(report: MetricsReport, cfg: MetricsConfig, extra=None) -> str:
    doc = {
        "aggregate": {
            "precision": report.precision,
            "recall": report.recall,
            "f1": report.f1,
            "tp": report.tp,
            "fp": report.fp,
            "fn": report.fn,
        },
        "per_record": {
            str(rid): {"tp": m.tp, "fp": m.fp, "fn": m.fn, "pairs": [list(p) for p in m.pairs]}
            for rid, m in sorted(report.per_record.items())
        },
        "config": {"tolerance_n": cfg.tolerance_n, **(extra or {})},
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_metrics_json(report, cfg, path, extra=None):
    Path(path).write_text(metrics_json(report, cfg, extra), encoding="utf-8")

"""Reconstruction errors to MPC peak indices.

Positive reconstruction errors above a magnitude gate are clustered along the
delay axis with DBSCAN. Each first-pass cluster yields its largest-error index
as a candidate. A second DBSCAN pass merges nearby candidates, and each merged
group keeps the sample with the highest original power.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError

NOISE = -1


@dataclass(frozen=True)
class DetectionConfig:
    threshold_k: float = 2.0
    eps1: float = 3.0
    min_pts1: int = 2
    eps2: float = 10.0
    min_pts2: int = 1

    def __post_init__(self):
        if self.threshold_k < 0:
            raise ParameterError(f"threshold_k must be >= 0, got {self.threshold_k}")
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ParameterError("eps1 and eps2 must be positive")
        if self.min_pts1 < 1:
            raise ParameterError("min_pts1 must be >= 1")
        if self.eps1 > self.eps2:
            raise ParameterError(f"eps1 ({self.eps1}) must not exceed eps2 ({self.eps2})")
        if self.min_pts2 != 1:
            raise ParameterError("min_pts2 must be 1 so isolated candidates survive the merge pass")


@dataclass(frozen=True)
class PeakSet:
    indices: tuple[int, ...] = ()
    errors: tuple[float, ...] = ()
    powers: tuple[float, ...] = ()

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


@dataclass(frozen=True)
class Detection:
    """Full trace of one detection run, for reports and plots."""

    peaks: PeakSet
    errors: np.ndarray
    candidates: tuple[int, ...] = ()
    pass1_representatives: tuple[int, ...] = ()
    extra: dict = field(default_factory=dict)


def reconstruction_error(original, reconstruction):
    """Signed ``original - reconstruction``; under-reconstructed peaks are positive."""
    original = np.asarray(original, dtype=np.float64)
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    if original.shape != reconstruction.shape:
        raise ShapeError(f"original {original.shape} vs reconstruction {reconstruction.shape}")
    return original - reconstruction


def positive_gate(errors, threshold_k):
    """``mu + k * sigma`` of the strictly positive errors, or None if there are none."""
    pos = errors[errors > 0]
    if pos.size == 0:
        return None
    return float(pos.mean() + threshold_k * pos.std())


def select_candidates(errors, cfg: DetectionConfig = DetectionConfig()):
    """Indices whose error is positive and above the positive-error gate,
    returned as ``[(index, error), ...]`` in ascending index order."""
    errors = np.asarray(errors, dtype=np.float64)
    gate = positive_gate(errors, cfg.threshold_k)
    if gate is None:
        return []
    keep = np.flatnonzero((errors > 0) & (errors > gate))
    return [(int(i), float(errors[i])) for i in keep]


def dbscan(points, eps, min_pts):
    """DBSCAN on 1-D points.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. Points are visited in ascending coordinate order (ties by
    input position), so a border point reachable from two clusters joins the
    one whose leftmost core comes first. Cluster ids are numbered in that
    order; noise is labelled ``-1``. Labels are returned aligned with the
    input order.
    """
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if int(min_pts) != min_pts or min_pts < 1:
        raise ParameterError(f"min_pts must be a positive integer, got {min_pts}")
    x = np.asarray(points, dtype=np.float64).ravel()
    n = x.size
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    order = np.argsort(x, kind="stable")
    xs = x[order]
    lo = np.searchsorted(xs, xs - eps, side="left")
    hi = np.searchsorted(xs, xs + eps, side="right")
    core = (hi - lo) >= min_pts
    sorted_labels = np.full(n, NOISE, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if sorted_labels[i] != NOISE or not core[i]:
            continue
        sorted_labels[i] = cluster
        frontier = [i]
        while frontier:
            j = frontier.pop()
            for m in range(lo[j], hi[j]):
                if sorted_labels[m] == NOISE:
                    sorted_labels[m] = cluster
                    if core[m]:
                        frontier.append(m)
        cluster += 1
    labels[order] = sorted_labels
    return labels


def clusters_from_labels(labels):
    """Map cluster id -> sorted member positions (noise excluded)."""
    out = {}
    for pos, lab in enumerate(labels):
        if lab != NOISE:
            out.setdefault(int(lab), []).append(pos)
    return out


def _argmax_lowest(values, idxs):
    best = idxs[0]
    for i in idxs[1:]:
        if values[i] > values[best] or (values[i] == values[best] and i < best):
            best = i
    return best


def merge_candidates(indices, powers, eps2, min_pts2=1):
    """Second pass: cluster candidate indices and keep the highest-power one
    per cluster (ties to the lower index)."""
    indices = sorted(int(i) for i in indices)
    if not indices:
        return []
    labels = dbscan(indices, eps2, min_pts2)
    kept = []
    for members in clusters_from_labels(labels).values():
        idxs = [indices[m] for m in members]
        kept.append(_argmax_lowest(powers, sorted(idxs)))
    return sorted(kept)


def detect_peaks(original, reconstruction, cfg: DetectionConfig = DetectionConfig(),
                 powers_db=None, *, trace=False):
    """Run the full two-pass detector on one profile.

    ``original`` and ``reconstruction`` share a scale (normally the min-max
    normalized one). ``powers_db`` supplies the power used for the final
    max-power choice; it defaults to ``original``, which ranks samples the
    same way because min-max scaling is monotone.

    Returns a :class:`PeakSet`, or a :class:`Detection` when ``trace`` is set.
    """
    errors = reconstruction_error(original, reconstruction)
    powers = np.asarray(original if powers_db is None else powers_db, dtype=np.float64)
    if powers.shape != errors.shape:
        raise ShapeError(f"powers {powers.shape} vs errors {errors.shape}")

    cands = select_candidates(errors, cfg)
    cand_idx = [i for i, _ in cands]
    reps = []
    if cand_idx:
        labels = dbscan(cand_idx, cfg.eps1, cfg.min_pts1)
        for members in clusters_from_labels(labels).values():
            reps.append(_argmax_lowest(errors, sorted(cand_idx[m] for m in members)))
        reps.sort()
    final = merge_candidates(reps, powers, cfg.eps2, cfg.min_pts2)
    peaks = PeakSet(
        tuple(final),
        tuple(float(errors[i]) for i in final),
        tuple(float(powers[i]) for i in final),
    )
    if trace:
        return Detection(peaks, errors, tuple(cand_idx), tuple(reps))
    return peaks


# -- reports -----------------------------------------------------------------------

DETECTION_HEADER = ("id", "peak_index", "power_db", "recon_error")
TRACE_HEADER = ("id", "index", "original", "reconstruction", "error", "candidate_flag", "peak_flag")


def write_detections(rows, path):
    """``rows``: iterable of ``(record_id, PeakSet)`` in output order."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_HEADER)
        for rid, peaks in rows:
            for i, p, e in zip(peaks.indices, peaks.powers, peaks.errors):
                w.writerow((rid, i, repr(p), repr(e)))


def read_detections(path):
    out: dict[int, list[int]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.setdefault(int(row["id"]), []).append(int(row["peak_index"]))
    return {k: sorted(v) for k, v in out.items()}


def write_trace(rows, path):
    """``rows``: iterable of ``(record_id, original, reconstruction, Detection)``."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for rid, orig, recon, det in rows:
            cand = set(det.candidates)
            peak = set(det.peaks.indices)
            for i in range(len(orig)):
                w.writerow((rid, i, repr(float(orig[i])), repr(float(recon[i])),
                            repr(float(det.errors[i])), int(i in cand), int(i in peak)))


def read_trace(path):
    """Trace CSV -> ``{id: dict of column arrays}``."""
    cols: dict[int, dict[str, list]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rid = int(row["id"])
            c = cols.setdefault(rid, {k: [] for k in TRACE_HEADER[1:]})
            c["index"].append(int(row["index"]))
            for k in ("original", "reconstruction", "error"):
                c[k].append(float(row[k]))
            c["candidate_flag"].append(int(row["candidate_flag"]))
            c["peak_flag"].append(int(row["peak_flag"]))
    return {rid: {k: np.asarray(v) for k, v in c.items()} for rid, c in cols.items()}

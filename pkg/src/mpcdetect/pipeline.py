"""End-to-end glue: split, normalize, augment, train, detect, score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import AugmentConfig, PdpSet, augment_dataset, normalize_minmax, split_alternating
from .detect import DetectionConfig, detect_peaks
from .metrics import MetricsConfig, evaluate
from .models import ModelConfig, TrainConfig, TrainedModel, build_model, reconstruct, train


@dataclass
class RecordResult:
    record_id: int
    original: np.ndarray  # normalized
    reconstruction: np.ndarray
    powers_db: np.ndarray
    labels: tuple
    detection: object  # detect.Detection


def training_records(train_set: PdpSet, augment: AugmentConfig | None = AugmentConfig()):
    normed = [normalize_minmax(r) for r in train_set]
    if augment is None or augment.variants_per_record == 0:
        return normed
    return augment_dataset(normed, augment)


def fit(arch, train_set: PdpSet, train_cfg: TrainConfig = TrainConfig(),
        augment: AugmentConfig | None = AugmentConfig(), chunk_length=None,
        model_seed=None, progress=None) -> TrainedModel:
    cfg = ModelConfig.for_arch(arch, chunk_length)
    net = build_model(cfg, train_cfg.seed if model_seed is None else model_seed)
    return train(net, training_records(train_set, augment), train_cfg, progress=progress)


def detect_records(model, records, cfg: DetectionConfig = DetectionConfig()):
    normed = [normalize_minmax(r) for r in records]
    x = np.stack([n.values for n in normed])
    recon = reconstruct(model, x)
    out = []
    for rec, n, y in zip(records, normed, recon):
        det = detect_peaks(n.values, y, cfg, powers_db=rec.powers, trace=True)
        out.append(RecordResult(rec.id, n.values, y, rec.powers, rec.labels, det))
    return out


def score(results, metrics_cfg: MetricsConfig = MetricsConfig()):
    dets = {r.record_id: list(r.detection.peaks.indices) for r in results}
    truths = {r.record_id: list(r.labels) for r in results}
    return evaluate(dets, truths, metrics_cfg)


def run_experiment(pdp_set: PdpSet, arch, train_cfg: TrainConfig = TrainConfig(),
                   augment: AugmentConfig | None = AugmentConfig(),
                   detection: DetectionConfig = DetectionConfig(),
                   metrics_cfg: MetricsConfig = MetricsConfig(), chunk_length=None, progress=None):
    """Alternating split, train on the even half, detect and score on the odd half."""
    train_set, test_set = split_alternating(pdp_set)
    model = fit(arch, train_set, train_cfg, augment, chunk_length, progress=progress)
    results = detect_records(model, test_set, detection)
    return model, results, score(results, metrics_cfg)

"""Acceptance criteria 1-8, each at its stated tolerance.

Every test prints a single ``criterion N: PASS|FAIL`` line, and the lines
are repeated in the session summary. The end-to-end runs go through the
command-line tool, so the artifacts compared for determinism are the ones
a user would get.
"""

import json
import time

import numpy as np
import pytest

from mpcdetect.cli import main
from mpcdetect.data import AugmentConfig, load_pdp_csv, split_alternating
from mpcdetect.detect import NOISE, clusters_from_labels, dbscan
from mpcdetect.metrics import MetricsConfig, relaxed_match, table2_consistency
from mpcdetect.models import load_model, reconstruct, split_validation
from mpcdetect.nn import AdamState, adam_apply
from mpcdetect.pipeline import training_records

import gradcheck_cases
from conftest import record
from oracles import brute_force_dbscan, brute_force_max_matching

pytestmark = pytest.mark.acceptance

SEED = 42
E2E_ARCHS = ("transformer", "lstm", "gru")
ALL_ARCHS = ("cnn",) + E2E_ARCHS
E2E_BUDGET_S = 15 * 60


# -- fast criteria ------------------------------------------------------------------


def test_criterion_1_table_consistency():
    t0 = time.perf_counter()
    rows = table2_consistency()
    ok = all(recomputed == reported for recomputed, reported, _ in rows.values())
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"{a} {exact:.4f}->{r:.2f} (reported {rep:.2f})" for a, (r, rep, exact) in rows.items())
    record(1, ok and elapsed < 1.0, f"{detail}; {elapsed * 1e3:.1f} ms")
    assert ok and elapsed < 1.0


def test_criterion_2_gradient_checks():
    t0 = time.perf_counter()
    worst = {name: max(gradcheck_cases.check(f, seed) for seed in range(20))
             for name, f in gradcheck_cases.LAYERS.items()}
    elapsed = time.perf_counter() - t0
    ok = all(w < 1e-4 for w in worst.values()) and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record(2, ok, f"max relative error over 20 seeds: {detail}; {elapsed:.1f} s")
    assert ok


def _partition(labels):
    clusters = {frozenset(m) for m in clusters_from_labels(labels).values()}
    return clusters, {i for i, lab in enumerate(labels) if lab == NOISE}


def test_criterion_3_dbscan_oracle():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(0, 51))
        pts = rng.integers(0, 100, size=n)
        eps = float(rng.choice([1, 2, 5]))
        min_pts = int(rng.choice([1, 2, 4]))
        if _partition(dbscan(pts, eps, min_pts)) != brute_force_dbscan(pts, eps, min_pts):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10
    record(3, ok, f"{100 - mismatches}/100 partitions identical; {elapsed:.2f} s")
    assert ok


def test_criterion_4_matching_oracle():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        nt, nd = (int(v) for v in rng.integers(0, 13, size=2))
        truths = sorted(rng.choice(60, size=nt, replace=False).tolist())
        dets = sorted(rng.choice(60, size=nd, replace=False).tolist())
        n = int(rng.choice([0, 2, 5]))
        if relaxed_match(dets, truths, MetricsConfig(n)).tp != brute_force_max_matching(dets, truths, n):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10
    record(4, ok, f"{200 - mismatches}/200 cardinalities equal to brute force; {elapsed:.2f} s")
    assert ok


def test_criterion_8_adam_scalar():
    state = AdamState.zeros_like([np.array(1.0)], learning_rate=0.001)
    (p,), _ = adam_apply([np.array(1.0)], [np.array(1.0)], state)
    err = abs(float(p) - 0.9990000)
    record(8, err <= 1e-9, f"p' = {float(p):.10f}, |p' - 0.9990000| = {err:.1e}")
    assert err <= 1e-9


# -- end-to-end runs -----------------------------------------------------------------


def _run_pipeline(root, archs):
    """synth -> train -> detect -> eval through the CLI; returns per-arch info."""
    data = root / "data"
    assert main(["synth", "--records", "80", "--length", "820", "--seed", str(SEED), "--out", str(data)]) == 0
    info = {}
    for arch in archs:
        t0 = time.perf_counter()
        model_dir = root / f"model_{arch}"
        rc = main(["train", "--arch", arch, "--data", str(data), "--seed", str(SEED), "--out", str(model_dir)])
        train_s = time.perf_counter() - t0
        entry = {"rc": rc, "train_s": train_s, "model": model_dir}
        if rc == 0:
            det_dir = root / f"detect_{arch}"
            assert main(["detect", "--model", str(model_dir), "--data", str(data), "--out", str(det_dir)]) == 0
            metrics = root / f"metrics_{arch}.json"
            assert main(["eval", "--detections", str(det_dir / "detections.csv"), "--labels", str(data),
                         "--tolerance", "5", "--out", str(metrics)]) == 0
            entry.update(detections=det_dir / "detections.csv", metrics=metrics,
                         aggregate=json.loads(metrics.read_text())["aggregate"])
        entry["total_s"] = time.perf_counter() - t0
        info[arch] = entry
    return data, info


@pytest.fixture(scope="module")
def first_run(tmp_path_factory):
    return _run_pipeline(tmp_path_factory.mktemp("e2e_a"), ALL_ARCHS)


@pytest.fixture(scope="module")
def second_run(tmp_path_factory):
    return _run_pipeline(tmp_path_factory.mktemp("e2e_b"), E2E_ARCHS)


def test_criterion_5_synthetic_benchmark(first_run):
    _, info = first_run
    parts, ok = [], True
    tr = info["transformer"]
    f1 = tr["aggregate"]["f1"] if tr["rc"] == 0 else float("nan")
    ok &= tr["rc"] == 0 and f1 >= 0.60
    parts.append(f"TRANSFORMER F1 {f1:.3f} (need >= 0.60, P {tr['aggregate']['precision']:.3f} "
                 f"R {tr['aggregate']['recall']:.3f})" if tr["rc"] == 0 else f"TRANSFORMER exit {tr['rc']}")
    for arch in ("lstm", "gru"):
        e = info[arch]
        if e["rc"] != 0:
            ok = False
            parts.append(f"{arch.upper()} exit code {e['rc']}")
            continue
        f = e["aggregate"]["f1"]
        ok &= f >= 0.35
        parts.append(f"{arch.upper()} F1 {f:.3f} (need >= 0.35, no divergence)")
    seconds = sum(info[a]["total_s"] for a in E2E_ARCHS)
    budget = "within" if seconds <= E2E_BUDGET_S else "over"
    parts.append(f"runtime {seconds / 60:.1f} min on this machine ({budget} the 15 min laptop budget; "
                 f"transformer alone {info['transformer']['total_s'] / 60:.1f} min)")
    record(5, ok, "; ".join(parts))
    assert ok


def _loss_history(model_dir):
    rows = (model_dir / "loss_history.csv").read_text().splitlines()[1:]
    return [tuple(float(v) for v in r.split(",")[1:]) for r in rows]


def test_criterion_6_training_sanity(first_run):
    data, info = first_run
    train_set, _ = split_alternating(load_pdp_csv(data / "pdp.csv"))
    records = training_records(train_set, AugmentConfig(seed=SEED))
    _, val = split_validation(records, 0.1)
    x_val = np.stack([r.values for r in val])
    parts, ok = [], True
    for arch in ALL_ARCHS:
        e = info[arch]
        if e["rc"] != 0:
            ok = False
            parts.append(f"{arch.upper()} training exit {e['rc']}")
            continue
        hist = _loss_history(e["model"])
        first, last = hist[0][0], hist[-1][0]
        halved = last < 0.5 * first
        model = load_model(e["model"])
        restored = float(np.mean((reconstruct(model, x_val) - x_val) ** 2))
        best = min(v for _, v in hist)
        same = abs(restored - best) <= 1e-12 * max(best, 1e-300)
        ok &= halved and same
        parts.append(f"{arch.upper()} train MSE {first:.3g}->{last:.3g} ({len(hist)} epochs), "
                     f"restored val {restored:.6g} vs min {best:.6g}")
    record(6, ok, "; ".join(parts))
    assert ok


def test_criterion_7_determinism(first_run, second_run):
    _, a = first_run
    _, b = second_run
    diffs = []
    for arch in E2E_ARCHS:
        if a[arch]["rc"] != 0 or b[arch]["rc"] != 0:
            if a[arch]["rc"] != b[arch]["rc"]:
                diffs.append(f"{arch} exit codes differ")
            continue
        pairs = {
            "checkpoint": (a[arch]["model"] / "model.ckpt", b[arch]["model"] / "model.ckpt"),
            "detections": (a[arch]["detections"], b[arch]["detections"]),
            "metrics": (a[arch]["metrics"], b[arch]["metrics"]),
        }
        for what, (p, q) in pairs.items():
            if p.read_bytes() != q.read_bytes():
                diffs.append(f"{arch} {what}")
    ok = not diffs
    record(7, ok, "checkpoints, detection CSVs and metrics JSON byte-identical across two runs"
           if ok else "differences: " + ", ".join(diffs))
    assert ok

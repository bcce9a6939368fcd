"""Command-line front end: ``mpcdetect synth|train|detect|eval|report``.

Every command writes a JSON manifest with its fully resolved configuration;
``--from-manifest`` replays a run from that file alone.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .data import AugmentConfig, PdpSet, label_path_for, load_pdp_csv, split_alternating
from .detect import DetectionConfig, read_detections, read_trace, write_detections, write_trace
from .errors import DataError, DivergenceError, MpcDetectError, ParameterError
from .metrics import MetricsConfig, evaluate, table2_consistency, write_metrics_json
from .models import ARCHS, TrainConfig, load_model, save_model
from .pipeline import detect_records, fit
from .plot import render_svg
from .synth import SynthParams, generate_records, write_dataset

log = logging.getLogger("mpcdetect")

OUT_ENV = "MPCDETECT_OUT"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def default_out():
    return os.environ.get(OUT_ENV, "runs")


def _resolve_pdp(path):
    p = Path(path)
    return p / "pdp.csv" if p.is_dir() else p


def write_manifest(out_dir, command, config, inputs=(), outputs=(), seeds=None):
    out_dir = Path(out_dir)
    doc = {
        "command": command,
        "version": __version__,
        "config": config,
        "seeds": seeds or {},
        "inputs": {str(p): sha256(p) for p in inputs if Path(p).is_file()},
        "outputs": {str(p): sha256(p) for p in outputs if Path(p).is_file()},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = out_dir / f"manifest_{command}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "from_manifest", "verbose")}


# -- commands ------------------------------------------------------------------


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = SynthParams(
        length=args.length,
        n_peaks=(args.peaks_min, args.peaks_max),
        decay_db_per_sample=args.decay_db,
        noise_floor_db=args.noise_floor_db,
        peak_power_db=(args.peak_power_min, args.peak_power_max),
        noise_sigma_db=args.noise_sigma_db,
        min_peak_separation=args.min_separation,
        seed=args.seed,
    )
    if args.records < 1:
        raise ParameterError("--records must be >= 1")
    if args.records < 2:
        log.warning("%d record: training will fail at the alternating split", args.records)
    pdp = out / "pdp.csv"
    write_dataset(generate_records(params, args.records), params, pdp)
    outputs = [pdp, label_path_for(pdp), out / "pdp_spec.txt"]
    write_manifest(out, "synth", _config(args), outputs=outputs, seeds={"seed": args.seed})
    print(f"wrote {args.records} records to {pdp}")


def _select_split(pdp_set: PdpSet, split):
    if split == "all":
        return pdp_set
    train_set, test_set = split_alternating(pdp_set)
    return train_set if split == "train" else test_set


def cmd_train(args):
    pdp = _resolve_pdp(args.data)
    pdp_set = load_pdp_csv(pdp)
    train_set, _ = split_alternating(pdp_set)
    tcfg = TrainConfig(args.lr, args.epochs, args.batch_size, args.val_fraction, args.patience, args.seed)
    augment = AugmentConfig(args.augment_variants, seed=args.seed)
    arch = args.arch.upper()
    chunk = args.chunk if arch in ("LSTM", "GRU") else None
    model = fit(arch, train_set, tcfg, augment, chunk,
                progress=lambda e, t, v: log.info("epoch %d train_mse=%.6g val_mse=%.6g", e, t, v))
    out = Path(args.out)
    save_model(model, out)
    outputs = [out / "model.ckpt", out / "model_manifest.txt", out / "loss_history.csv"]
    cfg = _config(args)
    cfg["chunk_length"] = model.config.chunk_length
    write_manifest(out, "train", cfg, inputs=[pdp, label_path_for(pdp)], outputs=outputs,
                   seeds={"seed": args.seed})
    print(f"trained {arch}: best epoch {model.best_epoch} of {len(model.loss_history)}, saved to {out}")


def cmd_detect(args):
    pdp = _resolve_pdp(args.data)
    records = _select_split(load_pdp_csv(pdp), args.split)
    model_dir = Path(args.model)
    model = load_model(model_dir)
    dcfg = DetectionConfig(args.threshold_k, args.eps1, args.min_pts1, args.eps2, args.min_pts2)
    results = detect_records(model, records, dcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    det_path, trace_path = out / "detections.csv", out / "trace.csv"
    write_detections([(r.record_id, r.detection.peaks) for r in results], det_path)
    write_trace([(r.record_id, r.original, r.reconstruction, r.detection) for r in results], trace_path)
    cfg = _config(args)
    cfg["record_ids"] = [r.record_id for r in results]
    cfg["model_manifest_sha256"] = sha256(model_dir / "model_manifest.txt")
    write_manifest(out, "detect", cfg,
                   inputs=[pdp, label_path_for(pdp), model_dir / "model.ckpt"],
                   outputs=[det_path, trace_path])
    n_peaks = sum(len(r.detection.peaks) for r in results)
    print(f"{n_peaks} peaks in {len(results)} records -> {det_path}")


def cmd_eval(args):
    out = Path(args.out)
    if args.check_table2:
        rows = table2_consistency()
        ok = True
        for arch, (recomputed, reported, exact) in rows.items():
            match = recomputed == reported
            ok &= match
            print(f"{arch:12s} F1 recomputed {exact:.4f} -> {recomputed:.2f}  reported {reported:.2f}  "
                  f"{'ok' if match else 'MISMATCH'}")
        return EXIT_OK if ok else EXIT_DATA
    if not args.detections or not args.labels:
        raise ParameterError("eval needs --detections and --labels (or --check-table2)")
    dets = read_detections(args.detections)
    pdp = _resolve_pdp(args.labels)
    if pdp.name.endswith("_labels.csv"):
        pdp = pdp.with_name(pdp.name[: -len("_labels.csv")] + ".csv")
    pdp_set = load_pdp_csv(pdp)
    det_dir = Path(args.detections).parent
    extra = {}
    det_manifest = det_dir / "manifest_detect.json"
    ids = None
    if det_manifest.exists():
        dm = json.loads(det_manifest.read_text(encoding="utf-8"))
        c = dm["config"]
        extra["detection"] = {k: c[k] for k in ("threshold_k", "eps1", "min_pts1", "eps2", "min_pts2") if k in c}
        extra["model_manifest_sha256"] = c.get("model_manifest_sha256")
        ids = c.get("record_ids")
    truths = {r.id: list(r.labels) for r in pdp_set if ids is None or r.id in ids}
    dets = {k: v for k, v in dets.items() if k in truths}
    mcfg = MetricsConfig(args.tolerance)
    report = evaluate(dets, truths, mcfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_json(report, mcfg, out, extra)
    write_manifest(out.parent, "eval", _config(args), inputs=[args.detections, pdp], outputs=[out])
    print(f"P={report.precision:.4f} R={report.recall:.4f} F1={report.f1:.4f} "
          f"(tp={report.tp} fp={report.fp} fn={report.fn}, N={args.tolerance})")


def cmd_report(args):
    traces = read_trace(args.trace)
    if args.id not in traces:
        raise DataError(f"record id {args.id} not in {args.trace}")
    t = traces[args.id]
    truths = ()
    if args.labels:
        pdp = _resolve_pdp(args.labels)
        if pdp.name.endswith("_labels.csv"):
            pdp = pdp.with_name(pdp.name[: -len("_labels.csv")] + ".csv")
        truths = load_pdp_csv(pdp).by_id(args.id).labels
    peaks = [int(i) for i in t["index"][t["peak_flag"] == 1]]
    svg = render_svg(t["original"], t["reconstruction"], peaks, truths, title=f"PDP {args.id}")
    out = Path(args.out) if args.out else Path(args.trace).with_name(f"record_{args.id}.svg")
    out.write_text(svg, encoding="utf-8")
    write_manifest(out.parent, "report", _config(args), inputs=[args.trace], outputs=[out])
    print(f"wrote {out}")


# -- parser --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="mpcdetect", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--from-manifest", metavar="JSON", help="replay a previous run's manifest")
        sp.set_defaults(func=func)
        return sp

    s = add("synth", cmd_synth, "generate a labeled synthetic PDP dataset")
    d = SynthParams()
    s.add_argument("--records", type=int, default=80)
    s.add_argument("--length", type=int, default=d.length)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--peaks-min", type=int, default=d.n_peaks[0])
    s.add_argument("--peaks-max", type=int, default=d.n_peaks[1])
    s.add_argument("--decay-db", type=float, default=d.decay_db_per_sample)
    s.add_argument("--noise-floor-db", type=float, default=d.noise_floor_db)
    s.add_argument("--peak-power-min", type=float, default=d.peak_power_db[0])
    s.add_argument("--peak-power-max", type=float, default=d.peak_power_db[1])
    s.add_argument("--noise-sigma-db", type=float, default=d.noise_sigma_db)
    s.add_argument("--min-separation", type=int, default=d.min_peak_separation)
    s.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./runs)")

    t = add("train", cmd_train, "train an autoencoder on the even-indexed records")
    t.add_argument("--arch", type=str.lower, choices=[a.lower() for a in ARCHS], required=True)
    t.add_argument("--data", required=True, help="dataset directory or PDP CSV")
    t.add_argument("--chunk", type=int, default=85, help="subsequence length for lstm/gru")
    tc = TrainConfig()
    t.add_argument("--epochs", type=int, default=tc.max_epochs)
    t.add_argument("--batch-size", type=int, default=tc.batch_size)
    t.add_argument("--lr", type=float, default=tc.learning_rate)
    t.add_argument("--patience", type=int, default=tc.early_stop_patience)
    t.add_argument("--val-fraction", type=float, default=tc.validation_fraction)
    t.add_argument("--augment-variants", type=int, default=AugmentConfig().variants_per_record)
    t.add_argument("--seed", type=int, default=tc.seed)
    t.add_argument("--out", default=None)

    dt = add("detect", cmd_detect, "reconstruct records and detect MPC peaks")
    dt.add_argument("--model", required=True, help="directory written by train")
    dt.add_argument("--data", required=True)
    dt.add_argument("--split", choices=("train", "test", "all"), default="test")
    dc = DetectionConfig()
    dt.add_argument("--threshold-k", type=float, default=dc.threshold_k)
    dt.add_argument("--eps1", type=float, default=dc.eps1)
    dt.add_argument("--min-pts1", type=int, default=dc.min_pts1)
    dt.add_argument("--eps2", type=float, default=dc.eps2)
    dt.add_argument("--min-pts2", type=int, default=dc.min_pts2)
    dt.add_argument("--out", default=None)

    e = add("eval", cmd_eval, "relaxed precision/recall/F1 of detections")
    e.add_argument("--detections", help="detections.csv from detect")
    e.add_argument("--labels", help="dataset directory, PDP CSV or label CSV")
    e.add_argument("--tolerance", type=int, default=MetricsConfig().tolerance_n)
    e.add_argument("--check-table2", action="store_true",
                   help="recompute F1 from the published precision/recall pairs")
    e.add_argument("--out", default=None, help="metrics JSON path")

    r = add("report", cmd_report, "render one record of a trace CSV as SVG")
    r.add_argument("--trace", required=True)
    r.add_argument("--id", type=int, required=True)
    r.add_argument("--labels", help="dataset for ground-truth lines")
    r.add_argument("--out", default=None)
    return p


def _fill_defaults(args):
    base = Path(default_out())
    if getattr(args, "out", None) is None:
        if args.command == "synth":
            args.out = str(base / "data")
        elif args.command == "train":
            args.out = str(base / f"model_{args.arch}")
        elif args.command == "detect":
            args.out = str(base / "detect")
        elif args.command == "eval":
            args.out = str(base / "metrics.json")


def _replay(args):
    doc = json.loads(Path(args.from_manifest).read_text(encoding="utf-8"))
    if doc.get("command") != args.command:
        raise ParameterError(f"manifest is for '{doc.get('command')}', not '{args.command}'")
    cfg = dict(doc["config"])
    for derived in ("chunk_length", "record_ids", "model_manifest_sha256"):
        cfg.pop(derived, None)
    ns = argparse.Namespace(**cfg)
    ns.func, ns.from_manifest, ns.verbose = args.func, None, args.verbose
    return ns


def main(argv=None):
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    # a manifest replaces the required flags, so parse loosely first
    if "--from-manifest" in argv:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("command")
        pre.add_argument("--from-manifest")
        pre.add_argument("-v", "--verbose", action="store_true")
        known, _ = pre.parse_known_args(argv)
        funcs = {"synth": cmd_synth, "train": cmd_train, "detect": cmd_detect,
                 "eval": cmd_eval, "report": cmd_report}
        if known.command not in funcs:
            parser.error(f"unknown command {known.command!r}")
        known.func = funcs[known.command]
        args = _replay(known)
        args.command = known.command
    else:
        args = parser.parse_args(argv)
        _fill_defaults(args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MpcDetectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())

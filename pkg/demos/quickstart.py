"""Train a small transformer autoencoder on synthetic profiles and score its peaks.

Run from the repository root after installing the package:

    python demos/quickstart.py --records 20 --epochs 5

Writes ``demo_out/record_<id>.svg`` for the first test record.
"""

import argparse
from pathlib import Path

from mpcdetect.metrics import MetricsConfig
from mpcdetect.models import TrainConfig
from mpcdetect.pipeline import run_experiment
from mpcdetect.plot import render_svg
from mpcdetect.synth import SynthDatasetSpec, SynthParams, generate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--records", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--arch", default="TRANSFORMER")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--out", default="demo_out")
    args = ap.parse_args()

    pdp_set = generate_dataset(SynthDatasetSpec(args.records, SynthParams(seed=args.seed)))
    cfg = TrainConfig(max_epochs=args.epochs, early_stop_patience=min(5, args.epochs - 1) or 1,
                      seed=args.seed)
    model, results, report = run_experiment(
        pdp_set, args.arch, cfg, metrics_cfg=MetricsConfig(5),
        progress=lambda e, t, v: print(f"epoch {e}: train {t:.5f}  val {v:.5f}"))
    print(f"best epoch {model.best_epoch}; P={report.precision:.3f} R={report.recall:.3f} F1={report.f1:.3f}")

    first = results[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    svg = render_svg(first.original, first.reconstruction, first.detection.peaks.indices,
                     first.labels, title=f"record {first.record_id}")
    (out / f"record_{first.record_id}.svg").write_text(svg, encoding="utf-8")
    print(f"wrote {out / f'record_{first.record_id}.svg'}")


if __name__ == "__main__":
    main()

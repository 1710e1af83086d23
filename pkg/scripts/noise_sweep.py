"""Accuracy of one architecture as the SNR drops.

Trains with full cross-validation at each SNR and writes a CSV plus an SVG chart.
A small --per-class keeps this under a few minutes per point.
"""

import argparse
import csv
from pathlib import Path

from pqcnn.dataset import build_dataset
from pqcnn.plots import line_chart_svg
from pqcnn.signals import SignalSpec
from pqcnn.trainer import TrainConfig, run_cv

p = argparse.ArgumentParser()
p.add_argument("--arch", default="cnn-1c")
p.add_argument("--per-class", type=int, default=100)
p.add_argument("--snr", type=float, nargs="+", default=[80, 60, 40, 30, 20])
p.add_argument("--k-folds", type=int, default=5)
p.add_argument("--seed", type=int, default=0)
p.add_argument("--out", type=Path, default=Path("runs/noise_sweep"))
args = p.parse_args()

clean = build_dataset(SignalSpec(), args.per_class, args.seed)
rows = []
for snr in args.snr:
    r = run_cv(clean, TrainConfig(architecture=args.arch, k_folds=args.k_folds, seed=args.seed, noise_snr_db=snr))
    rows.append((snr, r.mean_val_acc, r.mean_stop_epoch))
    print(f"{snr:6g} dB  acc {r.mean_val_acc:.4f}  mean stop epoch {r.mean_stop_epoch:.1f}", flush=True)

args.out.mkdir(parents=True, exist_ok=True)
with open(args.out / "sweep.csv", "w", newline="") as fh:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["snr_db", "mean_val_acc", "mean_stop_epoch"])
    w.writerows(rows)
svg = line_chart_svg({args.arch: ([r[0] for r in rows], [r[1] for r in rows])},
                     title=f"{args.arch} accuracy vs SNR", xlabel="SNR (dB)", ylabel="mean val accuracy")
(args.out / "sweep.svg").write_text(svg)

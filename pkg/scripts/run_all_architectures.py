"""Train the four architectures on clean and 80 dB data, then print the comparison table.

Usage: python scripts/run_all_architectures.py [--per-class 500] [--k-folds 10] [--threads N] [--out runs]

Each (architecture, noise) pair becomes a bundle under --out; rerunning skips
bundles that already have a summary.csv.
"""

import argparse
from pathlib import Path

from pqcnn.cli import main
from pqcnn.nn import ARCHITECTURES

p = argparse.ArgumentParser()
p.add_argument("--per-class", type=int, default=500)
p.add_argument("--seed", type=int, default=0)
p.add_argument("--k-folds", type=int, default=10)
p.add_argument("--threads", type=int, default=1)
p.add_argument("--snr-db", type=float, default=80.0)
p.add_argument("--out", type=Path, default=Path("runs"))
args = p.parse_args()

data = args.out / "data.pqds"
if not data.exists():
    main(["generate", "--per-class", str(args.per_class), "--seed", str(args.seed), "--out", str(data)])

for arch in ARCHITECTURES:
    for snr in (None, args.snr_db):
        name = arch if snr is None else f"{arch}-snr{snr:g}"
        bundle = args.out / name
        if (bundle / "summary.csv").exists():
            continue
        argv = ["train", "--arch", arch, "--data", str(data), "--seed", str(args.seed),
                "--k-folds", str(args.k_folds), "--threads", str(args.threads), "--out", str(bundle)]
        if snr is not None:
            argv += ["--snr-db", str(snr)]
        print(f"== {name}", flush=True)
        if main(argv) != 0:
            raise SystemExit(1)

raise SystemExit(main(["report", str(args.out)]))

"""Command-line entry point: ``pqcnn {generate,train,evaluate,report}``.

Every command writes a ``manifest.json`` next to its outputs with keys
``command``, ``config`` (all resolved flag values), ``seed``, ``inputs``,
``outputs`` and ``tool_version``; ``train`` adds ``wall_time_s``.
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import Dataset, add_noise, build_dataset, export_csv, load_dataset, save_dataset
from .nn import ARCHITECTURES, STRUCTURE_STRINGS, ShapeError, build_architecture, load_model, save_model
from .plots import line_chart_svg
from .signals import EventClass, SignalSpec
from .trainer import CONFUSION, TrainConfig, evaluate, read_summary, run_cv, write_report


class CLIError(Exception):
    pass


def _manifest(command: str, args: argparse.Namespace, inputs, outputs, **extra) -> str:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in config.items()}
    body = {
        "command": command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        **extra,
    }
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _publish(staging: Path, outdir: Path) -> None:
    """Move every file from ``staging`` into ``outdir`` only after all were written."""
    outdir.mkdir(parents=True, exist_ok=True)
    for f in sorted(staging.iterdir()):
        dest = outdir / f.name
        if dest.is_dir():
            shutil.rmtree(dest)
        shutil.move(str(f), str(dest))


def _staging(outdir: Path) -> Path:
    parent = outdir.resolve().parent
    parent.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=".pqcnn-", dir=parent))


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _arch(name: str) -> str:
    key = name.lower()
    if key not in ARCHITECTURES:
        raise CLIError(f"unknown architecture {name!r}; choose from {{{', '.join(ARCHITECTURES)}}}")
    return key


# ---------------------------------------------------------------- generate


def cmd_generate(args) -> None:
    out = Path(args.out)
    spec = SignalSpec(args.sample_rate, args.fundamental, args.duration)
    d = build_dataset(spec, args.per_class, args.seed)
    if args.snr_db is not None:
        d = add_noise(d, args.snr_db)

    stage = _staging(out.parent / (out.name + ".d"))
    try:
        outputs = [out]
        save_dataset(d, stage / out.name)
        if args.csv:
            export_csv(d, stage / (out.stem + ".csv"))
            outputs.append(out.with_suffix(".csv"))
        if args.plot:
            plot_dir = stage / (out.stem + "_plots")
            plot_dir.mkdir()
            _plot_examples(d, plot_dir)
            outputs.append(out.parent / plot_dir.name)
        (stage / (out.stem + ".manifest.json")).write_text(
            _manifest("generate", args, [], outputs, noise_snr_db=d.noise_snr_db, n_records=len(d))
        )
        _publish(stage, out.parent)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    print(f"wrote {len(d)} records to {out}")


def _plot_examples(d: Dataset, plot_dir: Path) -> None:
    """First record of each class as SVG + two-column CSV."""
    t = d.spec.time()
    seen = set()
    for r in d.records:
        if r.label in seen:
            continue
        seen.add(r.label)
        stem = f"class{int(r.label)}_{r.label.name.lower()}"
        svg = line_chart_svg(
            {r.label.display_name: (t.tolist(), r.samples.tolist())},
            title=r.label.display_name, xlabel="time (s)", ylabel="voltage (p.u.)",
        )
        (plot_dir / f"{stem}.svg").write_text(svg)
        with open(plot_dir / f"{stem}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", "v_pu"])
            w.writerows([repr(float(a)), repr(float(b))] for a, b in zip(t, r.samples))


# ---------------------------------------------------------------- train


def cmd_train(args) -> None:
    arch = _arch(args.arch)
    d = load_dataset(args.data)
    config = TrainConfig(
        architecture=arch,
        k_folds=args.k_folds,
        max_epochs=args.max_epochs,
        patience=args.patience,
        min_delta=args.min_delta,
        batch_size=args.batch_size,
        seed=args.seed,
        noise_snr_db=args.snr_db,
        lr=args.lr,
        filters=args.filters,
        workers=args.threads,
    )

    def progress(f):
        if not args.quiet:
            print(f"fold {f.fold}: best val acc {f.best_val_acc:.4f} (epoch {f.best_epoch}, stopped at {f.stop_epoch})",
                  flush=True)

    report = run_cv(d, config, progress=progress)
    outdir = Path(args.out or f"runs/{arch}" + ("" if args.snr_db is None else f"-snr{args.snr_db:g}"))

    stage = _staging(outdir)
    try:
        write_report(report, stage)
        best = report.best_fold
        net = _restore(arch, d, config, best.weights)
        save_model(net, stage / "model.pqnn")
        fold0 = report.per_fold[0].epoch_log
        epochs = list(range(1, len(fold0) + 1))
        (stage / "accuracy.svg").write_text(line_chart_svg(
            {"train": (epochs, [e.train_acc for e in fold0]), "validation": (epochs, [e.val_acc for e in fold0])},
            title=f"{arch} fold 0 accuracy", xlabel="epoch", ylabel="accuracy",
        ))
        outputs = sorted(p.name for p in stage.iterdir()) + ["manifest.json"]
        (stage / "manifest.json").write_text(_manifest(
            "train", args, [args.data], [str(outdir / o) for o in outputs],
            wall_time_s=round(report.wall_time_s, 3), best_fold=best.fold,
        ))
        _publish(stage, outdir)
    finally:
        shutil.rmtree(stage, ignore_errors=True)

    stops = " ".join(str(f.stop_epoch) for f in report.per_fold)
    print(f"{arch}: mean val acc {report.mean_val_acc:.4f}; stop epochs [{stops}] "
          f"(mean {report.mean_stop_epoch:.1f}); {report.wall_time_s:.0f}s -> {outdir}")


def _restore(arch, d, config, weights):
    net = build_architecture(arch, d.spec.n_samples, seed=0, filters=config.filters)
    net.set_weights(weights)
    return net


# ---------------------------------------------------------------- evaluate


def cmd_evaluate(args) -> None:
    net = load_model(args.model)
    d = load_dataset(args.data)
    if args.snr_db is not None:
        d = add_noise(d, args.snr_db, seed=args.seed)
    if (1, d.spec.n_samples) != net.input_shape:
        raise ShapeError(
            f"model expects input length {net.input_shape[1]}, dataset has {d.spec.n_samples} samples"
        )
    acc, cm = evaluate(net, d)
    outdir = Path(args.out)
    stage = _staging(outdir)
    try:
        with open(stage / "metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["accuracy", "n_records", "noise_snr_db"])
            w.writerow([repr(acc), len(d), "" if d.noise_snr_db is None else repr(d.noise_snr_db)])
        _write_confusion(cm, stage / CONFUSION)
        (stage / "manifest.json").write_text(_manifest(
            "evaluate", args, [args.model, args.data],
            [str(outdir / n) for n in ("metrics.csv", CONFUSION, "manifest.json")],
        ))
        _publish(stage, outdir)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    print(f"accuracy {acc:.4f} on {len(d)} records -> {outdir}")


def _write_confusion(cm: np.ndarray, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred"] + [str(int(c)) for c in EventClass])
        for c, row in zip(EventClass, cm):
            w.writerow([int(c)] + [int(v) for v in row])


# ---------------------------------------------------------------- report


def find_bundles(paths) -> list[Path]:
    bundles = []
    for p in map(Path, paths):
        if (p / "summary.csv").is_file():
            bundles.append(p)
        elif p.is_dir():
            bundles += sorted(q for q in p.iterdir() if (q / "summary.csv").is_file())
    return bundles


def format_table(rows: list[dict]) -> str:
    """Fixed-width accuracy table, one row per architecture, percentages."""
    by_arch: dict[str, dict] = {}
    for r in rows:
        slot = by_arch.setdefault(r["architecture"], {"clean": None, "noisy": None})
        slot["clean" if r["noise_snr_db"] is None else "noisy"] = r["mean_val_acc"]
    header = f"{'Network':<9} {'Structure':<30} {'Original':>9} {'Noisy':>9}"
    lines = [header, "-" * len(header)]
    for arch in sorted(by_arch):
        acc = by_arch[arch]

        def cell(v):
            return f"{100 * v:9.2f}" if v is not None else f"{'-':>9}"

        lines.append(f"{arch.upper():<9} {STRUCTURE_STRINGS.get(arch, '?'):<30} {cell(acc['clean'])} {cell(acc['noisy'])}")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> None:
    bundles = find_bundles(args.bundles)
    if not bundles:
        raise CLIError(f"no report bundles (directories with summary.csv) under {', '.join(args.bundles)}")
    table = format_table([read_summary(b) for b in bundles])
    if args.out:
        Path(args.out).write_text(table)
    sys.stdout.write(table)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pqcnn", description="Power-quality waveform synthesis and 1-D CNN classification")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a labeled waveform dataset")
    g.add_argument("--per-class", type=_positive_int, default=500)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--sample-rate", type=float, default=5000.0)
    g.add_argument("--fundamental", type=float, default=60.0)
    g.add_argument("--duration", type=float, default=0.2)
    g.add_argument("--snr-db", type=float, default=None, help="add white Gaussian noise at this SNR")
    g.add_argument("--out", default="data.pqds")
    g.add_argument("--csv", action="store_true", help="also export a CSV of all records")
    g.add_argument("--plot", action="store_true", help="write one SVG + CSV per class")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="stratified k-fold training with early stopping")
    t.add_argument("--arch", required=True, help="one of " + ", ".join(ARCHITECTURES))
    t.add_argument("--data", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--k-folds", type=int, default=10)
    t.add_argument("--max-epochs", type=_positive_int, default=100)
    t.add_argument("--patience", type=_positive_int, default=10)
    t.add_argument("--min-delta", type=float, default=0.0001)
    t.add_argument("--batch-size", type=_positive_int, default=32)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--filters", type=_positive_int, default=8)
    t.add_argument("--snr-db", type=float, default=None, help="noise the dataset before training")
    t.add_argument("--threads", type=_positive_int, default=1, help="parallel fold workers; 1 = serial")
    t.add_argument("--out", default=None, help="output directory (default runs/<arch>[-snr<db>])")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a saved model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--snr-db", type=float, default=None, help="noise the dataset before scoring")
    e.add_argument("--seed", type=int, default=None, help="noise seed (default: dataset seed)")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="tabulate clean/noisy accuracies from train bundles")
    r.add_argument("bundles", nargs="+", help="bundle directories or a directory containing them")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CLIError, ValueError, OSError) as exc:
        print(f"pqcnn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

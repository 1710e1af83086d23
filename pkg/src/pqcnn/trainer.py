"""Stratified k-fold training with early stopping and confusion-matrix evaluation."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, add_noise, stratified_folds
from .nn import N_CLASSES, Network, batch_cross_entropy, build_architecture
from .optim import NadamState, make_batches, nadam_step

EVAL_CHUNK = 256


@dataclass
class TrainConfig:
    architecture: str = "cnn-1c"
    k_folds: int = 10
    max_epochs: int = 100
    patience: int = 10
    min_delta: float = 0.0001
    batch_size: int = 32
    seed: int = 0
    noise_snr_db: float | None = None
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    filters: int = 8
    workers: int = 1

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.min_delta < 0:
            raise ValueError("min_delta must be >= 0")
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be >= 1")


@dataclass
class EpochLog:
    train_acc: float
    train_loss: float
    val_acc: float
    val_loss: float


@dataclass
class FoldRecord:
    fold: int
    epoch_log: list[EpochLog]
    stop_epoch: int
    early_stopped: bool
    best_epoch: int
    best_val_acc: float
    weights: list[np.ndarray] = field(repr=False, default_factory=list)
    confusion: np.ndarray | None = field(repr=False, default=None)


@dataclass
class TrainReport:
    config: TrainConfig
    per_fold: list[FoldRecord]
    mean_val_acc: float
    confusion: np.ndarray
    wall_time_s: float

    @property
    def mean_stop_epoch(self) -> float:
        return float(np.mean([f.stop_epoch for f in self.per_fold]))

    @property
    def best_fold(self) -> FoldRecord:
        # ties -> lowest fold index
        return max(self.per_fold, key=lambda f: (f.best_val_acc, -f.fold))


def early_stop(val_acc_history, patience: int, min_delta: float) -> bool:
    """True once none of the last ``patience`` epochs beat the running best by more than ``min_delta``.

    The running best is the maximum over all earlier epochs, so a slow creep of
    sub-threshold gains still counts as a plateau.
    """
    if len(val_acc_history) == 0:
        raise ValueError("history must be non-empty")
    best, wait = -math.inf, 0
    for acc in val_acc_history:
        # accuracies are count ratios; the slack keeps a gain of exactly min_delta from
        # qualifying through float rounding
        if acc - best > min_delta + 1e-12:
            wait = 0
        else:
            wait += 1
        best = max(best, acc)
    return wait >= patience


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def _scores(net: Network, X: np.ndarray) -> np.ndarray:
    return np.concatenate([net.logits(X[i : i + EVAL_CHUNK]) for i in range(0, len(X), EVAL_CHUNK)])


def evaluate(net: Network, X, y=None) -> tuple[float, np.ndarray]:
    """Accuracy and 6x6 confusion (rows = true class, columns = predicted).

    ``X`` may be a Dataset, in which case labels come from it.
    """
    if isinstance(X, Dataset):
        X, y = X.X, X.y
    if len(X) == 0:
        raise ValueError("cannot evaluate on an empty set")
    pred = np.argmax(_scores(net, X), axis=1)
    cm = confusion_matrix(y, pred, net.n_classes)
    return float(np.trace(cm) / cm.sum()), cm


def _loss_acc(net: Network, X, y) -> tuple[float, float]:
    z = _scores(net, X)
    loss, _ = batch_cross_entropy(z, y)
    return float(np.mean(np.argmax(z, axis=1) == y)), loss


def fold_seeds(seed: int, fold: int) -> tuple[int, np.random.Generator]:
    """Independent (init seed, batch-order generator) for one fold."""
    ss = np.random.SeedSequence([seed, fold])
    init_ss, batch_ss = ss.spawn(2)
    return int(init_ss.generate_state(1)[0]), np.random.default_rng(batch_ss)


def train_fold(
    net: Network,
    train_idx,
    val_idx,
    dataset,
    config: TrainConfig,
    rng: np.random.Generator,
    fold: int = 0,
) -> FoldRecord:
    """Train ``net`` in place and leave it holding its best-validation weights."""
    X, y = (dataset.X, dataset.y) if isinstance(dataset, Dataset) else dataset
    train_idx = np.asarray(train_idx)
    val_idx = np.asarray(val_idx)
    val_mask = np.zeros(len(y), dtype=bool)
    val_mask[val_idx] = True
    if val_mask[train_idx].any():
        raise ValueError("train and validation indices overlap")

    params = net.parameters()
    state = NadamState.for_params(
        params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps
    )
    Xv, yv = X[val_idx], y[val_idx]
    log: list[EpochLog] = []
    history: list[float] = []
    best_acc, best_epoch, best_weights = -1.0, 0, net.get_weights()
    stopped = False
    for epoch in range(1, config.max_epochs + 1):
        for batch in make_batches(train_idx, config.batch_size, rng):
            assert not val_mask[batch].any(), "validation record leaked into a training batch"
            net.backward(X[batch], y[batch])
            nadam_step(params, net.gradients(), state)
        tr_acc, tr_loss = _loss_acc(net, X[train_idx], y[train_idx])
        va_acc, va_loss = _loss_acc(net, Xv, yv)
        log.append(EpochLog(tr_acc, tr_loss, va_acc, va_loss))
        history.append(va_acc)
        if va_acc > best_acc:
            best_acc, best_epoch, best_weights = va_acc, epoch, net.get_weights()
        if early_stop(history, config.patience, config.min_delta):
            stopped = True
            break
    net.set_weights(best_weights)
    return FoldRecord(
        fold=fold,
        epoch_log=log,
        stop_epoch=len(log),
        early_stopped=stopped,
        best_epoch=best_epoch,
        best_val_acc=best_acc,
        weights=best_weights,
    )


def _run_one_fold(args) -> FoldRecord:
    X, y, fold_of, fold, config = args
    init_seed, rng = fold_seeds(config.seed, fold)
    net = build_architecture(config.architecture, X.shape[2], seed=init_seed, filters=config.filters)
    train_idx = np.flatnonzero(fold_of != fold)
    val_idx = np.flatnonzero(fold_of == fold)
    rec = train_fold(net, train_idx, val_idx, (X, y), config, rng, fold=fold)
    acc, cm = evaluate(net, X[val_idx], y[val_idx])
    if acc != rec.best_val_acc:
        raise RuntimeError(f"fold {fold}: restored weights score {acc}, logged best {rec.best_val_acc}")
    rec.confusion = cm
    return rec


def prepare_dataset(dataset: Dataset, config: TrainConfig) -> Dataset:
    """Apply the configured noise, unless the dataset already carries it."""
    snr = config.noise_snr_db
    if snr is None or dataset.noise_snr_db == snr:
        return dataset
    if dataset.noise_snr_db is not None:
        raise ValueError(
            f"dataset already noised at {dataset.noise_snr_db} dB, config asks for {snr} dB"
        )
    return add_noise(dataset, snr)


def run_cv(dataset: Dataset, config: TrainConfig, progress=None) -> TrainReport:
    """Stratified k-fold training; headline accuracy is the mean of per-fold best validation accuracy."""
    start = time.perf_counter()
    dataset = prepare_dataset(dataset, config)
    fold_of = stratified_folds(dataset, config.k_folds, config.seed)
    jobs = [(dataset.X, dataset.y, fold_of, f, config) for f in range(config.k_folds)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            folds = list(pool.map(_run_one_fold, jobs))
    else:
        folds = []
        for job in jobs:
            folds.append(_run_one_fold(job))
            if progress:
                progress(folds[-1])
    confusion = sum((f.confusion for f in folds), np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64))
    return TrainReport(
        config=config,
        per_fold=folds,
        mean_val_acc=float(np.mean([f.best_val_acc for f in folds])),
        confusion=confusion,
        wall_time_s=time.perf_counter() - start,
    )


# ---------------------------------------------------------------- report bundle

EPOCH_LOG = "epoch_log.csv"
CONFUSION = "confusion.csv"
SUMMARY = "summary.csv"
FOLDS = "folds.csv"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_report(report: TrainReport, outdir) -> None:
    """Epoch log, per-fold summary, pooled confusion and a one-line summary, all CSV.

    Wall time is left out so reruns produce byte-identical files.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / EPOCH_LOG, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "epoch", "train_acc", "train_loss", "val_acc", "val_loss"])
        for f in report.per_fold:
            for e, row in enumerate(f.epoch_log, 1):
                w.writerow([f.fold, e] + [_fmt(v) for v in asdict(row).values()])
    with open(outdir / FOLDS, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "stop_epoch", "early_stopped", "best_epoch", "best_val_acc"])
        for f in report.per_fold:
            w.writerow([f.fold, f.stop_epoch, int(f.early_stopped), f.best_epoch, _fmt(f.best_val_acc)])
    with open(outdir / CONFUSION, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred"] + [str(c) for c in range(1, N_CLASSES + 1)])
        for i, row in enumerate(report.confusion, 1):
            w.writerow([i] + [int(v) for v in row])
    cfg = report.config
    with open(outdir / SUMMARY, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["architecture", "noise_snr_db", "k_folds", "mean_val_acc", "mean_stop_epoch", "stop_epochs"])
        w.writerow([
            cfg.architecture,
            "" if cfg.noise_snr_db is None else _fmt(cfg.noise_snr_db),
            cfg.k_folds,
            _fmt(report.mean_val_acc),
            _fmt(report.mean_stop_epoch),
            " ".join(str(f.stop_epoch) for f in report.per_fold),
        ])


def read_summary(bundle) -> dict:
    path = Path(bundle) / SUMMARY
    with open(path, newline="") as fh:
        row = next(csv.DictReader(fh))
    row["mean_val_acc"] = float(row["mean_val_acc"])
    row["noise_snr_db"] = float(row["noise_snr_db"]) if row["noise_snr_db"] else None
    return row

"""Labeled waveform datasets: construction, noise injection, stratified folds, persistence.

File layout of a ``.pqds`` dataset (all integers and floats little-endian)::

    magic            4 bytes   b"PQDS"
    version          u16       FORMAT_VERSION
    spec             4 x f64   sample_rate_hz, fundamental_hz, duration_s, amplitude_pu
    seed             u64
    has_noise        u8        0 = clean, 1 = noisy
    noise_snr_db     f64       meaningful only when has_noise == 1
    n_samples        u32       samples per record
    n_records        u64
    records          n_records x (label u8, 9 x f64 params, n_samples x f64 samples)

Parameter order is ``EventParams.FIELDS``.
"""

from __future__ import annotations

import csv
import math
import struct
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .signals import EventClass, EventParams, SignalSpec, Waveform, generate, sample_params

MAGIC = b"PQDS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sH4dQBdIQ")
_PARAMS = struct.Struct("<B9d")

# stream tags mixed into per-record seeds so generation and noise draws never share a stream
_GEN_STREAM = 0
_NOISE_STREAM = 1


class DatasetFormatError(ValueError):
    """Malformed dataset file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class FormatVersionError(DatasetFormatError):
    pass


class SilentSignalError(ValueError):
    pass


class TooFewRecordsError(ValueError):
    pass


@dataclass
class Dataset:
    records: list[Waveform]
    seed: int = 0
    noise_snr_db: float | None = None
    spec: SignalSpec = field(default_factory=SignalSpec)

    def __post_init__(self):
        for r in self.records:
            if r.spec != self.spec:
                raise ValueError("all records must share the dataset's SignalSpec")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def class_counts(self) -> dict[EventClass, int]:
        counts = Counter(r.label for r in self.records)
        return {c: counts.get(c, 0) for c in EventClass}

    @cached_property
    def X(self) -> np.ndarray:
        """Samples stacked as (n_records, 1, n_samples)."""
        if not self.records:
            return np.zeros((0, 1, self.spec.n_samples))
        return np.stack([r.samples for r in self.records])[:, None, :]

    @cached_property
    def y(self) -> np.ndarray:
        """Zero-based class indices (class code minus one)."""
        return np.array([int(r.label) - 1 for r in self.records], dtype=np.int64)


def record_rng(seed: int, index: int, stream: int = _GEN_STREAM) -> np.random.Generator:
    return np.random.default_rng([seed, stream, index])


def build_dataset(spec: SignalSpec = SignalSpec(), per_class: int = 500, seed: int = 0) -> Dataset:
    """``per_class`` waveforms of each class, ordered class by class.

    Record ``i`` draws from its own generator seeded by ``(seed, i)`` so the
    result does not depend on generation order.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    records = []
    for c in EventClass:
        for j in range(per_class):
            idx = (int(c) - 1) * per_class + j
            p = sample_params(c, record_rng(seed, idx), spec)
            records.append(generate(c, spec, p))
    return Dataset(records, seed=seed, spec=spec)


def add_awgn(w: Waveform, snr_db: float, rng: np.random.Generator) -> Waveform:
    """Add zero-mean white Gaussian noise at ``snr_db`` relative to the clean mean-square power."""
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db!r}")
    if snr_db == math.inf:
        return w
    power = float(np.mean(w.samples**2))
    if power == 0.0:
        raise SilentSignalError("cannot calibrate noise against a silent waveform")
    sigma = math.sqrt(power / 10.0 ** (snr_db / 10.0))
    noisy = w.samples + rng.normal(0.0, sigma, size=w.samples.shape)
    return replace(w, samples=noisy)


def add_noise(d: Dataset, snr_db: float, seed: int | None = None) -> Dataset:
    """New dataset with every record independently noised; ``d`` is left untouched."""
    seed = d.seed if seed is None else seed
    records = [add_awgn(r, snr_db, record_rng(seed, i, _NOISE_STREAM)) for i, r in enumerate(d.records)]
    return Dataset(records, seed=d.seed, noise_snr_db=snr_db, spec=d.spec)


def stratified_folds(labels, k: int, seed: int = 0) -> np.ndarray:
    """Fold id in ``[0, k)`` for every record, balancing each class across folds.

    ``labels`` is a Dataset or a sequence of class labels. Within each class the
    records are shuffled and dealt round-robin; the dealing start rotates from
    class to class so fold sizes stay balanced overall too.
    """
    if isinstance(labels, Dataset):
        labels = [int(r.label) for r in labels.records]
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    start = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k:
            raise TooFewRecordsError(f"class {c} has {len(idx)} records, need at least k={k}")
        idx = rng.permutation(idx)
        fold_of[idx] = (start + np.arange(len(idx))) % k
        start = (start + len(idx)) % k
    return fold_of


def save_dataset(d: Dataset, path) -> None:
    path = Path(path)
    n = d.spec.n_samples
    s = d.spec
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        s.sample_rate_hz,
        s.fundamental_hz,
        s.duration_s,
        s.amplitude_pu,
        d.seed,
        0 if d.noise_snr_db is None else 1,
        0.0 if d.noise_snr_db is None else d.noise_snr_db,
        n,
        len(d.records),
    )
    chunks = [header]
    for r in d.records:
        chunks.append(_PARAMS.pack(int(r.label), *r.params.as_tuple()))
        chunks.append(np.ascontiguousarray(r.samples, dtype="<f8").tobytes())
    tmp = path.with_name(path.name + ".part")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


def load_dataset(path) -> Dataset:
    buf = Path(path).read_bytes()
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise DatasetFormatError("bad magic, not a PQDS dataset", 0)
    if len(buf) < _HEADER.size:
        raise DatasetFormatError("truncated header", len(buf))
    (_, version, fs, f0, dur, amp, seed, has_noise, snr, n, count) = _HEADER.unpack_from(buf, 0)
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"unsupported format version {version}, expected {FORMAT_VERSION}", 4)
    try:
        spec = SignalSpec(fs, f0, dur, amp)
    except ValueError as exc:
        raise DatasetFormatError(f"invalid signal spec: {exc}", 6) from exc
    if spec.n_samples != n:
        raise DatasetFormatError(f"n_samples {n} disagrees with spec ({spec.n_samples})", _HEADER.size - 12)

    rec_size = _PARAMS.size + 8 * n
    expected = _HEADER.size + count * rec_size
    if len(buf) != expected:
        if len(buf) < expected:
            # report the start of the first incomplete record
            full = (len(buf) - _HEADER.size) // rec_size
            raise DatasetFormatError(
                f"truncated: {count} records declared, {full} complete", _HEADER.size + full * rec_size
            )
        raise DatasetFormatError("trailing bytes after last record", expected)

    records = []
    off = _HEADER.size
    for _ in range(count):
        label, *vals = _PARAMS.unpack_from(buf, off)
        try:
            label = EventClass(label)
        except ValueError:
            raise DatasetFormatError(f"invalid class label {label}", off) from None
        samples = np.frombuffer(buf, dtype="<f8", count=n, offset=off + _PARAMS.size).astype(np.float64)
        records.append(Waveform(samples, label, EventParams(*vals), spec))
        off += rec_size
    return Dataset(records, seed=seed, noise_snr_db=snr if has_noise else None, spec=spec)


def export_csv(d: Dataset, path) -> None:
    """One row per record: label then samples. For inspection, not round-tripping."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"s{i}" for i in range(d.spec.n_samples)])
        for r in d.records:
            w.writerow([int(r.label)] + [repr(float(x)) for x in r.samples])

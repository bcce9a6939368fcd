"""PDP records: CSV I/O, min-max normalization, alternating split,
roll/noise augmentation and fixed-length chunking."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateInputError,
    InsufficientDataError,
    ParameterError,
    ParseError,
    SchemaError,
    ValidationError,
)

REFERENCE_CHUNK_LENGTHS = (410, 205, 85, 41)
REFERENCE_LENGTH = 820

PDP_HEADER = ("id", "index", "power_db")
LABEL_HEADER = ("id", "peak_index")


def _check_labels(labels, length):
    labels = tuple(int(i) for i in labels)
    for a, b in zip(labels, labels[1:]):
        if b <= a:
            raise ValidationError(f"labels must be strictly increasing, got {a} then {b}")
    for i in labels:
        if not 0 <= i < length:
            raise ValidationError(f"label index {i} outside [0, {length})")
    return labels


@dataclass(frozen=True)
class PdpRecord:
    """One power delay profile snapshot with its labeled MPC apex indices."""

    id: int
    powers: np.ndarray
    labels: tuple[int, ...] = ()

    def __post_init__(self):
        if self.id < 0:
            raise ValidationError(f"record id must be non-negative, got {self.id}")
        powers = np.asarray(self.powers, dtype=np.float64)
        if powers.ndim != 1 or powers.size == 0:
            raise ValidationError(f"record {self.id}: powers must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(powers)):
            raise ValidationError(f"record {self.id}: powers contain non-finite values")
        powers.setflags(write=False)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "labels", _check_labels(self.labels, powers.size))

    def __len__(self):
        return self.powers.size

    def __eq__(self, other):
        if not isinstance(other, PdpRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.labels == other.labels
            and np.array_equal(self.powers, other.powers)
        )

    __hash__ = None


@dataclass(frozen=True)
class PdpSet:
    records: tuple[PdpRecord, ...]
    length: int = field(default=0)

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        if not records:
            if self.length < 0:
                raise SchemaError("length must be non-negative")
            return
        lengths = {len(r) for r in records}
        if len(lengths) != 1:
            raise SchemaError(f"records have inconsistent lengths {sorted(lengths)}")
        (length,) = lengths
        if self.length and self.length != length:
            raise SchemaError(f"declared length {self.length} != record length {length}")
        object.__setattr__(self, "length", length)
        ids = [r.id for r in records]
        if len(set(ids)) != len(ids):
            raise SchemaError("record ids are not unique")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def ids(self):
        return [r.id for r in self.records]

    def by_id(self, record_id):
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)


@dataclass(frozen=True)
class NormalizedPdp:
    """Min-max scaled profile.

    ``labels`` travel with the values so augmentation can move them;
    ``variant`` is 0 for an original and counts augmented copies otherwise.
    """

    values: np.ndarray
    scale_min: float
    scale_max: float
    source_id: int
    labels: tuple[int, ...] = ()
    variant: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError("values must be a non-empty 1-D sequence")
        if not self.scale_max > self.scale_min:
            raise DegenerateInputError(
                f"scale_max ({self.scale_max}) must exceed scale_min ({self.scale_min})"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", _check_labels(self.labels, values.size))

    def __len__(self):
        return self.values.size

    def denormalize(self):
        return denormalize(self.values, self.scale_min, self.scale_max)


# -- CSV ---------------------------------------------------------------------


def _read_rows(path, header):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", line=1) from None
        if tuple(c.strip() for c in first) != header:
            raise ParseError(f"{path}: expected header {','.join(header)}, got {','.join(first)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: expected {len(header)} fields, got {len(row)}", line=lineno)
            yield lineno, row


def _parse_int(text, path, lineno, what):
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{path}: {what} {text!r} is not an integer", line=lineno) from None


def _parse_float(text, path, lineno, what):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{path}: {what} {text!r} is not a number", line=lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"{path}: {what} {text!r} is not finite", line=lineno)
    return value


def label_path_for(pdp_path):
    """Companion label file: ``pdp.csv`` -> ``pdp_labels.csv``."""
    p = Path(pdp_path)
    return p.with_name(f"{p.stem}_labels{p.suffix}")


def load_pdp_csv(path, labels_path=None) -> PdpSet:
    """Read a PDP CSV (``id,index,power_db``) and its companion label CSV.

    If ``labels_path`` is omitted the companion file next to ``path`` is used
    when present; a missing label file yields empty label sets.
    """
    path = Path(path)
    samples: dict[int, dict[int, float]] = {}
    order: list[int] = []
    for lineno, row in _read_rows(path, PDP_HEADER):
        rid = _parse_int(row[0], path, lineno, "id")
        idx = _parse_int(row[1], path, lineno, "index")
        power = _parse_float(row[2], path, lineno, "power_db")
        if rid < 0 or idx < 0:
            raise ParseError(f"{path}: negative id or index", line=lineno)
        if rid not in samples:
            samples[rid] = {}
            order.append(rid)
        if idx in samples[rid]:
            raise ParseError(f"{path}: duplicate sample id={rid} index={idx}", line=lineno)
        samples[rid][idx] = power

    powers = {}
    for rid in order:
        s = samples[rid]
        n = len(s)
        if set(s) != set(range(n)):
            raise SchemaError(f"{path}: indices for id {rid} are not contiguous 0..{n - 1}")
        powers[rid] = np.array([s[i] for i in range(n)])
    lengths = {v.size for v in powers.values()}
    if len(lengths) > 1:
        raise SchemaError(f"{path}: inconsistent record lengths {sorted(lengths)}")

    labels: dict[int, list[int]] = {rid: [] for rid in order}
    if labels_path is None:
        candidate = label_path_for(path)
        labels_path = candidate if candidate.exists() else None
    if labels_path is not None:
        labels_path = Path(labels_path)
        for lineno, row in _read_rows(labels_path, LABEL_HEADER):
            rid = _parse_int(row[0], labels_path, lineno, "id")
            idx = _parse_int(row[1], labels_path, lineno, "peak_index")
            if rid not in labels:
                raise ValidationError(f"{labels_path}: line {lineno}: unknown record id {rid}")
            n = powers[rid].size
            if not 0 <= idx < n:
                raise ValidationError(
                    f"{labels_path}: line {lineno}: label index {idx} outside [0, {n})"
                )
            labels[rid].append(idx)

    records = []
    for rid in order:
        lab = sorted(labels[rid])
        if len(set(lab)) != len(lab):
            raise ValidationError(f"duplicate label index for record {rid}")
        records.append(PdpRecord(rid, powers[rid], tuple(lab)))
    return PdpSet(tuple(records))


def write_pdp_csv(pdp_set: PdpSet, path, labels_path=None):
    """Write ``pdp_set`` as PDP + label CSVs; returns both paths."""
    path = Path(path)
    labels_path = Path(labels_path) if labels_path else label_path_for(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PDP_HEADER)
        for r in pdp_set:
            for i, p in enumerate(r.powers):
                w.writerow((r.id, i, repr(float(p))))
    with labels_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_HEADER)
        for r in pdp_set:
            for i in r.labels:
                w.writerow((r.id, i))
    return path, labels_path


def labels_to_binary(labels, length):
    out = np.zeros(length, dtype=np.int8)
    out[list(_check_labels(labels, length))] = 1
    return out


def binary_to_labels(flags):
    return tuple(int(i) for i in np.flatnonzero(np.asarray(flags)))


# -- normalization -----------------------------------------------------------


def normalize_minmax(record: PdpRecord) -> NormalizedPdp:
    lo = float(np.min(record.powers))
    hi = float(np.max(record.powers))
    if not hi > lo:
        raise DegenerateInputError(f"record {record.id}: constant power sequence ({lo} dB)")
    values = (record.powers - lo) / (hi - lo)
    return NormalizedPdp(values, lo, hi, record.id, record.labels)


def denormalize(values, scale_min, scale_max):
    return np.asarray(values, dtype=np.float64) * (scale_max - scale_min) + scale_min


# -- split / augmentation ----------------------------------------------------


def split_alternating(pdp_set: PdpSet) -> tuple[PdpSet, PdpSet]:
    """Even positions go to train, odd positions to test (0-based, by position)."""
    if len(pdp_set) < 2:
        raise InsufficientDataError(f"need at least 2 records to split, got {len(pdp_set)}")
    recs = pdp_set.records
    return PdpSet(recs[0::2], pdp_set.length), PdpSet(recs[1::2], pdp_set.length)


def augment_roll(record: NormalizedPdp, shift: int) -> NormalizedPdp:
    n = len(record)
    if abs(shift) >= n and shift % n != 0:
        # |shift| >= L is only tolerated when it is a whole number of turns
        raise ParameterError(f"|shift| must be < {n}, got {shift}")
    values = np.roll(record.values, shift)
    labels = tuple(sorted((i + shift) % n for i in record.labels))
    return replace(record, values=values, labels=labels)


def augment_noise(record: NormalizedPdp, sigma: float, seed: int) -> NormalizedPdp:
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return record
    rng = np.random.default_rng(seed)
    noisy = record.values + rng.normal(0.0, sigma, size=len(record))
    return replace(record, values=np.clip(noisy, 0.0, 1.0))


@dataclass(frozen=True)
class AugmentConfig:
    variants_per_record: int = 10
    max_shift_fraction: float = 0.25
    sigmas: tuple[float, ...] = (0.005, 0.01, 0.02)
    seed: int = 0


def augment_dataset(records: Sequence[NormalizedPdp], cfg: AugmentConfig = AugmentConfig()):
    """Originals followed by their seeded roll+noise variants, grouped per source."""
    rng = np.random.default_rng(cfg.seed)
    out = []
    for rec in records:
        out.append(rec)
        n = len(rec)
        max_shift = int(n * cfg.max_shift_fraction)
        for v in range(1, cfg.variants_per_record + 1):
            shift = int(rng.integers(-max_shift, max_shift + 1))
            sigma = float(cfg.sigmas[int(rng.integers(len(cfg.sigmas)))])
            noise_seed = int(rng.integers(2**31 - 1))
            aug = augment_noise(augment_roll(rec, shift), sigma, noise_seed)
            out.append(replace(aug, variant=v))
    return out


# -- chunking ----------------------------------------------------------------


@dataclass(frozen=True)
class ChunkConfig:
    chunk_length: int

    def __post_init__(self):
        if self.chunk_length < 1:
            raise ParameterError(f"chunk_length must be positive, got {self.chunk_length}")


@dataclass(frozen=True)
class ChunkPlan:
    length: int
    chunk_length: int
    offsets: tuple[int, ...]


def chunk_offsets(length, chunk_length):
    if chunk_length < 1:
        raise ParameterError(f"chunk_length must be positive, got {chunk_length}")
    if chunk_length > length:
        raise ParameterError(f"chunk_length {chunk_length} exceeds sequence length {length}")
    offsets = list(range(0, length - chunk_length + 1, chunk_length))
    if offsets[-1] + chunk_length < length:
        offsets.append(length - chunk_length)
    return tuple(offsets)


def chunk_sequence(values, cfg: ChunkConfig | int):
    """Split into non-overlapping chunks; a ragged tail becomes the last
    ``chunk_length`` samples, overlapping the previous chunk.

    Works along the last axis, so a ``(batch, L)`` array yields chunks of
    shape ``(batch, chunk_length)``.
    """
    chunk_length = cfg.chunk_length if isinstance(cfg, ChunkConfig) else int(cfg)
    values = np.asarray(values)
    length = values.shape[-1]
    offsets = chunk_offsets(length, chunk_length)
    chunks = [values[..., o:o + chunk_length] for o in offsets]
    return chunks, ChunkPlan(length, chunk_length, offsets)


def reassemble(chunks, plan: ChunkPlan):
    """Inverse of :func:`chunk_sequence`; later chunks win on overlap."""
    if len(chunks) != len(plan.offsets):
        raise ParameterError(f"expected {len(plan.offsets)} chunks, got {len(chunks)}")
    first = np.asarray(chunks[0])
    out = np.empty(first.shape[:-1] + (plan.length,), dtype=first.dtype)
    for o, c in zip(plan.offsets, chunks):
        c = np.asarray(c)
        if c.shape[-1] != plan.chunk_length:
            raise ParameterError(f"chunk has length {c.shape[-1]}, expected {plan.chunk_length}")
        out[..., o:o + plan.chunk_length] = c
    return out

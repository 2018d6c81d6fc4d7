"""Seeded stimulus sequences and CANN-labelled datasets.

A 1D sequence is built from one SplitMix64 stream, consuming draws in
this order:

1. ``K = integers(kmin, kmax)`` segments, capped at ``length``.
2. One ``random()`` weight per segment. Each segment gets
   ``m + floor((length - K*m) * w_k / sum(w))`` frames, where
   ``m = max(1, min(min_segment, length // K))``; leftover frames go to
   the last segment.
3. ``start = uniform(lo, hi)``.
4. Per segment: ``random() < 0.5`` selects a ramp, which then draws its
   end value with ``uniform(lo, hi)`` and moves linearly so that frame
   ``j`` of ``d`` holds ``v0 + (v1 - v0) * (j + 1) / d``; otherwise the
   segment holds ``v0``. Every segment starts where the previous one ended.

A 3D sequence stacks three 1D sequences drawn from child streams
``split(0)``, ``split(1)``, ``split(2)`` of the sequence stream.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .cann import CannParams, ZeroActivityError, run_cann_sequence
from .encoding import normalize_pairs
from .rng import SplitMix64, derive_seed

FORMAT_VERSION = 1
SPLITS = {"train": 0, "val": 1, "test": 2}


@dataclass(frozen=True)
class SequenceSpec:
    seed: int
    length: int = 500
    dims: int = 1
    segment_count_range: tuple[int, int] = (2, 8)
    value_range: tuple[float, float] = (-math.pi, math.pi)
    min_segment: int = 10

    def __post_init__(self):
        if self.length < 2:
            raise ValueError(f"sequence length must be >= 2, got {self.length}")
        if self.dims not in (1, 3):
            raise ValueError("dims must be 1 or 3")
        kmin, kmax = self.segment_count_range
        if not (1 <= kmin <= kmax):
            raise ValueError(f"bad segment_count_range {self.segment_count_range}")
        lo, hi = self.value_range
        if not (lo < hi):
            raise ValueError(f"degenerate value_range {self.value_range}")


class Segment(NamedTuple):
    start: int
    length: int
    kind: str
    v0: float
    v1: float


def segment_layout(rng: SplitMix64, spec: SequenceSpec) -> list[Segment]:
    n = spec.length
    k = min(rng.integers(*spec.segment_count_range), n)
    m = max(1, min(spec.min_segment, n // k))
    weights = [rng.random() for _ in range(k)]
    total = sum(weights) or 1.0
    free = n - k * m
    durations = [m + int(free * w / total) for w in weights]
    durations[-1] += n - sum(durations)
    lo, hi = spec.value_range
    value = rng.uniform(lo, hi)
    segments, start = [], 0
    for d in durations:
        if rng.random() < 0.5:
            end = rng.uniform(lo, hi)
            segments.append(Segment(start, d, "ramp", value, end))
            value = end
        else:
            segments.append(Segment(start, d, "constant", value, value))
        start += d
    return segments


def render(segments: Iterable[Segment], length: int) -> np.ndarray:
    out = np.empty(length)
    for s in segments:
        j = np.arange(1, s.length + 1)
        out[s.start : s.start + s.length] = s.v0 + (s.v1 - s.v0) * j / s.length
    return out


def generate_sequence(spec: SequenceSpec) -> np.ndarray:
    """Stimulus values, shape ``(length,)`` or ``(length, 3)``."""
    rng = SplitMix64(spec.seed)
    if spec.dims == 1:
        return render(segment_layout(rng, spec), spec.length)
    axes = [render(segment_layout(rng.split(i), spec), spec.length) for i in range(3)]
    return np.stack(axes, axis=-1)


def sequence_seed(seed: int, split: str, index: int) -> int:
    return derive_seed(seed, (SPLITS[split] << 32) + index)


# -- labelled datasets ------------------------------------------------------


@dataclass
class Record:
    split: str
    seed: int
    inputs: np.ndarray
    labels: np.ndarray


@dataclass
class LabeledDataset:
    spec: dict
    cann_params: CannParams
    records: list[Record] = field(default_factory=list)

    def split(self, tag: str) -> list[Record]:
        return [r for r in self.records if r.split == tag]

    def counts(self) -> dict[str, int]:
        return {tag: len(self.split(tag)) for tag in SPLITS}


class LabelingError(RuntimeError):
    def __init__(self, seed: int, cause: Exception):
        super().__init__(f"labelling failed for sequence seed {seed}: {cause}")
        self.seed = seed


def label_sequences(
    sequences: list[np.ndarray], params: CannParams, seeds: list[int], settle_steps: int = 10
) -> list[np.ndarray]:
    """Unit-normalized CANN labels for each sequence (equal lengths are batched)."""
    out: list[np.ndarray | None] = [None] * len(sequences)
    by_len: dict[tuple, list[int]] = {}
    for i, s in enumerate(sequences):
        by_len.setdefault(np.shape(s), []).append(i)
    for idx in by_len.values():
        batch = np.stack([sequences[i] for i in idx])
        try:
            labels = normalize_pairs(run_cann_sequence(params, batch, settle_steps))
        except (ZeroActivityError, FloatingPointError):
            # rerun one by one so the offending seed is reported
            for i in idx:
                try:
                    normalize_pairs(run_cann_sequence(params, sequences[i], settle_steps))
                except (ZeroActivityError, FloatingPointError) as exc:
                    raise LabelingError(seeds[i], exc) from exc
            raise
        for j, i in enumerate(idx):
            out[i] = labels[j]
    return out


@dataclass(frozen=True)
class DatasetConfig:
    seed: int = 0
    dims: int = 1
    length: int = 500
    test_length: int = 3750
    train_per_epoch: int = 12
    n_val: int = 3
    n_test: int = 2
    settle_steps: int = 10
    min_segment: int = 10

    def __post_init__(self):
        if self.test_length < max(3750, 7 * self.length):
            raise ValueError("test sequences must be >= 3750 frames and >= 7x the training length")
        if self.train_per_epoch != 4 * self.n_val:
            raise ValueError("train:val sequence counts must be 4:1")

    def spec_for(self, split: str, index: int) -> SequenceSpec:
        length = self.test_length if split == "test" else self.length
        return SequenceSpec(
            seed=sequence_seed(self.seed, split, index),
            length=length,
            dims=self.dims,
            min_segment=self.min_segment,
        )


def make_records(cfg: DatasetConfig, params: CannParams, split: str, indices: Iterable[int]) -> list[Record]:
    if params.dims != cfg.dims:
        raise ValueError(f"CANN dims {params.dims} != dataset dims {cfg.dims}")
    specs = [cfg.spec_for(split, i) for i in indices]
    seqs = [generate_sequence(s) for s in specs]
    labels = label_sequences(seqs, params, [s.seed for s in specs], cfg.settle_steps)
    return [Record(split, s.seed, x, y) for s, x, y in zip(specs, seqs, labels)]


def train_records(cfg: DatasetConfig, params: CannParams, epoch: int) -> list[Record]:
    """The deterministic training sequences of one epoch."""
    n = cfg.train_per_epoch
    return make_records(cfg, params, "train", range(epoch * n, (epoch + 1) * n))


def build_dataset(
    cfg: DatasetConfig, params: CannParams, train_sequences: int | None = None, include_test: bool = True
) -> LabeledDataset:
    n_train = cfg.train_per_epoch if train_sequences is None else train_sequences
    ds = LabeledDataset(spec=asdict(cfg), cann_params=params)
    ds.records += make_records(cfg, params, "train", range(n_train))
    ds.records += make_records(cfg, params, "val", range(cfg.n_val))
    if include_test:
        ds.records += make_records(cfg, params, "test", range(cfg.n_test))
    return ds


# -- JSON-lines persistence -------------------------------------------------


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _array_json(a: np.ndarray) -> str:
    if a.ndim == 1:
        return "[" + ",".join(map(_num, a)) + "]"
    return "[" + ",".join(_array_json(row) for row in a) + "]"


def _header_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def _default(o):
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o)}")


def _params_payload(p: CannParams) -> dict:
    # reals in the header follow the same 17-significant-digit rule
    return {k: (float(_num(v)) if isinstance(v, float) else v) for k, v in p.to_dict().items()}


def save_dataset(ds: LabeledDataset, path) -> None:
    path = Path(path)
    lines = [
        _header_json({"format_version": FORMAT_VERSION, "spec": ds.spec, "cann_params": _params_payload(ds.cann_params)})
    ]
    for r in ds.records:
        lines.append(
            '{"split":"%s","seed":%d,"inputs":%s,"labels":%s}'
            % (r.split, r.seed, _array_json(np.asarray(r.inputs)), _array_json(np.asarray(r.labels)))
        )
    path.write_text("\n".join(lines) + "\n")


def load_dataset(path) -> LabeledDataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported dataset format_version {header.get('format_version')}")
        ds = LabeledDataset(spec=header["spec"], cann_params=CannParams(**header["cann_params"]))
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                ds.records.append(
                    Record(obj["split"], int(obj["seed"]), np.asarray(obj["inputs"], float), np.asarray(obj["labels"], float))
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed record ({exc})") from exc
    return ds

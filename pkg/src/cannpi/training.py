"""Supervised training of a replica against CANN labels."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .cann import CannParams
from .encoding import encode_angles, encode_positions
from .optim import OptimizerState, adam_step
from .replica import GCN, HDCN, Architecture, NonFiniteLoss, ReplicaWeights, bptt_gradients, forward_sequence
from .trajgen import DatasetConfig, LabeledDataset, Record, make_records, train_records

log = logging.getLogger(__name__)


def encode_inputs(inputs: np.ndarray, dims: int) -> np.ndarray:
    return encode_angles(inputs) if dims == 1 else encode_positions(inputs)


def default_architecture(dims: int, hidden_size: int | None = None) -> Architecture:
    base = HDCN if dims == 1 else GCN
    if hidden_size is None:
        return base
    return Architecture(base.input_size, hidden_size, base.decoder_size, base.output_size, base.n_lstm)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    sequences_per_epoch: int = 12
    batch_size: int = 1
    truncation: int | None = None
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 1.0
    init_seed: int = 0


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, seeds: list[int], cause: Exception):
        super().__init__(f"non-finite loss at epoch {epoch} on sequence seed(s) {seeds}: {cause}")
        self.epoch = epoch
        self.seeds = seeds


class RegeneratingSource:
    """Fresh, deterministic training sequences every epoch; fixed validation set."""

    def __init__(self, data: DatasetConfig, params: CannParams):
        self.data = data
        self.params = params
        self.dims = data.dims
        self._val = None

    def train(self, epoch: int, count: int) -> list[Record]:
        if count != self.data.train_per_epoch:
            raise ValueError("regenerating source yields exactly train_per_epoch sequences")
        return train_records(self.data, self.params, epoch)

    def val(self) -> list[Record]:
        if self._val is None:
            self._val = make_records(self.data, self.params, "val", range(self.data.n_val))
        return self._val


class PoolSource:
    """Cycles through the train split of a fixed labelled dataset."""

    def __init__(self, dataset: LabeledDataset):
        self.pool = dataset.split("train")
        self._val = dataset.split("val")
        if not self.pool or not self._val:
            raise ValueError("dataset needs both train and val records")
        self.dims = dataset.cann_params.dims

    def train(self, epoch: int, count: int) -> list[Record]:
        n = len(self.pool)
        return [self.pool[(epoch * count + i) % n] for i in range(count)]

    def val(self) -> list[Record]:
        return self._val


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    wall_time_s: float


@dataclass
class TrainingLog:
    epochs: list[EpochLog] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")

    def rows(self) -> list[dict]:
        return [e.__dict__ for e in self.epochs]


def _stack(records: list[Record], dims: int) -> tuple[np.ndarray, np.ndarray]:
    x = encode_inputs(np.stack([r.inputs for r in records]), dims)
    y = np.stack([r.labels for r in records])
    return x, y


def validation_loss(weights: ReplicaWeights, records: list[Record], dims: int) -> float:
    total, count = 0.0, 0
    for r in records:
        y = forward_sequence(weights, encode_inputs(r.inputs, dims))
        total += float(np.sum((y - r.labels) ** 2))
        count += r.labels.size
    return total / count


def train(
    source: RegeneratingSource | PoolSource | LabeledDataset,
    config: TrainConfig = TrainConfig(),
    arch: Architecture | None = None,
    on_epoch=None,
) -> tuple[ReplicaWeights, TrainingLog]:
    """Fit a replica; returns the best-validation weights (float32-snapped) and the log."""
    if isinstance(source, LabeledDataset):
        source = PoolSource(source)
    dims = source.dims
    arch = arch or default_architecture(dims)
    weights = ReplicaWeights.init(arch, config.init_seed)
    opt = OptimizerState(
        lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps, clip_norm=config.clip_norm
    )
    val = source.val()
    history = TrainingLog()
    best = weights.snapped()
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        records = source.train(epoch, config.sequences_per_epoch)
        x, y = _stack(records, dims)
        losses = []
        for s in range(0, len(records), config.batch_size):
            sl = slice(s, s + config.batch_size)
            try:
                loss, grads = bptt_gradients(weights, x[sl], y[sl], config.truncation)
            except NonFiniteLoss as exc:
                raise TrainingDiverged(epoch, [r.seed for r in records[sl]], exc) from exc
            adam_step(opt, weights.params, grads)
            losses.append(loss)
        val_loss = validation_loss(weights, val, dims)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(epoch, [r.seed for r in val], FloatingPointError("validation loss not finite"))
        entry = EpochLog(epoch, float(np.mean(losses)), val_loss, time.perf_counter() - t0)
        history.epochs.append(entry)
        if val_loss < history.best_val_loss:
            history.best_val_loss = val_loss
            history.best_epoch = epoch
            best = weights.snapped()
        log.info("epoch %d train %.6f val %.6f (%.1fs)", epoch, entry.train_loss, val_loss, entry.wall_time_s)
        if on_epoch is not None:
            on_epoch(entry)
    return best, history

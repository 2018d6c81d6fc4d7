import numpy as np
import pytest

from cannpi.cann import CannParams
from cannpi.replica import Architecture, HDCN
from cannpi.trajgen import DatasetConfig, LabeledDataset, Record, build_dataset
from cannpi.training import (
    PoolSource,
    RegeneratingSource,
    TrainConfig,
    TrainingDiverged,
    default_architecture,
    train,
)
from cannpi.encoding import encode_angles


def _constant_dataset(value=1.0, length=40):
    theta = np.full(length, value)
    lab = np.stack([np.sin(theta), np.cos(theta)], axis=-1)
    return LabeledDataset(
        spec={}, cann_params=CannParams(), records=[Record("train", 0, theta, lab), Record("val", 1, theta, lab)]
    )


class TestTrain:
    def test_overfit_constant(self):
        _, log = train(_constant_dataset(), TrainConfig(epochs=200, sequences_per_epoch=1, lr=3e-3))
        assert log.epochs[-1].train_loss < 1e-3

    def test_deterministic_replay(self):
        ds = _constant_dataset(0.3, 20)
        arch = Architecture(37, 8, 6, 2)
        cfg = TrainConfig(epochs=4, sequences_per_epoch=1)
        w1, _ = train(ds, cfg, arch)
        w2, _ = train(ds, cfg, arch)
        np.testing.assert_array_equal(w1.flat(), w2.flat())

    def test_best_not_worse_than_first(self):
        ds = build_dataset(DatasetConfig(seed=2, length=60), CannParams(), train_sequences=12, include_test=False)
        _, log = train(ds, TrainConfig(epochs=6), Architecture(37, 8, 6, 2))
        assert log.best_val_loss <= log.epochs[0].val_loss
        assert log.epochs[log.best_epoch].val_loss == log.best_val_loss

    def test_weights_are_snapped(self):
        w, _ = train(_constant_dataset(), TrainConfig(epochs=2, sequences_per_epoch=1), Architecture(37, 4, 3, 2))
        for v in w.params.values():
            np.testing.assert_array_equal(v, v.astype(np.float32))

    def test_divergence_reports_seed(self):
        ds = _constant_dataset()
        ds.records[0].labels[3, 0] = np.inf
        with pytest.raises(TrainingDiverged) as info:
            train(ds, TrainConfig(epochs=1, sequences_per_epoch=1), Architecture(37, 4, 3, 2))
        assert info.value.seeds == [0]

    def test_smoke_config_fast(self):
        import time

        ds = build_dataset(DatasetConfig(seed=0), CannParams(), include_test=False)
        t0 = time.perf_counter()
        train(ds, TrainConfig(epochs=5), default_architecture(1, hidden_size=8))
        assert time.perf_counter() - t0 < 60


class TestSources:
    def test_pool_cycles(self):
        ds = build_dataset(DatasetConfig(seed=1, length=20), CannParams(), train_sequences=5, include_test=False)
        src = PoolSource(ds)
        seeds = [r.seed for r in src.train(0, 3)] + [r.seed for r in src.train(1, 3)]
        pool = [r.seed for r in ds.split("train")]
        assert seeds == [pool[i % 5] for i in range(6)]

    def test_regenerating_changes_per_epoch(self):
        src = RegeneratingSource(DatasetConfig(seed=1, length=20), CannParams())
        a, b = src.train(0, 12), src.train(1, 12)
        assert {r.seed for r in a}.isdisjoint(r.seed for r in b)
        assert len(src.val()) == 3

    def test_default_architectures(self):
        assert default_architecture(1) == HDCN
        assert default_architecture(3).input_size == 111

"""Wall-clock benchmarks of the CANN reference against the replicas.

Every workload runs single-threaded (BLAS pools limited to one thread) on
a fixed-seed stimulus stream. A CANN frame is ``settle_steps`` Euler steps
plus a population-vector decode, the same work done per labelled frame; a
replica frame is one forward step plus the atan2 decode. One untimed
warm-up pass precedes the timed repeats and the median of the repeats is
reported.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .cann import Cann, CannParams
from .encoding import decode_pairs, encode_angles, encode_positions
from .replica import GCN, HDCN, HiddenState, ReplicaWeights, forward_step

WORKLOADS = ("cann_1d", "cann_3d", "replica_hdcn", "replica_gcn", "pi_pipeline")


@dataclass
class BenchResult:
    workload: str
    frames: int
    repeats: int
    per_frame_us: list[float]  # one value per timed repeat
    total_s: list[float]

    @property
    def median_us(self) -> float:
        return float(np.median(self.per_frame_us))

    @property
    def median_total_s(self) -> float:
        return float(np.median(self.total_s))

    def row(self) -> dict:
        return {
            "workload": self.workload,
            "frames": self.frames,
            "repeats": self.repeats,
            "median_us_per_frame": f"{self.median_us:.3f}",
            "min_us_per_frame": f"{min(self.per_frame_us):.3f}",
            "max_us_per_frame": f"{max(self.per_frame_us):.3f}",
            "median_total_s": f"{self.median_total_s:.6f}",
        }


def _stimulus(frames: int, dims: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    steps = rng.normal(0.0, 0.05, size=(frames, dims))
    return np.mod(np.cumsum(steps, axis=0) + math.pi, 2 * math.pi) - math.pi


def _cann_frames(dims: int, stim: np.ndarray, params: CannParams | None, settle_steps: int):
    params = params or CannParams(dims=dims)
    sim = Cann(params)

    def run():
        for s in stim:
            sim.advance(s[0] if dims == 1 else s, settle_steps)
            sim.label()

    return run


def _replica_frames(weights: ReplicaWeights, xs: np.ndarray):
    def run():
        state = HiddenState.zeros(weights.arch)
        for x in xs:
            y, state = forward_step(weights, state, x)
            decode_pairs(y)

    return run


def _pipeline_frames(hdcn: ReplicaWeights, gcn: ReplicaWeights, frames: int, seed: int):
    from .pi import MotionCue, PathIntegrator

    rng = np.random.default_rng(seed)
    v = rng.uniform(0.0, 1.0, frames)
    w = rng.normal(0.0, 0.2, frames)
    cues = [MotionCue(i / 30.0, v[i], 0.0, w[i]) for i in range(frames)]

    def run():
        session = PathIntegrator(hdcn, gcn)
        for c in cues:
            session.step(c)

    return run


def make_workload(
    name: str,
    frames: int,
    seed: int = 0,
    hdcn: ReplicaWeights | None = None,
    gcn: ReplicaWeights | None = None,
    params: CannParams | None = None,
    settle_steps: int = 10,
):
    """A zero-argument callable that processes ``frames`` frames."""
    hdcn = hdcn or ReplicaWeights.init(HDCN, seed)
    gcn = gcn or ReplicaWeights.init(GCN, seed)
    if name == "cann_1d":
        return _cann_frames(1, _stimulus(frames, 1, seed), params, settle_steps)
    if name == "cann_3d":
        return _cann_frames(3, _stimulus(frames, 3, seed), params, settle_steps)
    if name == "replica_hdcn":
        return _replica_frames(hdcn, encode_angles(_stimulus(frames, 1, seed)[:, 0]))
    if name == "replica_gcn":
        return _replica_frames(gcn, encode_positions(_stimulus(frames, 3, seed)))
    if name == "pi_pipeline":
        return _pipeline_frames(hdcn, gcn, frames, seed)
    raise ValueError(f"unknown workload {name!r}; choose from {', '.join(WORKLOADS)}")


def bench(name: str, frames: int = 100, repeats: int = 3, seed: int = 0, **kwargs) -> BenchResult:
    if frames < 100:
        raise ValueError("frames must be >= 100")
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    with threadpool_limits(limits=1):
        make_workload(name, frames, seed, **kwargs)()  # warm-up, untimed
        per_frame, totals = [], []
        for _ in range(repeats):
            run = make_workload(name, frames, seed, **kwargs)
            t0 = time.perf_counter()
            run()
            dt = time.perf_counter() - t0
            totals.append(dt)
            per_frame.append(1e6 * dt / frames)
    return BenchResult(name, frames, repeats, per_frame, totals)


@dataclass
class Comparison:
    replica: BenchResult
    reference: BenchResult

    @property
    def speedup(self) -> float:
        return self.reference.median_us / self.replica.median_us


def compare(replica: str = "replica_gcn", reference: str = "cann_3d", frames: int = 100, repeats: int = 3, **kw):
    """Speedup of a replica workload over its CANN reference at matched geometry."""
    return Comparison(bench(replica, frames, repeats, **kw), bench(reference, frames, repeats, **kw))

"""Runtime path integration driven by the trained replicas.

Self-motion cues are integrated arithmetically into ring stimuli (open
loop, the same kind of signal the replicas were trained on). The yaw and
height stimuli go through the head-direction replica, which keeps one
recurrent state per channel over shared weights. The x/y/z stimuli go
through the grid replica. Decoded ring angles are unwrapped frame to frame
into world coordinates.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cann import TWO_PI, wrap_angle
from .encoding import encode_angles, encode_positions
from .replica import HiddenState, ReplicaWeights, forward_step

log = logging.getLogger(__name__)

CUE_HEADER = ["t", "v_trans", "v_height", "yaw_rate"]


class CueError(ValueError):
    pass


@dataclass(frozen=True)
class MotionCue:
    t: float
    v_trans: float = 0.0
    v_height: float = 0.0
    yaw_rate: float = 0.0


@dataclass(frozen=True)
class RingScale:
    l_xy: float = 10.0
    l_z: float = 10.0

    def __post_init__(self):
        if not (self.l_xy > 0 and self.l_z > 0):
            raise ValueError("ring scales must be positive")


@dataclass
class IntegratorState:
    """Dead-reckoned world pose plus the wrapped ring stimuli derived from it."""

    t: float | None = None
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0

    def stimuli(self, scale: RingScale) -> dict[str, float]:
        return {
            "yaw": wrap_angle(self.yaw),
            "height": wrap_angle(TWO_PI * self.z / scale.l_z),
            "x": wrap_angle(TWO_PI * self.x / scale.l_xy),
            "y": wrap_angle(TWO_PI * self.y / scale.l_xy),
        }

    @property
    def pose(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, wrap_angle(self.yaw)])


def integrate_cues(prev: IntegratorState, cue: MotionCue) -> IntegratorState:
    """Advance the integrator by one cue. The first cue only sets the clock."""
    vals = (cue.t, cue.v_trans, cue.v_height, cue.yaw_rate)
    if not all(math.isfinite(v) for v in vals):
        raise CueError(f"non-finite cue {cue}")
    if prev.t is None:
        return IntegratorState(cue.t, prev.x, prev.y, prev.z, prev.yaw)
    dt = cue.t - prev.t
    if dt <= 0:
        raise CueError(f"timestamps must increase strictly ({prev.t} -> {cue.t})")
    yaw = prev.yaw + cue.yaw_rate * dt
    dist = cue.v_trans * dt
    return IntegratorState(
        cue.t,
        prev.x + dist * math.cos(yaw),
        prev.y + dist * math.sin(yaw),
        prev.z + cue.v_height * dt,
        yaw,
    )


@dataclass
class JointPose:
    x: float
    y: float
    z: float
    yaw: float
    ring_coords: np.ndarray  # decoded (yaw, height, x, y, z) ring angles
    wrap_counters: np.ndarray  # per-axis integers for (yaw, height, x, y, z)
    flagged: bool = False


class Unwrapper:
    """Turns a stream of ring angles into continuous values."""

    def __init__(self, initial: np.ndarray):
        self.ring = np.asarray(initial, dtype=float).copy()
        self.counters = np.zeros(self.ring.shape, dtype=np.int64)

    def update(self, ring: np.ndarray) -> None:
        ring = np.asarray(ring, dtype=float)
        step = wrap_angle(ring - self.ring)
        unwrapped = self.counters * TWO_PI + self.ring + step
        self.counters = np.rint((unwrapped - ring) / TWO_PI).astype(np.int64)
        self.ring = ring

    @property
    def unwrapped(self) -> np.ndarray:
        return self.counters * TWO_PI + self.ring


@dataclass
class Channels:
    yaw: HiddenState
    height: HiddenState
    grid: HiddenState

    @classmethod
    def zeros(cls, hdcn: ReplicaWeights, gcn: ReplicaWeights) -> "Channels":
        return cls(HiddenState.zeros(hdcn.arch), HiddenState.zeros(hdcn.arch), HiddenState.zeros(gcn.arch))


@dataclass
class PiConfig:
    scale: RingScale = field(default_factory=RingScale)
    warmup_frames: int = 10
    decode_tol: float = 1e-9


@dataclass
class PiFrame:
    """Everything recorded about one frame of a run."""

    frame: int
    t: float
    pose: JointPose
    vo_pose: np.ndarray  # integrator (x, y, z, yaw)
    stimuli: dict


def _pair_angle(pair: np.ndarray, tol: float) -> float | None:
    if math.hypot(pair[0], pair[1]) <= tol:
        return None
    return math.atan2(pair[0], pair[1])


class PathIntegrator:
    """One sequential path-integration session."""

    def __init__(self, hdcn: ReplicaWeights, gcn: ReplicaWeights, config: PiConfig | None = None):
        self.hdcn = hdcn
        self.gcn = gcn
        self.config = config or PiConfig()
        self.channels = Channels.zeros(hdcn, gcn)
        self.integrator = IntegratorState()
        self.frame = -1
        self.n_flagged = 0
        # settle the recurrent state on the zero stimulus before the first frame
        stim = self.integrator.stimuli(self.config.scale)
        ring = None
        for _ in range(max(1, self.config.warmup_frames)):
            ring = self._run_networks(stim)
        if ring is None:
            raise RuntimeError("replicas produced a zero output during warm-up")
        self.unwrapper = Unwrapper(ring)
        self.last_pose = self._pose(flagged=False)

    def _run_networks(self, stim: dict) -> np.ndarray | None:
        x_yaw = encode_angles(stim["yaw"])
        x_height = encode_angles(stim["height"])
        x_grid = encode_positions(np.array([stim["x"], stim["y"], stim["height"]]))
        y_yaw, self.channels.yaw = forward_step(self.hdcn, self.channels.yaw, x_yaw)
        y_height, self.channels.height = forward_step(self.hdcn, self.channels.height, x_height)
        y_grid, self.channels.grid = forward_step(self.gcn, self.channels.grid, x_grid)
        pairs = [y_yaw, y_height, y_grid[0:2], y_grid[2:4], y_grid[4:6]]
        angles = [_pair_angle(p, self.config.decode_tol) for p in pairs]
        if any(a is None for a in angles):
            return None
        return np.array(angles)

    def _pose(self, flagged: bool) -> JointPose:
        u = self.unwrapper.unwrapped
        s = self.config.scale
        return JointPose(
            x=u[2] * s.l_xy / TWO_PI,
            y=u[3] * s.l_xy / TWO_PI,
            z=u[4] * s.l_z / TWO_PI,
            yaw=wrap_angle(self.unwrapper.ring[0]),
            ring_coords=self.unwrapper.ring.copy(),
            wrap_counters=self.unwrapper.counters.copy(),
            flagged=flagged,
        )

    def step(self, cue: MotionCue) -> PiFrame:
        self.integrator = integrate_cues(self.integrator, cue)
        self.frame += 1
        stim = self.integrator.stimuli(self.config.scale)
        ring = self._run_networks(stim)
        if ring is None:
            self.n_flagged += 1
            log.warning("frame %d: zero replica output, holding previous pose", self.frame)
            held = self.last_pose
            pose = JointPose(held.x, held.y, held.z, held.yaw, held.ring_coords, held.wrap_counters, True)
        else:
            self.unwrapper.update(ring)
            pose = self._pose(flagged=False)
            self.last_pose = pose
        return PiFrame(self.frame, cue.t, pose, self.integrator.pose, stim)


def pi_step(session: PathIntegrator, cue: MotionCue) -> JointPose:
    return session.step(cue).pose


def run_pi(cues: list[MotionCue], hdcn: ReplicaWeights, gcn: ReplicaWeights, config: PiConfig | None = None):
    """Run a whole cue stream; returns the per-frame records."""
    if len(cues) < 2:
        raise CueError("a cue stream needs at least 2 frames")
    session = PathIntegrator(hdcn, gcn, config)
    return [session.step(c) for c in cues]


# -- files ----------------------------------------------------------------


def read_cues(path) -> list[MotionCue]:
    cues = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CUE_HEADER:
            raise CueError(f"{path}:1: expected header {','.join(CUE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise CueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise CueError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise CueError(f"{path}:{lineno}: non-finite value")
            if cues and vals[0] <= cues[-1].t:
                raise CueError(f"{path}:{lineno}: timestamp {vals[0]} does not increase")
            cues.append(MotionCue(*vals))
    return cues


def write_cues(cues: list[MotionCue], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CUE_HEADER)
        for c in cues:
            w.writerow([repr(float(c.t)), repr(float(c.v_trans)), repr(float(c.v_height)), repr(float(c.yaw_rate))])


def square_loop_cues(
    side: float = 10.0,
    speed: float = 1.0,
    turn_rate: float = math.pi / 2,
    rate_hz: float = 30.0,
    scale_error: float = 0.0,
    yaw_bias: float = 0.0,
) -> tuple[list[MotionCue], list[MotionCue]]:
    """(true cues, biased cues) for a square driven with left turns back to the start heading."""
    segments = []
    for _ in range(4):
        segments.append((speed, 0.0, side / speed))
        segments.append((0.0, turn_rate, (math.pi / 2) / turn_rate))
    dt = 1.0 / rate_hz
    true = [MotionCue(0.0)]
    for v, w, dur in segments:
        for _ in range(int(round(dur * rate_hz))):
            true.append(MotionCue(len(true) * dt, v, 0.0, w))
    biased = [MotionCue(c.t, c.v_trans * (1.0 + scale_error), c.v_height, c.yaw_rate + yaw_bias) for c in true]
    return true, biased


def integrate_stream(cues: list[MotionCue]) -> np.ndarray:
    """Arithmetic dead reckoning of a cue stream, (N, 4) rows of x, y, z, yaw."""
    state = IntegratorState()
    out = []
    for c in cues:
        state = integrate_cues(state, c)
        out.append(state.pose)
    return np.array(out)

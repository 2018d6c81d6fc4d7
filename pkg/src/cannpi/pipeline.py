"""Path integration feeding the experience graph, end to end."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluation import Trajectory
from .graph import ExperienceGraph, GraphParams
from .pi import IntegratorState, MotionCue, PathIntegrator, PiConfig, integrate_cues, CueError
from .replica import ReplicaWeights


@dataclass
class PipelineResult:
    t: np.ndarray
    raw: np.ndarray  # (N, 4) per-frame path-integration pose
    vo: np.ndarray  # (N, 4) arithmetic dead reckoning
    graph: ExperienceGraph
    n_flagged: int = 0

    def corrected(self) -> np.ndarray:
        return self.graph.export_trajectory()

    def node_frames(self) -> np.ndarray:
        return self.graph.creation_frames()

    def trajectories(self, downsample: bool = True) -> tuple[Trajectory, Trajectory]:
        """(raw, corrected) trajectories, by default only at node-creation frames."""
        idx = self.node_frames() if downsample else np.arange(len(self.t))
        raw = Trajectory.from_poses(self.t[idx], self.raw[idx], idx)
        cor = Trajectory.from_poses(self.t[idx], self.corrected()[idx], idx)
        return raw, cor


def run_pipeline(
    cues: list[MotionCue],
    hdcn: ReplicaWeights | None = None,
    gcn: ReplicaWeights | None = None,
    pi_config: PiConfig | None = None,
    graph_params: GraphParams | None = None,
) -> PipelineResult:
    """Integrate a cue stream and build the experience graph.

    With both replicas given, ring coordinates and the raw pose come from the
    replicas. Without them the exact ring stimuli stand in for a perfect
    replica, which isolates the graph from replica error.
    """
    if len(cues) < 2:
        raise CueError("a cue stream needs at least 2 frames")
    if (hdcn is None) != (gcn is None):
        raise ValueError("give both replicas or neither")
    cfg = pi_config or PiConfig()
    graph = ExperienceGraph(graph_params or GraphParams())
    t, raw, vo = [], [], []
    flagged = 0
    if hdcn is not None:
        session = PathIntegrator(hdcn, gcn, cfg)
        for c in cues:
            fr = session.step(c)
            ring = fr.pose.ring_coords  # yaw, height, x, y, z
            graph.observe(ring[[2, 3, 4]], ring[[0, 1]], fr.vo_pose, fr.frame)
            t.append(c.t)
            raw.append([fr.pose.x, fr.pose.y, fr.pose.z, fr.pose.yaw])
            vo.append(fr.vo_pose)
        flagged = session.n_flagged
    else:
        state = IntegratorState()
        for i, c in enumerate(cues):
            state = integrate_cues(state, c)
            s = state.stimuli(cfg.scale)
            graph.observe([s["x"], s["y"], s["height"]], [s["yaw"], s["height"]], state.pose, i)
            t.append(c.t)
            raw.append(state.pose)
            vo.append(state.pose)
    return PipelineResult(np.array(t), np.array(raw), np.array(vo), graph, flagged)

"""Spatial-experience graph with relaxation.

Nodes pair the decoded replica state (three grid ring angles, yaw and
height ring angles) with a world pose taken from dead reckoning. Each
frame the decoded state is scored against every node; the best node is
activated if its score is under the threshold, otherwise a new node is
placed at ``active.p_exp + delta`` where ``delta`` is the dead-reckoned
motion since the active node was entered. Moving onto an existing node
that is not yet linked to the active one adds a link too: that is how a
revisited place closes a loop.

Relaxation applies, simultaneously to every node ``i``::

    dP_i = rate * sum over links touching i of (P_other - P_i - d_toward_i)

where ``d_toward_i`` is the stored link increment read in the direction
from ``i`` to the other endpoint (``+d`` for outgoing links, ``-d`` for
incoming). Translation is corrected linearly and yaw residuals are
wrapped. In matrix form one round multiplies the poses by ``I - rate * L``
with ``L`` the graph Laplacian, whose eigenvalues lie in
``[0, 2 * max_degree]``. The configured ``alpha`` is therefore capped at
``1 / (2 * max_degree)``, which keeps every mode in ``[0, 1]``: no mode
grows or flips sign, so residuals shrink monotonically. On a single
link the cap is 0.5 and the residual shrinks by ``|1 - 2 alpha|`` per
round.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .cann import wrap_angle


@dataclass
class ExperienceNode:
    id: int
    p_gc: np.ndarray  # (3,) grid ring angles
    p_hdc: np.ndarray  # (2,) yaw and height ring angles
    p_exp: np.ndarray  # (4,) x, y, z, yaw
    created_frame: int = 0


@dataclass
class TransitionLink:
    from_id: int
    to_id: int
    delta_p_exp: np.ndarray

    @property
    def delta_d(self) -> float:
        return float(np.linalg.norm(self.delta_p_exp[:3]))


@dataclass(frozen=True)
class GraphParams:
    mu_gc: float = 0.5
    mu_hdc: float = 0.5
    score_threshold: float = 0.25
    alpha: float = 0.5
    relax_iterations: int = 20

    def __post_init__(self):
        if self.mu_gc < 0 or self.mu_hdc < 0 or (self.mu_gc == 0 and self.mu_hdc == 0):
            raise ValueError("score weights must be >= 0 and not both zero")
        if not (0 < self.alpha <= 1):
            raise ValueError("alpha must lie in (0, 1]")
        if self.relax_iterations < 0:
            raise ValueError("relax_iterations must be >= 0")


def _ring_diff(a, b) -> np.ndarray:
    d = np.abs(np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 2 * np.pi))
    return np.minimum(d, 2 * np.pi - d)


def match_score(p_gc, p_hdc, node: ExperienceNode, params: GraphParams) -> float:
    """Weighted sum of wrapped absolute ring differences."""
    return float(
        params.mu_gc * _ring_diff(p_gc, node.p_gc).sum() + params.mu_hdc * _ring_diff(p_hdc, node.p_hdc).sum()
    )


def _delta(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pose increment b - a with the yaw part wrapped."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    d[3] = wrap_angle(d[3])
    return d


@dataclass
class ExperienceGraph:
    params: GraphParams = field(default_factory=GraphParams)
    nodes: list[ExperienceNode] = field(default_factory=list)
    links: list[TransitionLink] = field(default_factory=list)
    activation_log: list[int] = field(default_factory=list)
    active: int = -1
    last_correction: float = 0.0
    _entry_vo: np.ndarray | None = None
    _linked: set = field(default_factory=set)

    # -- construction ----------------------------------------------------

    def scores(self, p_gc, p_hdc) -> np.ndarray:
        gc = np.array([n.p_gc for n in self.nodes])
        hdc = np.array([n.p_hdc for n in self.nodes])
        return self.params.mu_gc * _ring_diff(gc, p_gc).sum(axis=1) + self.params.mu_hdc * _ring_diff(
            hdc, p_hdc
        ).sum(axis=1)

    def _add_link(self, i: int, j: int, delta: np.ndarray) -> None:
        self.links.append(TransitionLink(i, j, delta))
        self._linked.add((min(i, j), max(i, j)))

    def observe(self, p_gc, p_hdc, vo_pose, frame: int | None = None) -> int:
        """Activate (or create) the node for this frame; returns its id."""
        p_gc = np.mod(np.asarray(p_gc, dtype=float), 2 * np.pi)
        p_hdc = np.mod(np.asarray(p_hdc, dtype=float), 2 * np.pi)
        vo_pose = np.asarray(vo_pose, dtype=float)
        frame = len(self.activation_log) if frame is None else frame
        if not self.nodes:
            self.nodes.append(ExperienceNode(0, p_gc, p_hdc, vo_pose.copy(), frame))
            self.active = 0
            self._entry_vo = vo_pose.copy()
            self.activation_log.append(0)
            return 0
        s = self.scores(p_gc, p_hdc)
        best = int(np.argmin(s))
        delta = _delta(self._entry_vo, vo_pose)
        if s[best] < self.params.score_threshold:
            if best != self.active:
                if (min(best, self.active), max(best, self.active)) not in self._linked:
                    self._add_link(self.active, best, delta)
                    self.relax()
                self.active = best
                self._entry_vo = vo_pose.copy()
        else:
            j = len(self.nodes)
            p_exp = self.nodes[self.active].p_exp + delta
            p_exp[3] = wrap_angle(p_exp[3])
            self.nodes.append(ExperienceNode(j, p_gc, p_hdc, p_exp, frame))
            self._add_link(self.active, j, delta)
            self.active = j
            self._entry_vo = vo_pose.copy()
            self.relax()
        self.activation_log.append(self.active)
        return self.active

    # -- relaxation --------------------------------------------------------

    def poses(self) -> np.ndarray:
        return np.array([n.p_exp for n in self.nodes])

    def effective_rate(self) -> float:
        if not self.links:
            return self.params.alpha
        deg = np.zeros(len(self.nodes), dtype=np.int64)
        for ln in self.links:
            deg[ln.from_id] += 1
            deg[ln.to_id] += 1
        return min(self.params.alpha, 1.0 / (2 * deg.max()))

    def relax(self, iterations: int | None = None) -> float:
        """Run relaxation rounds; returns the largest node correction of the last round."""
        n_iter = self.params.relax_iterations if iterations is None else iterations
        if not self.links or n_iter == 0:
            self.last_correction = 0.0
            return 0.0
        src = np.array([ln.from_id for ln in self.links])
        dst = np.array([ln.to_id for ln in self.links])
        deltas = np.array([ln.delta_p_exp for ln in self.links])
        rate = self.effective_rate()
        pose = self.poses()
        corr = np.zeros_like(pose)
        for _ in range(n_iter):
            resid = pose[dst] - pose[src] - deltas
            resid[:, 3] = wrap_angle(resid[:, 3])
            corr = np.zeros_like(pose)
            np.add.at(corr, src, rate * resid)
            np.add.at(corr, dst, -rate * resid)
            pose = pose + corr
            pose[:, 3] = wrap_angle(pose[:, 3])
        for node, p in zip(self.nodes, pose):
            node.p_exp = p
        self.last_correction = float(np.linalg.norm(corr, axis=1).max())
        return self.last_correction

    # -- output ----------------------------------------------------------

    def export_trajectory(self, activation_log: list[int] | None = None) -> np.ndarray:
        """Per-frame (x, y, z, yaw) of the active node, using current node poses."""
        log = self.activation_log if activation_log is None else activation_log
        if not log:
            raise ValueError("empty activation log")
        return self.poses()[np.asarray(log)]

    def creation_frames(self) -> np.ndarray:
        return np.array([n.created_frame for n in self.nodes])

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "nodes": [
                {
                    "id": n.id,
                    "p_gc": n.p_gc.tolist(),
                    "p_hdc": n.p_hdc.tolist(),
                    "p_exp": n.p_exp.tolist(),
                    "created_frame": n.created_frame,
                }
                for n in self.nodes
            ],
            "links": [
                {"from": ln.from_id, "to": ln.to_id, "delta_p_exp": ln.delta_p_exp.tolist(), "delta_d": ln.delta_d}
                for ln in self.links
            ],
            "activation_log": list(self.activation_log),
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def relax(graph: ExperienceGraph, params: GraphParams | None = None, iterations: int | None = None) -> float:
    if params is not None:
        graph.params = params
    return graph.relax(iterations)

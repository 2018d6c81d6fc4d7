"""Trajectory and replica-fidelity evaluation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .cann import wrap_angle
from .encoding import decode_pairs

TRAJ_HEADER = ["frame", "t", "x", "y", "z", "yaw"]
REPORT_HEADER = ["method", "frames", "time_cost_s", "mae_m", "rmse_m", "mte_m"]


class EmptyOverlapError(ValueError):
    pass


class DegenerateAlignmentError(ValueError):
    pass


@dataclass
class Trajectory:
    frame: np.ndarray
    t: np.ndarray
    xyz: np.ndarray
    yaw: np.ndarray

    def __post_init__(self):
        self.frame = np.asarray(self.frame, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=float)
        self.xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        self.yaw = np.asarray(self.yaw, dtype=float)
        n = len(self.frame)
        if not (len(self.t) == len(self.xyz) == len(self.yaw) == n):
            raise ValueError("trajectory columns differ in length")
        if n > 1 and np.any(np.diff(self.frame) <= 0):
            raise ValueError("frames must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frame)

    @classmethod
    def from_poses(cls, t, poses, frames=None) -> "Trajectory":
        poses = np.asarray(poses, dtype=float)
        frames = np.arange(len(poses)) if frames is None else frames
        return cls(frames, t, poses[:, :3], poses[:, 3])

    def subset(self, idx) -> "Trajectory":
        idx = np.asarray(idx)
        return Trajectory(self.frame[idx], self.t[idx], self.xyz[idx], self.yaw[idx])

    def traveled_distance(self) -> float:
        return float(np.linalg.norm(np.diff(self.xyz, axis=0), axis=1).sum())

    def endpoint_gap(self) -> float:
        return float(np.linalg.norm(self.xyz[-1] - self.xyz[0]))


def write_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_HEADER)
        for i in range(len(traj)):
            w.writerow([int(traj.frame[i])] + [repr(float(v)) for v in (traj.t[i], *traj.xyz[i], traj.yaw[i])])


def read_trajectory(path) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRAJ_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(TRAJ_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no samples")
    a = np.array(rows)
    return Trajectory(a[:, 0].astype(np.int64), a[:, 1], a[:, 2:5], a[:, 5])


# -- association and alignment --------------------------------------------


@dataclass
class Paired:
    est: Trajectory
    gt: Trajectory
    unpaired_gt: int = 0
    unpaired_est: int = 0


def associate(est: Trajectory, gt: Trajectory, max_gap: float | None = None) -> Paired:
    """Pair every GT sample with the nearest-in-time estimate within ``max_gap``.

    ``max_gap`` defaults to half the median GT sampling interval.
    """
    if len(est) == 0 or len(gt) == 0:
        raise EmptyOverlapError("empty trajectory")
    if max_gap is None:
        max_gap = 0.5 * float(np.median(np.diff(gt.t))) if len(gt) > 1 else 0.0
    order = np.argsort(est.t, kind="stable")
    te = est.t[order]
    pos = np.clip(np.searchsorted(te, gt.t), 1, max(len(te) - 1, 1))
    left = np.clip(pos - 1, 0, len(te) - 1)
    right = np.clip(pos, 0, len(te) - 1)
    pick = np.where(np.abs(te[left] - gt.t) <= np.abs(te[right] - gt.t), left, right)
    gap = np.abs(te[pick] - gt.t)
    ok = gap <= max_gap + 1e-12
    if not np.any(ok):
        raise EmptyOverlapError("no estimate lies within the pairing window of any GT sample")
    gi = np.flatnonzero(ok)
    ei = order[pick[ok]]
    return Paired(est.subset(ei), gt.subset(gi), int(len(gt) - ok.sum()), int(len(est) - len(np.unique(ei))))


@dataclass
class Alignment:
    rotation: np.ndarray
    translation: np.ndarray
    yaw_offset: float
    mode: str


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def fit_alignment(paired: Paired, mode: str = "first_pose") -> Alignment:
    est, gt = paired.est, paired.gt
    if mode == "first_pose":
        if len(est) < 1:
            raise DegenerateAlignmentError("first_pose alignment needs a pair")
        dyaw = float(wrap_angle(gt.yaw[0] - est.yaw[0]))
        rot = _rot_z(dyaw)
        return Alignment(rot, gt.xyz[0] - rot @ est.xyz[0], dyaw, mode)
    if mode == "rigid_lsq":
        if len(est) < 3:
            raise DegenerateAlignmentError("rigid_lsq alignment needs at least 3 pairs")
        mu_e, mu_g = est.xyz.mean(axis=0), gt.xyz.mean(axis=0)
        a, b = est.xyz - mu_e, gt.xyz - mu_g
        if np.linalg.matrix_rank(a, tol=1e-9 * max(1.0, np.abs(a).max())) < 2:
            raise DegenerateAlignmentError("estimate points are collinear or coincident")
        u, _, vt = np.linalg.svd(b.T @ a)
        fix = np.diag([1.0, 1.0, np.sign(np.linalg.det(u @ vt)) or 1.0])
        rot = u @ fix @ vt
        return Alignment(rot, mu_g - rot @ mu_e, math.atan2(rot[1, 0], rot[0, 0]), mode)
    if mode == "none":
        return Alignment(np.eye(3), np.zeros(3), 0.0, mode)
    raise ValueError(f"unknown alignment mode {mode!r}")


def align(paired: Paired, mode: str = "first_pose") -> tuple[Paired, Alignment]:
    al = fit_alignment(paired, mode)
    est = paired.est
    moved = Trajectory(est.frame, est.t, est.xyz @ al.rotation.T + al.translation, wrap_angle(est.yaw + al.yaw_offset))
    return Paired(moved, paired.gt, paired.unpaired_gt, paired.unpaired_est), al


# -- metrics ---------------------------------------------------------------


@dataclass
class EvalReport:
    mae_m: float
    rmse_m: float
    mte_m: float
    traveled_distance_m: float
    errors: np.ndarray = field(repr=False)
    yaw_errors: np.ndarray = field(repr=False)
    alignment: str = "first_pose"

    @property
    def frames(self) -> int:
        return len(self.errors)

    def table_row(self, method: str, time_cost_s: float | None = None) -> dict:
        return {
            "method": method,
            "frames": self.frames,
            "time_cost_s": "" if time_cost_s is None else f"{time_cost_s:.6g}",
            "mae_m": f"{self.mae_m:.6g}",
            "rmse_m": f"{self.rmse_m:.6g}",
            "mte_m": f"{self.mte_m:.6g}",
        }


def metrics(paired: Paired, alignment: str = "first_pose", traveled_distance: float | None = None) -> EvalReport:
    if len(paired.est) == 0:
        raise EmptyOverlapError("no pairs to evaluate")
    e = np.linalg.norm(paired.est.xyz - paired.gt.xyz, axis=1)
    dist = paired.gt.traveled_distance() if traveled_distance is None else traveled_distance
    return EvalReport(
        mae_m=float(np.mean(e)),
        rmse_m=float(np.sqrt(np.mean(e * e))),
        mte_m=float(np.max(e)),
        traveled_distance_m=dist,
        errors=e,
        yaw_errors=np.abs(wrap_angle(paired.est.yaw - paired.gt.yaw)),
        alignment=alignment,
    )


def evaluate(est: Trajectory, gt: Trajectory, alignment: str = "first_pose") -> EvalReport:
    paired = associate(est, gt)
    aligned, _ = align(paired, alignment)
    return metrics(aligned, alignment, traveled_distance=gt.traveled_distance())


def write_report(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_HEADER, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


# -- replica fidelity ---------------------------------------------------------


@dataclass
class FidelityReport:
    mean: np.ndarray  # per channel
    max: np.ndarray
    frac_within: np.ndarray
    tolerance: float
    errors: np.ndarray = field(repr=False)


def fidelity(replica_outputs, cann_labels, tolerance: float = math.pi / 37) -> FidelityReport:
    """Wrapped angular error between decoded replica outputs and oracle labels."""
    y = np.asarray(replica_outputs, dtype=float)
    lab = np.asarray(cann_labels, dtype=float)
    if y.shape != lab.shape:
        raise ValueError(f"length/shape mismatch: {y.shape} vs {lab.shape}")
    err = np.abs(wrap_angle(decode_pairs(y) - decode_pairs(lab)))
    err = err.reshape(-1, err.shape[-1])
    return FidelityReport(err.mean(axis=0), err.max(axis=0), (err <= tolerance).mean(axis=0), tolerance, err)

"""Interpolated one-hot encodings of ring stimuli and label conversions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cann import TWO_PI, ZERO_ACTIVITY_TOL, InputDomainError, ZeroActivityError

N_INTERVALS = 37


@dataclass(frozen=True)
class EncodedInput:
    v: np.ndarray
    c: float | np.ndarray
    c_frac: float | np.ndarray
    n_p: int = N_INTERVALS


def _check_finite(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InputDomainError(f"non-finite stimulus: {x!r}")
    return x


def ring_index(i_ext, n_p: int = N_INTERVALS):
    """Real-valued neuron index C = wrap(i_ext) / 2pi * n_p, in [0, n_p)."""
    wrapped = np.mod(_check_finite(i_ext), TWO_PI)
    c = wrapped / TWO_PI * n_p
    # wrapped can round up to exactly 2pi for tiny negative inputs
    return np.where(c >= n_p, c - n_p, c)


def encode_angles(values, n_p: int = N_INTERVALS) -> np.ndarray:
    """Vectorized encoding: array of shape (...,) -> (..., n_p)."""
    c = ring_index(values, n_p)
    lo = np.floor(c)
    frac = c - lo
    lo = lo.astype(np.int64) % n_p
    hi = (lo + 1) % n_p
    out = np.zeros(np.shape(c) + (n_p,))
    np.put_along_axis(out, lo[..., None], (1.0 - frac)[..., None], axis=-1)
    # add rather than assign so frac == 0 leaves a clean one-hot
    hi_vals = np.take_along_axis(out, hi[..., None], axis=-1) + frac[..., None]
    np.put_along_axis(out, hi[..., None], hi_vals, axis=-1)
    return out


def encode_angle(i_ext: float, n_p: int = N_INTERVALS) -> EncodedInput:
    c = float(ring_index(i_ext, n_p))
    return EncodedInput(encode_angles(i_ext, n_p), c, c - math.floor(c), n_p)


def encode_positions(points, n_p: int = N_INTERVALS) -> np.ndarray:
    """(..., 3) ring coordinates -> (..., 3 * n_p) concatenated x|y|z blocks."""
    p = _check_finite(points)
    if p.shape[-1] != 3:
        raise ValueError(f"expected 3 components, got shape {p.shape}")
    blocks = encode_angles(p, n_p)  # (..., 3, n_p)
    return blocks.reshape(p.shape[:-1] + (3 * n_p,))


def encode_position(p, n_p: int = N_INTERVALS) -> EncodedInput:
    p = _check_finite(p)
    c = ring_index(p, n_p)
    return EncodedInput(encode_positions(p, n_p), c, c - np.floor(c), n_p)


def normalize_pairs(labels: np.ndarray) -> np.ndarray:
    """Scale every (num, den) pair in the last axis to unit length."""
    lab = np.asarray(labels, dtype=float)
    pairs = lab.reshape(lab.shape[:-1] + (-1, 2))
    norm = np.linalg.norm(pairs, axis=-1, keepdims=True)
    if np.any(norm <= ZERO_ACTIVITY_TOL):
        raise ZeroActivityError("cannot normalize a zero (num, den) pair")
    return (pairs / norm).reshape(lab.shape)


def decode_label(pair, tol: float = ZERO_ACTIVITY_TOL):
    """atan2(num, den) for a pair or an (..., 2) array of pairs."""
    arr = np.asarray(pair, dtype=float)
    num, den = arr[..., 0], arr[..., 1]
    if np.any(np.hypot(num, den) <= tol):
        raise ZeroActivityError("(num, den) pair is numerically zero")
    theta = np.arctan2(num, den)
    return float(theta) if theta.ndim == 0 else theta


def decode_pairs(outputs) -> np.ndarray:
    """Angles for every consecutive (num, den) pair: (..., 2m) -> (..., m)."""
    arr = np.asarray(outputs, dtype=float)
    return np.arctan2(arr[..., 0::2], arr[..., 1::2])

"""Reference continuous attractor network on a ring (1D) or a torus (3D).

The simulator integrates

    tau * dU/dt = -U + rho * sum_j J_ij r_j + I_ext

with explicit Euler steps, where the firing rates come from squared
rectification followed by divisive normalization, and reads the bump
position back out with a population vector (atan2 of activity-weighted
sine/cosine sums). It is the label oracle for the replica networks and
the cost baseline for the benchmarks.

Every array routine accepts leading batch dimensions: a 1D state has
shape ``(..., n)`` and a 3D state ``(..., n, n, n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi

# relative magnitude under which a population vector counts as cancelled
ZERO_ACTIVITY_TOL = 1e-9


class ZeroActivityError(ValueError):
    """Population vector is zero (or cancels), so the bump angle is undefined."""


class InputDomainError(ValueError):
    pass


class GeometryError(ValueError):
    pass


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi
    y = np.where(y == -math.pi, math.pi, y)
    return y if np.ndim(y) else float(y)


def circular_distance(a, b):
    d = np.abs(np.mod(np.asarray(a, dtype=float) - b, TWO_PI))
    return np.minimum(d, TWO_PI - d)


def critical_k(n_per_axis: int, j0: float, a: float) -> float:
    rho = n_per_axis / TWO_PI
    return rho * j0**2 / (8.0 * math.sqrt(TWO_PI * a))


@dataclass(frozen=True)
class CannParams:
    """Geometry and constants of a ring/torus attractor network.

    ``k`` defaults to ``0.3 * k_c`` and ``b_ext`` to ``1 / (4 a^2)``;
    ``rho`` is always ``n_per_axis / (2 pi)``.
    """

    dims: int = 1
    n_per_axis: int = 37
    tau: float = 1.0
    j0: float = 4.0
    a: float = 0.5
    k: float | None = None
    a_ext: float = 10.0
    b_ext: float | None = None
    dt: float | None = None
    kernel_exponent: str = "squared"

    def __post_init__(self):
        if self.k is None:
            object.__setattr__(self, "k", 0.3 * self.k_c)
        if self.b_ext is None:
            object.__setattr__(self, "b_ext", 1.0 / (4.0 * self.a**2))
        if self.dt is None:
            object.__setattr__(self, "dt", 0.05 * self.tau)
        self.validate()

    @property
    def rho(self) -> float:
        return self.n_per_axis / TWO_PI

    @property
    def k_c(self) -> float:
        return critical_k(self.n_per_axis, self.j0, self.a)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.dims

    @property
    def size(self) -> int:
        return self.n_per_axis**self.dims

    @property
    def prefs(self) -> np.ndarray:
        """Preferred angle of each neuron along one axis, i * 2pi / n."""
        return np.arange(self.n_per_axis) * (TWO_PI / self.n_per_axis)

    def validate(self) -> None:
        if self.dims not in (1, 3):
            raise ValueError(f"dims must be 1 or 3, got {self.dims}")
        if self.n_per_axis < 3:
            raise ValueError("n_per_axis must be >= 3")
        if not (self.a > 0 and self.tau > 0):
            raise ValueError("a and tau must be positive")
        if not (0 < self.k < self.k_c):
            raise ValueError(f"k={self.k} outside (0, k_c={self.k_c})")
        if self.a_ext <= 0 or self.b_ext <= 0:
            raise ValueError("a_ext and b_ext must be positive")
        if not (0 < self.dt <= self.tau / 10):
            raise ValueError(f"dt={self.dt} must lie in (0, tau/10]")
        if self.kernel_exponent not in ("squared", "linear"):
            raise ValueError(f"unknown kernel_exponent {self.kernel_exponent!r}")

    def with_(self, **changes) -> "CannParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "n_per_axis": self.n_per_axis,
            "tau": self.tau,
            "j0": self.j0,
            "a": self.a,
            "k": self.k,
            "a_ext": self.a_ext,
            "b_ext": self.b_ext,
            "dt": self.dt,
            "kernel_exponent": self.kernel_exponent,
        }


@dataclass
class BumpState:
    u: np.ndarray
    r: np.ndarray = field(default=None)

    @classmethod
    def zeros(cls, params: CannParams, batch: tuple[int, ...] = ()) -> "BumpState":
        u = np.zeros(batch + params.shape)
        return cls(u, np.zeros_like(u))


class AxisReduction(NamedTuple):
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray


class Decode3D(NamedTuple):
    coords: np.ndarray  # decoded neuron coordinate per axis, shape (..., 3)
    pairs: np.ndarray  # (numerator, denominator) per axis, flattened to (..., 6)


# -- stimulus -------------------------------------------------------------


def external_input(params: CannParams, p_ext) -> np.ndarray:
    """Gaussian drive a_ext * exp(-b_ext * d^2) centred on ``p_ext``.

    ``p_ext`` is a scalar (ring) or a 3-vector (torus); a leading batch
    dimension is allowed. ``d`` is the Euclidean norm of per-axis
    circular distances.
    """
    p = np.asarray(p_ext, dtype=float)
    if not np.all(np.isfinite(p)):
        raise InputDomainError(f"non-finite stimulus {p_ext!r}")
    prefs = params.prefs
    if params.dims == 1:
        d2 = circular_distance(p[..., None], prefs) ** 2
        return params.a_ext * np.exp(-params.b_ext * d2)
    if p.shape[-1:] != (3,):
        raise GeometryError(f"3D stimulus needs 3 components, got shape {p.shape}")
    # exp(-b (dx^2+dy^2+dz^2)) factorizes over the axes
    gx, gy, gz = (np.exp(-params.b_ext * circular_distance(p[..., i, None], prefs) ** 2) for i in range(3))
    return params.a_ext * gx[..., :, None, None] * gy[..., None, :, None] * gz[..., None, None, :]


# -- recurrent kernel -----------------------------------------------------


def kernel_value(params: CannParams, dist) -> np.ndarray:
    """Connection weight at circular displacement ``dist`` (radians, >= 0)."""
    dist = np.asarray(dist, dtype=float)
    amp = params.j0 / math.sqrt(TWO_PI * params.a)
    arg = dist**2 if params.kernel_exponent == "squared" else dist
    return amp * np.exp(-arg / (2.0 * params.a**2))


class Kernel:
    """Circular convolution with the Gaussian connection profile.

    In squared mode on the torus the kernel is a product of per-axis
    profiles and is applied as three circulant matrix passes. Linear
    mode on the torus has no such factorization and goes through an FFT
    of the full periodic stencil.
    """

    def __init__(self, params: CannParams):
        self.params = params
        n = params.n_per_axis
        prefs = params.prefs
        d = circular_distance(prefs[:, None], prefs[None, :])
        self.amplitude = params.j0 / math.sqrt(TWO_PI * params.a)
        self.separable = params.kernel_exponent == "squared"
        if params.dims == 1:
            self.matrix = kernel_value(params, d)
        elif self.separable:
            self.axis_matrix = np.exp(-(d**2) / (2.0 * params.a**2))
        else:
            off = circular_distance(np.arange(n) * (TWO_PI / n), 0.0)
            dist = np.sqrt(off[:, None, None] ** 2 + off[None, :, None] ** 2 + off[None, None, :] ** 2)
            self.stencil = kernel_value(params, dist)
            self._stencil_fft = np.fft.rfftn(self.stencil)

    def profile(self, delta) -> np.ndarray:
        """Kernel evaluated at signed displacement(s) ``delta`` along one axis."""
        return kernel_value(self.params, circular_distance(delta, 0.0))

    def apply(self, r: np.ndarray) -> np.ndarray:
        """sum_j J_ij r_j for every neuron i."""
        if self.params.dims == 1:
            return r @ self.matrix.T
        n = self.params.n_per_axis
        if self.separable:
            g = self.axis_matrix
            lead = r.shape[:-3]
            x = np.matmul(g, r.reshape(lead + (n, n * n))).reshape(r.shape)  # x axis
            x = np.matmul(g, x)  # y axis: g acts on axis -2 of each (n, n) slab
            x = np.matmul(x, g.T)  # z axis
            return self.amplitude * x
        spec = np.fft.rfftn(r, axes=(-3, -2, -1))
        return np.fft.irfftn(spec * self._stencil_fft, s=(n, n, n), axes=(-3, -2, -1))


def build_kernel(params: CannParams) -> Kernel:
    return Kernel(params)


def dense_weights(params: CannParams) -> np.ndarray:
    """Full J_ij matrix over flattened neurons. Only for small networks."""
    if params.size > 17**3:
        raise ValueError("dense weights are only built for n_per_axis <= 17")
    prefs = params.prefs
    grids = np.meshgrid(*([prefs] * params.dims), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    d2 = np.sum(circular_distance(pts[:, None, :], pts[None, :, :]) ** 2, axis=-1)
    return kernel_value(params, np.sqrt(d2))


# -- dynamics -------------------------------------------------------------


def firing_rates(params: CannParams, u: np.ndarray) -> np.ndarray:
    """Squared rectification with divisive normalization."""
    u = np.asarray(u, dtype=float)
    sq = np.square(np.maximum(u, 0.0))
    axes = tuple(range(-params.dims, 0))
    total = sq.sum(axis=axes, keepdims=True)
    return sq / (1.0 + params.k * params.rho * total)


def step(params: CannParams, state: BumpState, i_ext: np.ndarray, kernel: Kernel | None = None) -> BumpState:
    """One explicit Euler step of the network dynamics."""
    if state.u.shape[-params.dims :] != params.shape or np.shape(i_ext)[-params.dims :] != params.shape:
        raise GeometryError(f"state {state.u.shape} / drive {np.shape(i_ext)} do not match geometry {params.shape}")
    kernel = kernel or Kernel(params)
    r = state.r if state.r is not None else firing_rates(params, state.u)
    du = -state.u + params.rho * kernel.apply(r) + i_ext
    u = state.u + (params.dt / params.tau) * du
    return BumpState(u, firing_rates(params, u))


# -- decoding -------------------------------------------------------------


def population_vector(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(sum U sin(2 pi i/N), sum U cos(2 pi i/N)) over the last axis."""
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    ang = np.arange(n) * (TWO_PI / n)
    return u @ np.sin(ang), u @ np.cos(ang)


def _check_activity(num, den, u) -> None:
    scale = np.maximum(np.sum(np.abs(u), axis=-1), 1e-300)
    if np.any(np.hypot(num, den) <= ZERO_ACTIVITY_TOL * scale):
        raise ZeroActivityError("population vector cancels; bump position undefined")


def decode_1d(u: np.ndarray, n: int | None = None):
    """Bump angle in (-pi, pi] and the matching neuron coordinate in [0, n)."""
    u = np.asarray(u, dtype=float)
    n = u.shape[-1] if n is None else n
    if u.shape[-1] != n:
        raise GeometryError(f"expected {n} neurons, got {u.shape[-1]}")
    num, den = population_vector(u)
    _check_activity(num, den, u)
    theta = np.arctan2(num, den)
    y = np.mod(theta * n / TWO_PI, n)
    y = np.where(y >= n, 0.0, y)
    if np.ndim(theta) == 0:
        return float(theta), float(y)
    return theta, y


def reduce_3d(u: np.ndarray) -> AxisReduction:
    u = np.asarray(u, dtype=float)
    if u.ndim < 3 or not (u.shape[-1] == u.shape[-2] == u.shape[-3]):
        raise GeometryError(f"expected (..., n, n, n) array, got {u.shape}")
    return AxisReduction(u.sum(axis=(-2, -1)), u.sum(axis=(-3, -1)), u.sum(axis=(-3, -2)))


def decode_3d(u: np.ndarray, n: int | None = None) -> Decode3D:
    red = reduce_3d(u)
    coords, pairs = [], []
    for axis, s in zip("xyz", red):
        num, den = population_vector(s)
        try:
            _check_activity(num, den, s)
        except ZeroActivityError as exc:
            raise ZeroActivityError(f"axis {axis}: {exc}") from None
        _, y = decode_1d(s, n)
        coords.append(y)
        pairs.extend([num, den])
    return Decode3D(np.stack(coords, axis=-1), np.stack(pairs, axis=-1))


def reconstruct_bump(red: AxisReduction) -> np.ndarray:
    """Approximate the 3D bump from its axis sums (outer product, total preserved)."""
    sx, sy, sz = (np.asarray(s, dtype=float) for s in red)
    if min(sx.min(), sy.min(), sz.min()) < 0:
        raise ValueError("reductions must be non-negative")
    total = sx.sum()
    if total <= 0 or sy.sum() <= 0 or sz.sum() <= 0:
        raise ZeroActivityError("cannot reconstruct from an all-zero reduction")
    vol = sx[:, None, None] * sy[None, :, None] * sz[None, None, :]
    return vol * (total / vol.sum())


# -- sequences ------------------------------------------------------------


class Cann:
    """Stateful simulator bundling params, kernel and the bump state."""

    def __init__(self, params: CannParams, batch: tuple[int, ...] = ()):
        self.params = params
        self.kernel = Kernel(params)
        self.state = BumpState.zeros(params, batch)

    def reset(self) -> None:
        self.state = BumpState.zeros(self.params, self.state.u.shape[: -self.params.dims])

    def advance(self, stimulus, steps: int) -> BumpState:
        """Hold ``stimulus`` (wrapped into [0, 2pi)) for ``steps`` Euler steps."""
        drive = external_input(self.params, np.mod(stimulus, TWO_PI))
        for _ in range(steps):
            self.state = step(self.params, self.state, drive, self.kernel)
        if not np.all(np.isfinite(self.state.u)):
            raise FloatingPointError("attractor state became non-finite")
        return self.state

    def label(self) -> np.ndarray:
        """Raw population-vector label: (num, den) for a ring, six values for a torus."""
        if self.params.dims == 1:
            num, den = population_vector(self.state.u)
            _check_activity(num, den, self.state.u)
            return np.stack([num, den], axis=-1)
        return decode_3d(self.state.u).pairs


def run_cann_sequence(
    params: CannParams,
    inputs,
    settle_steps: int = 10,
    return_states: bool = False,
):
    """Drive the network with a stimulus sequence and emit one label per frame.

    ``inputs`` has shape ``(T,)`` for a ring or ``(T, 3)`` for a torus, and may
    carry a leading batch dimension (``(B, T)`` / ``(B, T, 3)``) to label several
    sequences at once. Returns raw (unnormalized) labels of shape
    ``(..., T, 2)`` or ``(..., T, 6)``; with ``return_states`` also the
    synaptic-input array after each frame.
    """
    x = np.asarray(inputs, dtype=float)
    time_axis = x.ndim - (1 if params.dims == 1 else 2)
    if time_axis < 0 or (params.dims == 3 and x.shape[-1] != 3):
        raise GeometryError(f"inputs of shape {x.shape} do not match dims={params.dims}")
    n_frames = x.shape[time_axis]
    batch = x.shape[:time_axis]
    width = 2 if params.dims == 1 else 6
    labels = np.empty(batch + (n_frames, width))
    states = np.empty(batch + (n_frames,) + params.shape) if return_states else None
    if n_frames == 0:
        return (labels, states) if return_states else labels
    sim = Cann(params, batch)
    for t in range(n_frames):
        sim.advance(np.take(x, t, axis=time_axis), settle_steps)
        labels[..., t, :] = sim.label()
        if return_states:
            states[(slice(None),) * len(batch) + (t,)] = sim.state.u
    return (labels, states) if return_states else labels

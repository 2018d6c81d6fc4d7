"""Lightweight recurrent replica of the attractor network's decoded dynamics.

Per frame, with row-vector activations and weights stored as ``(out, in)``::

    a1 = relu(x  W_fc1^T + b_fc1)
    a2 = relu(a1 W_fc2^T + b_fc2)
    for each of the three LSTM layers (input s = a2, then the layer below):
        z = s W_x^T + h_prev W_h^T + b          # 4h wide: [i | f | g | o]
        i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
        c = f * c_prev + i * g
        h = o * tanh(c)
    d = tanh(h3 W_dec^T + b_dec)
    y = d W_out^T + b_out

The outputs are (numerator, denominator) pairs, one per decoded axis, read
back to angles with atan2. Stacked layers have no top-down feedback, so a
whole sequence is evaluated layer by layer: only the ``h_prev W_h^T`` term
is computed inside the time loop.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class Architecture:
    input_size: int
    hidden_size: int
    decoder_size: int
    output_size: int
    n_lstm: int = 3

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        h = self.hidden_size
        shapes = [
            ("fc1.weight", (h, self.input_size)),
            ("fc1.bias", (h,)),
            ("fc2.weight", (h, h)),
            ("fc2.bias", (h,)),
        ]
        for layer in range(self.n_lstm):
            shapes += [
                (f"lstm{layer}.weight_x", (4 * h, h)),
                (f"lstm{layer}.weight_h", (4 * h, h)),
                (f"lstm{layer}.bias", (4 * h,)),
            ]
        shapes += [
            ("dec.weight", (self.decoder_size, h)),
            ("dec.bias", (self.decoder_size,)),
            ("out.weight", (self.output_size, self.decoder_size)),
            ("out.bias", (self.output_size,)),
        ]
        return shapes

    def to_dict(self) -> dict:
        return asdict(self)


HDCN = Architecture(input_size=37, hidden_size=37, decoder_size=12, output_size=2)
GCN = Architecture(input_size=111, hidden_size=111, decoder_size=37, output_size=6)


class ShapeError(ValueError):
    pass


class ReplicaWeights:
    """Named parameter tensors of one replica network, in declaration order."""

    def __init__(self, arch: Architecture, params: "OrderedDict[str, np.ndarray]"):
        self.arch = arch
        self.params = params
        for name, shape in arch.param_shapes():
            if name not in params:
                raise ShapeError(f"missing parameter {name}")
            if params[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {params[name].shape}")

    @classmethod
    def init(cls, arch: Architecture, seed: int = 0) -> "ReplicaWeights":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, forget-gate bias 1."""
        rng = np.random.default_rng(seed)
        params = OrderedDict()
        fan_in = {}
        for name, shape in arch.param_shapes():
            if name.endswith("weight") or "weight_" in name:
                fan_in[name.split(".")[0]] = shape[1]
        h = arch.hidden_size
        for name, shape in arch.param_shapes():
            layer = name.split(".")[0]
            bound = 1.0 / np.sqrt(fan_in[layer])
            p = rng.uniform(-bound, bound, size=shape)
            if name.startswith("lstm") and name.endswith("bias"):
                p[h : 2 * h] = 1.0
            params[name] = p
        return cls(arch, params)

    @classmethod
    def zeros(cls, arch: Architecture) -> "ReplicaWeights":
        return cls(arch, OrderedDict((n, np.zeros(s)) for n, s in arch.param_shapes()))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def copy(self) -> "ReplicaWeights":
        return ReplicaWeights(self.arch, OrderedDict((k, v.copy()) for k, v in self.params.items()))

    def snapped(self) -> "ReplicaWeights":
        """Copy with every value rounded to float32 (the on-disk precision)."""
        return ReplicaWeights(
            self.arch, OrderedDict((k, v.astype(np.float32).astype(np.float64)) for k, v in self.params.items())
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.params.values()])

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


@dataclass
class HiddenState:
    h: list[np.ndarray]
    c: list[np.ndarray]

    @classmethod
    def zeros(cls, arch: Architecture, batch: tuple[int, ...] = ()) -> "HiddenState":
        shape = batch + (arch.hidden_size,)
        return cls([np.zeros(shape) for _ in range(arch.n_lstm)], [np.zeros(shape) for _ in range(arch.n_lstm)])

    def reset(self) -> None:
        for v in self.h + self.c:
            v[...] = 0.0

    def copy(self) -> "HiddenState":
        return HiddenState([v.copy() for v in self.h], [v.copy() for v in self.c])


def sigmoid(x):
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_input(w: ReplicaWeights, x: np.ndarray) -> None:
    if x.shape[-1] != w.arch.input_size:
        raise ShapeError(f"input width {x.shape[-1]} != architecture input {w.arch.input_size}")


def _lstm_cell(w: ReplicaWeights, layer: int, xp: np.ndarray, h: np.ndarray, c: np.ndarray):
    """One cell update given the precomputed input projection ``xp``."""
    hs = w.arch.hidden_size
    z = xp + h @ w[f"lstm{layer}.weight_h"].T
    i = sigmoid(z[..., :hs])
    f = sigmoid(z[..., hs : 2 * hs])
    g = np.tanh(z[..., 2 * hs : 3 * hs])
    o = sigmoid(z[..., 3 * hs :])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return i, f, g, o, c_new, tc, o * tc


def _head(w: ReplicaWeights, x: np.ndarray):
    a1 = np.maximum(x @ w["fc1.weight"].T + w["fc1.bias"], 0.0)
    a2 = np.maximum(a1 @ w["fc2.weight"].T + w["fc2.bias"], 0.0)
    return a1, a2


def _tail(w: ReplicaWeights, h: np.ndarray):
    d = np.tanh(h @ w["dec.weight"].T + w["dec.bias"])
    return d, d @ w["out.weight"].T + w["out.bias"]


def forward_step(w: ReplicaWeights, state: HiddenState, x: np.ndarray):
    """Advance one frame. Returns (outputs, new HiddenState); ``state`` is untouched."""
    x = np.asarray(x, dtype=float)
    _check_input(w, x)
    _, s = _head(w, x)
    new = HiddenState([], [])
    for layer in range(w.arch.n_lstm):
        xp = s @ w[f"lstm{layer}.weight_x"].T + w[f"lstm{layer}.bias"]
        *_, c, _, h = _lstm_cell(w, layer, xp, state.h[layer], state.c[layer])
        new.h.append(h)
        new.c.append(c)
        s = h
    _, y = _tail(w, s)
    return y, new


def _forward_cache(w: ReplicaWeights, x: np.ndarray, state: HiddenState):
    """Sequence forward on (B, T, in) keeping what the backward pass needs."""
    a1, a2 = _head(w, x)
    cache = {"x": x, "a1": a1, "a2": a2, "layers": []}
    s = a2
    b, t_len, hs = x.shape[0], x.shape[1], w.arch.hidden_size
    final = HiddenState([], [])
    for layer in range(w.arch.n_lstm):
        xp = s @ w[f"lstm{layer}.weight_x"].T + w[f"lstm{layer}.bias"]
        gates = np.empty((b, t_len, 4 * hs))
        cs = np.empty((b, t_len, hs))
        tcs = np.empty((b, t_len, hs))
        hs_out = np.empty((b, t_len, hs))
        h, c = state.h[layer], state.c[layer]
        for t in range(t_len):
            i, f, g, o, c, tc, h = _lstm_cell(w, layer, xp[:, t], h, c)
            gates[:, t, :hs] = i
            gates[:, t, hs : 2 * hs] = f
            gates[:, t, 2 * hs : 3 * hs] = g
            gates[:, t, 3 * hs :] = o
            cs[:, t], tcs[:, t], hs_out[:, t] = c, tc, h
        cache["layers"].append(
            {"input": s, "gates": gates, "c": cs, "tc": tcs, "h": hs_out, "h0": state.h[layer], "c0": state.c[layer]}
        )
        final.h.append(h)
        final.c.append(c)
        s = hs_out
    d, y = _tail(w, s)
    cache["d"], cache["y"] = d, y
    return y, final, cache


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError(f"expected (T, in) or (B, T, in), got {x.shape}")
    return x, False


def forward_sequence(w: ReplicaWeights, x_seq, state: HiddenState | None = None, return_state: bool = False):
    """Outputs for every frame of ``x_seq`` (``(T, in)`` or ``(B, T, in)``).

    The recurrent state starts from zeros unless ``state`` is given.
    """
    x, squeeze = _as_batch(x_seq)
    _check_input(w, x)
    if x.shape[1] == 0:
        raise ShapeError("empty sequence")
    if state is None:
        state = HiddenState.zeros(w.arch, (x.shape[0],))
    elif squeeze:
        state = HiddenState([h[None] for h in state.h], [c[None] for c in state.c])
    y, final, _ = _forward_cache(w, x, state)
    if squeeze:
        y = y[0]
        final = HiddenState([h[0] for h in final.h], [c[0] for c in final.c])
    return (y, final) if return_state else y


def _backward(w: ReplicaWeights, cache: dict, dy: np.ndarray) -> "OrderedDict[str, np.ndarray]":
    hs = w.arch.hidden_size
    grads: dict[str, np.ndarray] = {}

    def wgrad(delta, inp):
        return np.einsum("bto,bti->oi", delta, inp), delta.sum(axis=(0, 1))

    d = cache["d"]
    top = cache["layers"][-1]["h"] if cache["layers"] else cache["a2"]
    grads["out.weight"], grads["out.bias"] = wgrad(dy, d)
    dzd = (dy @ w["out.weight"]) * (1.0 - d * d)
    grads["dec.weight"], grads["dec.bias"] = wgrad(dzd, top)
    dh_seq = dzd @ w["dec.weight"]

    for layer in reversed(range(w.arch.n_lstm)):
        lc = cache["layers"][layer]
        gates, cs, tcs = lc["gates"], lc["c"], lc["tc"]
        wh = w[f"lstm{layer}.weight_h"]
        b, t_len = gates.shape[0], gates.shape[1]
        dz = np.empty_like(gates)
        dh_next = np.zeros((b, hs))
        dc_next = np.zeros((b, hs))
        for t in reversed(range(t_len)):
            i = gates[:, t, :hs]
            f = gates[:, t, hs : 2 * hs]
            g = gates[:, t, 2 * hs : 3 * hs]
            o = gates[:, t, 3 * hs :]
            c_prev = cs[:, t - 1] if t > 0 else lc["c0"]
            dh = dh_seq[:, t] + dh_next
            tc = tcs[:, t]
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz[:, t, :hs] = dc * g * i * (1.0 - i)
            dz[:, t, hs : 2 * hs] = dc * c_prev * f * (1.0 - f)
            dz[:, t, 2 * hs : 3 * hs] = dc * i * (1.0 - g * g)
            dz[:, t, 3 * hs :] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz[:, t] @ wh
        h_prev = np.concatenate([lc["h0"][:, None, :], lc["h"][:, :-1]], axis=1)
        grads[f"lstm{layer}.weight_h"] = np.einsum("bto,bti->oi", dz, h_prev)
        grads[f"lstm{layer}.weight_x"], grads[f"lstm{layer}.bias"] = wgrad(dz, lc["input"])
        dh_seq = dz @ w[f"lstm{layer}.weight_x"]

    a1, a2 = cache["a1"], cache["a2"]
    dz2 = dh_seq * (a2 > 0)
    grads["fc2.weight"], grads["fc2.bias"] = wgrad(dz2, a1)
    dz1 = (dz2 @ w["fc2.weight"]) * (a1 > 0)
    grads["fc1.weight"], grads["fc1.bias"] = wgrad(dz1, cache["x"])
    return OrderedDict((name, grads[name]) for name, _ in w.arch.param_shapes())


class NonFiniteLoss(FloatingPointError):
    pass


def bptt_gradients(w: ReplicaWeights, x_seq, label_seq, truncation: int | None = None):
    """Mean squared error over frames/components and its exact gradient.

    With ``truncation`` set, the sequence is cut into windows of that many
    frames; the recurrent state carries across windows but gradients do not.
    """
    x, _ = _as_batch(x_seq)
    lab, _ = _as_batch(label_seq)
    _check_input(w, x)
    if lab.shape[:2] != x.shape[:2] or lab.shape[-1] != w.arch.output_size:
        raise ShapeError(f"labels {lab.shape} do not match inputs {x.shape}")
    n_total = lab.size
    state = HiddenState.zeros(w.arch, (x.shape[0],))
    window = truncation or x.shape[1]
    grads = None
    sq_err = 0.0
    for start in range(0, x.shape[1], window):
        sl = slice(start, start + window)
        y, state, cache = _forward_cache(w, x[:, sl], state)
        err = y - lab[:, sl]
        sq_err += float(np.sum(err * err))
        if not np.isfinite(sq_err):
            raise NonFiniteLoss(f"loss is {sq_err / n_total} in frames {start}..{start + window - 1}")
        g = _backward(w, cache, (2.0 / n_total) * err)
        if grads is None:
            grads = g
        else:
            for k in grads:
                grads[k] += g[k]
    loss = sq_err / n_total
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    return loss, grads


def mse_loss(w: ReplicaWeights, x_seq, label_seq) -> float:
    y = forward_sequence(w, x_seq)
    return float(np.mean((y - np.asarray(label_seq)) ** 2))

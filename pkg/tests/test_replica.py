import math
from collections import OrderedDict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import LAYER_TYPES, names_of, probe
from cannpi.replica import (
    GCN,
    HDCN,
    Architecture,
    HiddenState,
    NonFiniteLoss,
    ReplicaWeights,
    ShapeError,
    bptt_gradients,
    forward_sequence,
    forward_step,
    mse_loss,
)

TINY = Architecture(input_size=5, hidden_size=4, decoder_size=3, output_size=2)


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def scalar_step(w, hs, cs, x):
    """Straight-line scalar re-implementation of one frame (gate order i, f, g, o)."""
    P = {k: v.tolist() for k, v in w.params.items()}
    a = w.arch

    def dense(W, b, inp, act):
        return [act(sum(W[r][c] * inp[c] for c in range(len(inp))) + b[r]) for r in range(len(b))]

    relu = lambda v: max(v, 0.0)  # noqa: E731
    s = dense(P["fc1.weight"], P["fc1.bias"], list(x), relu)
    s = dense(P["fc2.weight"], P["fc2.bias"], s, relu)
    new_h, new_c = [], []
    H = a.hidden_size
    for layer in range(a.n_lstm):
        Wx, Wh, b = P[f"lstm{layer}.weight_x"], P[f"lstm{layer}.weight_h"], P[f"lstm{layer}.bias"]
        h_prev, c_prev = hs[layer], cs[layer]
        z = [
            sum(Wx[r][k] * s[k] for k in range(len(s))) + sum(Wh[r][k] * h_prev[k] for k in range(H)) + b[r]
            for r in range(4 * H)
        ]
        h_out, c_out = [], []
        for j in range(H):
            i_g, f_g = _sig(z[j]), _sig(z[H + j])
            g_g, o_g = math.tanh(z[2 * H + j]), _sig(z[3 * H + j])
            c = f_g * c_prev[j] + i_g * g_g
            c_out.append(c)
            h_out.append(o_g * math.tanh(c))
        new_h.append(h_out)
        new_c.append(c_out)
        s = h_out
    d = dense(P["dec.weight"], P["dec.bias"], s, math.tanh)
    y = dense(P["out.weight"], P["out.bias"], d, lambda v: v)
    return y, new_h, new_c


class TestArchitecture:
    def test_named_shapes(self):
        assert HDCN.input_size == 37 and HDCN.output_size == 2
        assert GCN.input_size == 111 and GCN.output_size == 6
        shapes = dict(HDCN.param_shapes())
        assert shapes["lstm0.weight_x"] == (148, 37)
        assert shapes["out.weight"] == (2, 12)

    def test_init_deterministic(self):
        a, b = ReplicaWeights.init(HDCN, 3), ReplicaWeights.init(HDCN, 3)
        np.testing.assert_array_equal(a.flat(), b.flat())
        assert not np.array_equal(a.flat(), ReplicaWeights.init(HDCN, 4).flat())

    def test_forget_bias(self):
        w = ReplicaWeights.init(HDCN, 0)
        np.testing.assert_array_equal(w["lstm1.bias"][37:74], 1.0)

    def test_missing_param(self):
        w = ReplicaWeights.init(TINY, 0)
        params = OrderedDict(w.params)
        del params["dec.bias"]
        with pytest.raises(ShapeError):
            ReplicaWeights(TINY, params)


class TestForward:
    def test_zero_weights_zero_output(self):
        w = ReplicaWeights.zeros(HDCN)
        y, _ = forward_step(w, HiddenState.zeros(HDCN), np.random.default_rng(0).random(37))
        np.testing.assert_array_equal(y, 0.0)

    def test_deterministic(self):
        w = ReplicaWeights.init(TINY, 1)
        s = HiddenState.zeros(TINY)
        x = np.arange(5.0)
        y1, s1 = forward_step(w, s, x)
        y2, s2 = forward_step(w, s, x)
        np.testing.assert_array_equal(y1, y2)
        for a, b in zip(s1.h + s1.c, s2.h + s2.c):
            np.testing.assert_array_equal(a, b)

    def test_scalar_oracle(self):
        rng = np.random.default_rng(7)
        w = ReplicaWeights.init(TINY, 7)
        for v in w.params.values():
            v += rng.normal(0, 0.3, v.shape)
        h0 = [list(rng.normal(0, 0.5, 4)) for _ in range(3)]
        c0 = [list(rng.normal(0, 0.5, 4)) for _ in range(3)]
        x = rng.normal(0, 1, 5)
        y, s = forward_step(w, HiddenState([np.array(h) for h in h0], [np.array(c) for c in c0]), x)
        y_ref, h_ref, c_ref = scalar_step(w, h0, c0, x)
        np.testing.assert_allclose(y, y_ref, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(np.array(s.h), h_ref, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(np.array(s.c), c_ref, rtol=1e-12, atol=1e-14)

    def test_length_one_sequence(self):
        w = ReplicaWeights.init(TINY, 2)
        x = np.random.default_rng(2).random((1, 5))
        y_step, _ = forward_step(w, HiddenState.zeros(TINY), x[0])
        np.testing.assert_allclose(forward_sequence(w, x)[0], y_step, rtol=1e-12)

    @given(st.integers(2, 12), st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_stepwise_equals_sequence(self, length, seed):
        w = ReplicaWeights.init(TINY, seed)
        x = np.random.default_rng(seed).random((length, 5))
        state = HiddenState.zeros(TINY)
        ys = []
        for t in range(length):
            y, state = forward_step(w, state, x[t])
            ys.append(y)
        np.testing.assert_allclose(np.array(ys), forward_sequence(w, x), rtol=1e-11, atol=1e-13)

    def test_state_carries_across_chunks(self):
        w = ReplicaWeights.init(TINY, 5)
        x = np.random.default_rng(5).random((9, 5))
        y1, st1 = forward_sequence(w, x[:4], return_state=True)
        y2 = forward_sequence(w, x[4:], state=st1)
        np.testing.assert_allclose(np.concatenate([y1, y2]), forward_sequence(w, x), rtol=1e-12)

    def test_batch_matches_single(self):
        w = ReplicaWeights.init(TINY, 6)
        x = np.random.default_rng(6).random((3, 7, 5))
        yb = forward_sequence(w, x)
        for b in range(3):
            np.testing.assert_allclose(yb[b], forward_sequence(w, x[b]), rtol=1e-12)

    def test_wrong_width(self):
        with pytest.raises(ShapeError):
            forward_sequence(ReplicaWeights.init(TINY, 0), np.zeros((3, 6)))


class TestBptt:
    def test_perfect_labels(self):
        w = ReplicaWeights.init(TINY, 0)
        x = np.random.default_rng(0).random((6, 5))
        loss, grads = bptt_gradients(w, x, forward_sequence(w, x))
        assert loss == 0.0
        for g in grads.values():
            np.testing.assert_array_equal(g, 0.0)

    def test_doubling_error_quadruples_loss(self):
        w = ReplicaWeights.init(TINY, 1)
        x = np.random.default_rng(1).random((6, 2, 5))[:, 0]
        y = forward_sequence(w, x)
        e = np.random.default_rng(2).normal(size=y.shape)
        l1, _ = bptt_gradients(w, x, y + e)
        l2, _ = bptt_gradients(w, x, y + 2 * e)
        assert l2 == pytest.approx(4 * l1, rel=1e-12)

    def test_loss_matches_mse(self):
        w = ReplicaWeights.init(TINY, 3)
        rng = np.random.default_rng(3)
        x, y = rng.random((5, 5)), rng.random((5, 2))
        assert bptt_gradients(w, x, y)[0] == pytest.approx(mse_loss(w, x, y), rel=1e-12)

    @pytest.mark.parametrize("layer_type", sorted(LAYER_TYPES))
    def test_finite_differences_per_layer(self, layer_type):
        arch = Architecture(37, 8, 6, 2)
        w = ReplicaWeights.init(arch, 11)
        rng = np.random.default_rng(11)
        x, y = rng.random((2, 5, 37)), rng.normal(size=(2, 5, 2))
        errs = probe(w, x, y, names_of(w, layer_type), 15, rng)
        assert errs.max() < 1e-4

    def test_truncated_windows_cover_sequence(self):
        w = ReplicaWeights.init(TINY, 4)
        rng = np.random.default_rng(4)
        x, y = rng.random((10, 5)), rng.random((10, 2))
        full, _ = bptt_gradients(w, x, y)
        trunc, _ = bptt_gradients(w, x, y, truncation=3)
        assert trunc == pytest.approx(full, rel=1e-12)  # same forward pass, same loss

    def test_non_finite(self):
        w = ReplicaWeights.init(TINY, 0)
        with pytest.raises(NonFiniteLoss):
            bptt_gradients(w, np.zeros((3, 5)), np.full((3, 2), np.inf))

    def test_label_shape(self):
        w = ReplicaWeights.init(TINY, 0)
        with pytest.raises(ShapeError):
            bptt_gradients(w, np.zeros((3, 5)), np.zeros((4, 2)))

"""Cell math tests: forward examples, reduction to a plain LSTM, and
finite-difference verification of the hand-derived gradients."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from eprl import eplstm
from eprl.eplstm import EpLstmParams, EpLstmState, forward_step, backward_step, unroll


# ---------------------------------------------------------------------------
# oracles

class PlainLstm:
    """Independent standard LSTM (input/forget/output gates, tanh candidate).

    Reads only the i/f/o/g blocks of shared parameters and stacks its own
    copies. The matmul call shape matches the cell under test because BLAS
    rounding here is call-shape dependent; per-row results are unaffected
    by which other rows share the stack (verified empirically), so bitwise
    comparison is meaningful.
    """

    def __init__(self, params: EpLstmParams):
        take = ["i", "f", "o", "g"]
        self.H = params.hidden_size
        self.wx = np.concatenate([params.w_x(g) for g in take], axis=0).copy()
        self.wh = np.concatenate([params.w_h(g) for g in take], axis=0).copy()
        self.b = np.concatenate([params.bias(g) for g in take]).copy()

    def run(self, xs, h, c):
        H = self.H
        states = []
        for x in xs:
            z = (x[None, :] @ self.wx.T + h[None, :] @ self.wh.T + self.b)[0]
            i = expit(z[0:H])
            f = expit(z[H:2 * H])
            o = expit(z[2 * H:3 * H])
            g = np.tanh(z[3 * H:4 * H])
            c = i * g + f * c
            h = o * np.tanh(c)
            states.append((h, c))
        return states


def fd_gradients(params, xs, c_eps, init, grad_h_list, eps=1e-5):
    """Central finite differences of L = sum_t u_t . h_t over every parameter."""
    def loss():
        states, _, _ = unroll(params, xs, c_eps, init)
        return sum(float(np.dot(u, s.h)) for u, s in zip(grad_h_list, states))

    num = params.zeros_like()
    for (_, arr), (_, out) in zip(params.arrays(), num.arrays()):
        flat, oflat = arr.ravel(), out.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            lp = loss()
            flat[j] = orig - eps
            lm = loss()
            flat[j] = orig
            oflat[j] = (lp - lm) / (2 * eps)
    return num


def rel_err(a, n):
    """|a-n| scaled by magnitude, floored so FD noise on zero grads passes."""
    return np.abs(a - n) / (np.abs(a) + np.abs(n) + 1e-4)


def random_problem(seed, steps=8, input_size=3, hidden=4):
    rng = np.random.default_rng(seed)
    params = EpLstmParams.init(input_size, hidden, rng)
    params.b += rng.uniform(-0.5, 0.5, size=params.b.shape)
    xs = [rng.standard_normal(input_size) for _ in range(steps)]
    c_eps = [rng.standard_normal(hidden) for _ in range(steps)]
    us = [rng.standard_normal(hidden) for _ in range(steps)]
    init = EpLstmState(rng.standard_normal(hidden) * 0.3, rng.standard_normal(hidden) * 0.3)
    return params, xs, c_eps, us, init


# ---------------------------------------------------------------------------
# forward behaviour

def test_all_zero_gives_half_gates_and_zero_state():
    params = EpLstmParams.zeros(3, 4)
    state, r, cache = forward_step(params, np.zeros(3), EpLstmState.zeros(4), np.zeros(4))
    for gate in (cache.i, cache.f, r, cache.o):
        assert np.all(gate == 0.5)
    assert np.array_equal(state.c, np.zeros(4))
    assert np.array_equal(state.h, np.zeros(4))


def test_saturated_r_gate_passes_retrieved_state_through():
    params = EpLstmParams.zeros(3, 6)
    params.bias("r")[:] = 10.0
    v = np.array([0.9, -0.4, 0.1, -1.0, 0.6, 0.0])
    state, r, _ = forward_step(params, np.zeros(3), EpLstmState.zeros(6), v)
    assert np.all(np.abs(state.c - v) < 1e-4)
    assert np.all(r > 0.9999)


def test_zero_cep_matches_plain_lstm_bit_for_bit():
    rng = np.random.default_rng(7)
    params = EpLstmParams.init(5, 50, rng)
    params.b[:] = rng.uniform(-1, 1, size=params.b.shape)
    xs = [rng.standard_normal(5) for _ in range(20)]
    ref = PlainLstm(params).run(xs, np.zeros(50), np.zeros(50))
    state = EpLstmState.zeros(50)
    zero = np.zeros(50)
    for x, (h_ref, c_ref) in zip(xs, ref):
        state, _, _ = forward_step(params, x, state, zero)
        assert np.array_equal(state.h, h_ref)
        assert np.array_equal(state.c, c_ref)


def test_rejects_nonfinite_input():
    params = EpLstmParams.zeros(3, 4)
    bad = np.array([1.0, np.nan, 0.0])
    with pytest.raises(FloatingPointError):
        forward_step(params, bad, EpLstmState.zeros(4), np.zeros(4))


def test_rejects_dimension_mismatch():
    params = EpLstmParams.zeros(3, 4)
    with pytest.raises(ValueError):
        forward_step(params, np.zeros(2), EpLstmState.zeros(4), np.zeros(4))


def test_batched_rows_match_single_calls():
    rng = np.random.default_rng(3)
    params = EpLstmParams.init(4, 6, rng)
    xb = rng.standard_normal((5, 4))
    hb = rng.standard_normal((5, 6))
    cb = rng.standard_normal((5, 6))
    eb = rng.standard_normal((5, 6))
    out, rb, _ = forward_step(params, xb, EpLstmState(hb, cb), eb)
    for j in range(5):
        sj, rj, _ = forward_step(params, xb[j], EpLstmState(hb[j], cb[j]), eb[j])
        np.testing.assert_allclose(out.h[j], sj.h, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(rb[j], rj, rtol=1e-12, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_gate_ranges_property(seed):
    rng = np.random.default_rng(seed)
    params = EpLstmParams.init(3, 5, rng)
    x = rng.standard_normal(3) * 3
    state = EpLstmState(rng.standard_normal(5), rng.standard_normal(5))
    new, r, cache = forward_step(params, x, state, rng.standard_normal(5))
    for gate in (cache.i, cache.f, cache.o):
        assert np.all((gate > 0) & (gate < 1))
    assert np.all((r > 0) & (r < 1))
    assert np.all((cache.g > -1) & (cache.g < 1))
    assert np.all(np.abs(new.h) < 1)


def test_determinism_same_seed_same_outputs():
    outs = []
    for _ in range(2):
        rng = np.random.default_rng(42)
        params = EpLstmParams.init(3, 8, rng)
        xs = [rng.standard_normal(3) for _ in range(6)]
        c_eps = [rng.standard_normal(8) for _ in range(6)]
        states, _, _ = unroll(params, xs, c_eps, EpLstmState.zeros(8))
        outs.append(np.stack([s.h for s in states]))
    assert np.array_equal(outs[0], outs[1])


# ---------------------------------------------------------------------------
# unroll plumbing

def test_unroll_empty_sequence():
    params = EpLstmParams.zeros(3, 4)
    init = EpLstmState(np.ones(4) * 0.3, np.ones(4) * -0.2)
    states, r_gates, caches = unroll(params, [], [], init)
    assert states == [] and r_gates == [] and caches == []


def test_unroll_length_one_equals_forward_step():
    rng = np.random.default_rng(11)
    params = EpLstmParams.init(3, 4, rng)
    x, e = rng.standard_normal(3), rng.standard_normal(4)
    init = EpLstmState.zeros(4)
    states, r_gates, _ = unroll(params, [x], [e], init)
    single, r, _ = forward_step(params, x, init, e)
    assert np.array_equal(states[0].h, single.h)
    assert np.array_equal(r_gates[0], r)


def test_unroll_rejects_mismatched_lengths():
    params = EpLstmParams.zeros(3, 4)
    with pytest.raises(ValueError):
        unroll(params, [np.zeros(3)], [], EpLstmState.zeros(4))


# ---------------------------------------------------------------------------
# gradients

def test_zero_upstream_gradients_give_zero_output_gradients():
    rng = np.random.default_rng(5)
    params = EpLstmParams.init(3, 4, rng)
    _, _, cache = forward_step(params, rng.standard_normal(3),
                               EpLstmState.zeros(4), rng.standard_normal(4))
    grads, gx, gprev, gcep = backward_step(params, cache, np.zeros(4), np.zeros(4))
    for _, arr in grads.arrays():
        assert np.all(arr == 0)
    assert np.all(gx == 0) and np.all(gprev.h == 0) and np.all(gcep == 0)


def test_backward_rejects_mismatched_cache():
    rng = np.random.default_rng(6)
    params = EpLstmParams.init(3, 4, rng)
    other = EpLstmParams.init(3, 5, rng)
    _, _, cache = forward_step(params, np.zeros(3), EpLstmState.zeros(4), np.zeros(4))
    with pytest.raises(ValueError):
        backward_step(other, cache, np.zeros(5), np.zeros(5))


def test_single_step_gradients_match_finite_differences():
    params, xs, c_eps, us, init = random_problem(seed=0, steps=1)
    states, _, caches = unroll(params, xs, c_eps, init)
    analytic, _ = eplstm.backward_through_time(params, caches, us)
    numeric = fd_gradients(params, xs, c_eps, init, us)
    for (_, a), (_, n) in zip(analytic.arrays(), numeric.arrays()):
        assert rel_err(a, n).max() < 1e-4


def test_bptt_gradients_match_finite_differences_through_time():
    params, xs, c_eps, us, init = random_problem(seed=1, steps=10)
    _, _, caches = unroll(params, xs, c_eps, init)
    analytic, _ = eplstm.backward_through_time(params, caches, us)
    numeric = fd_gradients(params, xs, c_eps, init, us)
    worst = {}
    for (name, a), (_, n) in zip(analytic.arrays(), numeric.arrays()):
        worst[name] = rel_err(a, n).max()
    assert max(worst.values()) < 1e-4, worst


def test_r_gate_recurrent_weights_gradient_through_time():
    params, xs, c_eps, us, init = random_problem(seed=2, steps=10)
    _, _, caches = unroll(params, xs, c_eps, init)
    analytic, _ = eplstm.backward_through_time(params, caches, us)
    a_block = analytic.w_h("r")
    # finite differences restricted to W_hr entries
    def loss():
        states, _, _ = unroll(params, xs, c_eps, init)
        return sum(float(np.dot(u, s.h)) for u, s in zip(us, states))
    w = params.w_h("r")
    num = np.zeros_like(w)
    eps = 1e-5
    for idx in np.ndindex(w.shape):
        orig = w[idx]
        w[idx] = orig + eps
        lp = loss()
        w[idx] = orig - eps
        lm = loss()
        w[idx] = orig
        num[idx] = (lp - lm) / (2 * eps)
    assert rel_err(a_block, num).max() < 1e-4


def test_input_and_cep_gradients_match_finite_differences():
    params, xs, c_eps, us, init = random_problem(seed=3, steps=4)
    _, _, caches = unroll(params, xs, c_eps, init)
    grads = params.zeros_like()
    gh, gc = us[-1].copy(), np.zeros_like(us[-1])
    gxs, gceps = [None] * 4, [None] * 4
    for t in range(3, -1, -1):
        grads, gx, gprev, gcep = backward_step(params, caches[t], gh, gc, grads)
        gxs[t], gceps[t] = gx, gcep
        gh = gprev.h + (us[t - 1] if t - 1 >= 0 else 0) * 0  # loss only on final h
        gh = gprev.h
        gc = gprev.c

    def loss():
        states, _, _ = unroll(params, xs, c_eps, init)
        return float(np.dot(us[-1], states[-1].h))

    eps = 1e-5
    for t in range(4):
        for vec, analytic in ((xs[t], gxs[t]), (c_eps[t], gceps[t])):
            num = np.zeros_like(vec)
            for j in range(vec.size):
                orig = vec[j]
                vec[j] = orig + eps
                lp = loss()
                vec[j] = orig - eps
                lm = loss()
                vec[j] = orig
                num[j] = (lp - lm) / (2 * eps)
            assert rel_err(analytic, num).max() < 1e-4

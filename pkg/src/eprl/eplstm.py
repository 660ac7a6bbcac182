"""Recurrent cell with a reinstatement pathway, plus exact backprop through time.

The cell is a standard LSTM (input/forget/output gates, tanh candidate)
extended with a fifth gate that mixes an externally retrieved cell vector
``c_ep`` into the cell update:

    c_t = i_t * g_t + f_t * c_{t-1} + r_t * c_ep
    h_t = o_t * tanh(c_t)

All math is float64 numpy. Inputs may be single vectors ``(dim,)`` or
batches ``(B, dim)``; outputs match. Gradients are hand-derived and
verified against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

# Gate order fixes the row-block layout of the stacked parameter arrays:
# input, forget, output, candidate, reinstatement. The four standard-LSTM
# blocks form a contiguous prefix so that zero-c_ep trajectories are
# bitwise comparable against a plain LSTM using the same call shapes.
GATES = ("i", "f", "o", "g", "r")


@dataclass
class EpLstmState:
    """Recurrent state: hidden vector h and cell vector c (same shape)."""

    h: np.ndarray
    c: np.ndarray

    @staticmethod
    def zeros(hidden_size: int, batch: int | None = None) -> "EpLstmState":
        shape = (hidden_size,) if batch is None else (batch, hidden_size)
        return EpLstmState(np.zeros(shape), np.zeros(shape))


class EpLstmParams:
    """All weights of the five-gate cell.

    Storage is three stacked arrays (wx: (5H, X), wh: (5H, H), b: (5H,));
    per-gate blocks are exposed as views through ``w_x``/``w_h``/``bias``
    so callers (and the gradient checker) can address single gates while
    the forward pass runs as two matmuls.
    """

    def __init__(self, input_size: int, hidden_size: int,
                 wx: np.ndarray, wh: np.ndarray, b: np.ndarray):
        n = len(GATES) * hidden_size
        if wx.shape != (n, input_size) or wh.shape != (n, hidden_size) or b.shape != (n,):
            raise ValueError("parameter arrays do not match declared sizes")
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.wx = wx
        self.wh = wh
        self.b = b

    @staticmethod
    def init(input_size: int, hidden_size: int, rng: np.random.Generator) -> "EpLstmParams":
        """Weights ~ uniform(+-1/sqrt(fan_in)), biases zero."""
        n = len(GATES) * hidden_size
        sx = 1.0 / np.sqrt(input_size)
        sh = 1.0 / np.sqrt(hidden_size)
        return EpLstmParams(
            input_size, hidden_size,
            rng.uniform(-sx, sx, size=(n, input_size)),
            rng.uniform(-sh, sh, size=(n, hidden_size)),
            np.zeros(n),
        )

    @staticmethod
    def zeros(input_size: int, hidden_size: int) -> "EpLstmParams":
        n = len(GATES) * hidden_size
        return EpLstmParams(input_size, hidden_size,
                            np.zeros((n, input_size)), np.zeros((n, hidden_size)), np.zeros(n))

    def zeros_like(self) -> "EpLstmParams":
        return EpLstmParams.zeros(self.input_size, self.hidden_size)

    def _rows(self, gate: str) -> slice:
        k = GATES.index(gate)
        return slice(k * self.hidden_size, (k + 1) * self.hidden_size)

    def w_x(self, gate: str) -> np.ndarray:
        """(hidden, input) weight block of one gate; a view into storage."""
        return self.wx[self._rows(gate)]

    def w_h(self, gate: str) -> np.ndarray:
        """(hidden, hidden) recurrent block of one gate; a view into storage."""
        return self.wh[self._rows(gate)]

    def bias(self, gate: str) -> np.ndarray:
        """(hidden,) bias of one gate; a view into storage."""
        return self.b[self._rows(gate)]

    def blocks(self):
        """Yield (name, array view) for every per-gate parameter block."""
        for gate in GATES:
            yield f"w_x_{gate}", self.w_x(gate)
            yield f"w_h_{gate}", self.w_h(gate)
            yield f"b_{gate}", self.bias(gate)

    def arrays(self):
        """The three stacked storage arrays, for optimizers and checkpoints."""
        return [("wx", self.wx), ("wh", self.wh), ("b", self.b)]

    def copy(self) -> "EpLstmParams":
        return EpLstmParams(self.input_size, self.hidden_size,
                            self.wx.copy(), self.wh.copy(), self.b.copy())


@dataclass
class StepCache:
    """Everything backward_step needs; arrays are the batched 2-D views."""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    c_ep: np.ndarray
    i: np.ndarray
    f: np.ndarray
    r: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    squeezed: bool


def _as_batch(a: np.ndarray, dim: int, name: str) -> tuple[np.ndarray, bool]:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
        squeezed = True
    elif a.ndim == 2:
        squeezed = False
    else:
        raise ValueError(f"{name} must be 1-D or 2-D, got shape {a.shape}")
    if a.shape[1] != dim:
        raise ValueError(f"{name} has dimension {a.shape[1]}, expected {dim}")
    return a, squeezed


def forward_step(params: EpLstmParams, x: np.ndarray, prev: EpLstmState,
                 c_ep: np.ndarray) -> tuple[EpLstmState, np.ndarray, StepCache]:
    """One cell step. Returns (new state, r-gate activation, cache).

    Rejects non-finite inputs so a poisoned state cannot propagate silently.
    """
    H = params.hidden_size
    x2, sq = _as_batch(x, params.input_size, "x")
    h2, _ = _as_batch(prev.h, H, "prev.h")
    c2, _ = _as_batch(prev.c, H, "prev.c")
    e2, _ = _as_batch(c_ep, H, "c_ep")
    if not (np.isfinite(x2).all() and np.isfinite(h2).all()
            and np.isfinite(c2).all() and np.isfinite(e2).all()):
        raise FloatingPointError("non-finite input to forward_step")

    z = x2 @ params.wx.T + h2 @ params.wh.T + params.b
    i = sigmoid(z[:, 0 * H:1 * H])
    f = sigmoid(z[:, 1 * H:2 * H])
    o = sigmoid(z[:, 2 * H:3 * H])
    g = np.tanh(z[:, 3 * H:4 * H])
    r = sigmoid(z[:, 4 * H:5 * H])
    c = i * g + f * c2 + r * e2
    tc = np.tanh(c)
    h = o * tc

    cache = StepCache(x2, h2, c2, e2, i, f, r, o, g, c, tc, sq)
    if sq:
        return EpLstmState(h[0], c[0]), r[0], cache
    return EpLstmState(h, c), r, cache


def backward_step(params: EpLstmParams, cache: StepCache,
                  grad_h: np.ndarray, grad_c: np.ndarray,
                  grads: EpLstmParams | None = None):
    """Backprop one step.

    grad_h/grad_c are dLoss/dh_t and dLoss/dc_t flowing in from later steps
    and from the current step's readout. Parameter gradients are accumulated
    into ``grads`` (allocated if None). Returns
    (grads, grad_x, grad_prev_state, grad_c_ep); gradients with respect to
    the retrieved c_ep are returned for completeness but training callers
    discard them (retrieved memories are constants).
    """
    H = params.hidden_size
    if cache.x.shape[1] != params.input_size or cache.i.shape[1] != H:
        raise ValueError("cache does not match parameter sizes")
    gh, _ = _as_batch(grad_h, H, "grad_h")
    gc_in, _ = _as_batch(grad_c, H, "grad_c")
    if grads is None:
        grads = params.zeros_like()

    i, f, r, o, g = cache.i, cache.f, cache.r, cache.o, cache.g
    dc = gc_in + gh * o * (1.0 - cache.tanh_c ** 2)
    dz_o = gh * cache.tanh_c * o * (1.0 - o)
    dz_i = dc * g * i * (1.0 - i)
    dz_f = dc * cache.c_prev * f * (1.0 - f)
    dz_r = dc * cache.c_ep * r * (1.0 - r)
    dz_g = dc * i * (1.0 - g ** 2)
    dz = np.concatenate([dz_i, dz_f, dz_o, dz_g, dz_r], axis=1)

    grads.wx += dz.T @ cache.x
    grads.wh += dz.T @ cache.h_prev
    grads.b += dz.sum(axis=0)

    grad_x = dz @ params.wx
    grad_h_prev = dz @ params.wh
    grad_c_prev = dc * f
    grad_c_ep = dc * r

    if cache.squeezed:
        return grads, grad_x[0], EpLstmState(grad_h_prev[0], grad_c_prev[0]), grad_c_ep[0]
    return grads, grad_x, EpLstmState(grad_h_prev, grad_c_prev), grad_c_ep


def unroll(params: EpLstmParams, inputs, c_eps, init_state: EpLstmState):
    """Fold forward_step over aligned input / retrieved-state sequences.

    Returns (states, r_gates, caches), one entry per step; empty inputs give
    empty logs and leave the state untouched.
    """
    if len(inputs) != len(c_eps):
        raise ValueError(f"{len(inputs)} inputs vs {len(c_eps)} retrieved states")
    states, r_gates, caches = [], [], []
    state = init_state
    for x, c_ep in zip(inputs, c_eps):
        state, r, cache = forward_step(params, x, state, c_ep)
        states.append(state)
        r_gates.append(r)
        caches.append(cache)
    return states, r_gates, caches


def backward_through_time(params: EpLstmParams, caches, grad_h_list,
                          grad_c_list=None) -> tuple[EpLstmParams, list]:
    """Reverse-order backward over a forward unroll.

    grad_h_list[t] is the loss gradient injected at h_t (e.g. from readout
    heads); grad_c_list optionally injects at c_t. Returns accumulated
    parameter grads and the per-step grad_x list (forward order).
    """
    grads = params.zeros_like()
    gh_next: np.ndarray | None = None
    gc_next: np.ndarray | None = None
    grad_xs: list = [None] * len(caches)
    for t in range(len(caches) - 1, -1, -1):
        gh = np.asarray(grad_h_list[t], dtype=np.float64)
        gc = (np.asarray(grad_c_list[t], dtype=np.float64)
              if grad_c_list is not None else np.zeros_like(gh))
        if gh_next is not None:
            gh = gh + gh_next
            gc = gc + gc_next
        grads, gx, gprev, _ = backward_step(params, caches[t], gh, gc, grads)
        grad_xs[t] = gx
        gh_next, gc_next = gprev.h, gprev.c
    return grads, grad_xs

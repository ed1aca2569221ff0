"""Minimal differentiable numeric core: embedding, 1D convolution, LSTM,
BiLSTM, dense, masked softmax cross-entropy, and RMSProp.

All layers work on a single (len, dim) sequence in float64; every backward
pass is verifiable against central finite differences (see grad_check).
"""

from __future__ import annotations

import numpy as np

from .errors import AllMasked, IdOutOfRange, ShapeMismatch


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def softmax(logits):
    """Row-wise softmax with max-subtraction for stability."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Embedding


def embedding_forward(ids, table):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IdOutOfRange(
            f"ids outside [0, {table.shape[0]}): "
            f"min {ids.min()}, max {ids.max()}"
        )
    return table[ids]


def embedding_backward(ids, grad_out, vocab_size):
    """Gradient of a table row is the sum of output grads at positions
    holding that id."""
    ids = np.asarray(ids, dtype=np.int64)
    dtable = np.zeros((vocab_size, grad_out.shape[-1]), dtype=grad_out.dtype)
    np.add.at(dtable, ids, grad_out)
    return dtable


# ---------------------------------------------------------------------------
# Conv1D (same padding, ReLU)


def conv1d_forward(x, kernel, bias):
    """x: (len, d_in); kernel: (k, d_in, d_out); bias: (d_out,).
    Same-padded 1D convolution followed by ReLU."""
    if x.ndim != 2 or kernel.ndim != 3 or bias.ndim != 1:
        raise ShapeMismatch("conv1d expects x(len,d_in), kernel(k,d_in,d_out), bias(d_out)")
    k, d_in, d_out = kernel.shape
    if k % 2 == 0:
        raise ShapeMismatch("kernel size must be odd for same padding")
    if x.shape[1] != d_in or bias.shape[0] != d_out:
        raise ShapeMismatch(
            f"conv1d shapes disagree: x {x.shape}, kernel {kernel.shape}, "
            f"bias {bias.shape}"
        )
    length = x.shape[0]
    pad = (k - 1) // 2
    xp = np.zeros((length + 2 * pad, d_in), dtype=x.dtype)
    xp[pad:pad + length] = x
    x_col = np.hstack([xp[i:i + length] for i in range(k)])  # (len, k*d_in)
    w_col = kernel.reshape(k * d_in, d_out)
    z = x_col @ w_col + bias
    y = np.maximum(z, 0.0)
    cache = (x_col, w_col, z, kernel.shape, length, pad)
    return y, cache


def conv1d_backward(cache, dy):
    """Returns (dx, dkernel, dbias)."""
    x_col, w_col, z, kshape, length, pad = cache
    k, d_in, d_out = kshape
    dz = dy * (z > 0)
    db = dz.sum(axis=0)
    dkernel = (x_col.T @ dz).reshape(k, d_in, d_out)
    dx_col = dz @ w_col.T                       # (len, k*d_in)
    dxp = np.zeros((length + 2 * pad, d_in), dtype=dz.dtype)
    for i in range(k):
        dxp[i:i + length] += dx_col[:, i * d_in:(i + 1) * d_in]
    dx = dxp[pad:pad + length]
    return dx, dkernel, db


# ---------------------------------------------------------------------------
# LSTM / BiLSTM


def init_lstm_params(rng, d, h):
    """Uniform(-1/sqrt(h), 1/sqrt(h)) weights; forget-gate bias 1, others 0.
    Gate order along the 4h axis: input, forget, candidate, output."""
    scale = 1.0 / np.sqrt(h)
    W = rng.uniform(-scale, scale, size=(d, 4 * h))
    U = rng.uniform(-scale, scale, size=(h, 4 * h))
    b = np.zeros(4 * h)
    b[h:2 * h] = 1.0
    return W, U, b


def lstm_forward(x, W, U, b):
    """Standard LSTM over x (len, d) with zero initial state.
    Returns h_seq (len, h) and a cache for backward-through-time."""
    if x.ndim != 2 or W.ndim != 2 or U.ndim != 2 or b.ndim != 1:
        raise ShapeMismatch("lstm expects x(len,d), W(d,4h), U(h,4h), b(4h)")
    d4 = W.shape[1]
    if d4 % 4 or U.shape != (d4 // 4, d4) or b.shape != (d4,) or W.shape[0] != x.shape[1]:
        raise ShapeMismatch(
            f"lstm shapes disagree: x {x.shape}, W {W.shape}, U {U.shape}, "
            f"b {b.shape}"
        )
    h = d4 // 4
    length = x.shape[0]
    i_s = np.empty((length, h)); f_s = np.empty((length, h))
    g_s = np.empty((length, h)); o_s = np.empty((length, h))
    c_s = np.empty((length, h)); hc_s = np.empty((length, h))
    h_seq = np.empty((length, h))
    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    h_prevs = np.empty((length, h))
    c_prevs = np.empty((length, h))
    for t in range(length):
        h_prevs[t] = h_prev
        c_prevs[t] = c_prev
        a = x[t] @ W + h_prev @ U + b
        i = sigmoid(a[:h]); f = sigmoid(a[h:2 * h])
        g = np.tanh(a[2 * h:3 * h]); o = sigmoid(a[3 * h:])
        c = f * c_prev + i * g
        hc = np.tanh(c)
        h_prev = o * hc
        c_prev = c
        i_s[t], f_s[t], g_s[t], o_s[t], c_s[t], hc_s[t] = i, f, g, o, c, hc
        h_seq[t] = h_prev
    cache = (x, W, U, i_s, f_s, g_s, o_s, c_s, hc_s, h_prevs, c_prevs)
    return h_seq, cache


def lstm_backward(cache, dh_seq):
    """Backward-through-time; returns (dx, dW, dU, db)."""
    x, W, U, i_s, f_s, g_s, o_s, c_s, hc_s, h_prevs, c_prevs = cache
    length, h = dh_seq.shape
    dW = np.zeros_like(W); dU = np.zeros_like(U); db = np.zeros(4 * h)
    dx = np.zeros_like(x)
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    for t in range(length - 1, -1, -1):
        dh = dh_seq[t] + dh_next
        i, f, g, o = i_s[t], f_s[t], g_s[t], o_s[t]
        hc = hc_s[t]
        do = dh * hc
        dc = dh * o * (1.0 - hc * hc) + dc_next
        di = dc * g
        df = dc * c_prevs[t]
        dg = dc * i
        dc_next = dc * f
        da = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ])
        dW += np.outer(x[t], da)
        dU += np.outer(h_prevs[t], da)
        db += da
        dx[t] = da @ W.T
        dh_next = da @ U.T
    return dx, dW, dU, db


def bilstm_forward(x, params_fw, params_bw):
    """Forward LSTM on x, backward LSTM on reversed x (output re-reversed),
    concatenated along the feature axis. params_*: (W, U, b) triples."""
    h_fw, cache_fw = lstm_forward(x, *params_fw)
    h_bw_rev, cache_bw = lstm_forward(x[::-1], *params_bw)
    out = np.concatenate([h_fw, h_bw_rev[::-1]], axis=1)
    return out, (cache_fw, cache_bw)


def bilstm_backward(cache, dout):
    cache_fw, cache_bw = cache
    h = dout.shape[1] // 2
    dx_fw, dW_fw, dU_fw, db_fw = lstm_backward(cache_fw, dout[:, :h])
    dx_bw_rev, dW_bw, dU_bw, db_bw = lstm_backward(cache_bw, dout[::-1, h:])
    dx = dx_fw + dx_bw_rev[::-1]
    return dx, (dW_fw, dU_fw, db_fw), (dW_bw, dU_bw, db_bw)


# ---------------------------------------------------------------------------
# Dense


def dense_forward(x, W, b):
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeMismatch(
            f"dense shapes disagree: x {x.shape}, W {W.shape}, b {b.shape}"
        )
    return x @ W + b, (x, W)


def dense_backward(cache, dy):
    x, W = cache
    dW = x.T @ dy
    db = dy.sum(axis=0)
    dx = dy @ W.T
    return dx, dW, db


# ---------------------------------------------------------------------------
# Masked softmax cross-entropy


def masked_softmax_ce(logits, targets, mask, denom=None):
    """Mean masked cross-entropy and its gradient w.r.t. logits.

    loss = sum_t mask_t * -log softmax(logits_t)[targets_t] / denom, where
    denom defaults to the mask sum. Gradient is zero at masked positions.
    """
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.float64)
    n, m = logits.shape
    if targets.shape != (n,) or mask.shape != (n,):
        raise ShapeMismatch(
            f"lengths disagree: logits {logits.shape}, targets "
            f"{targets.shape}, mask {mask.shape}"
        )
    if targets.size and (targets.min() < 0 or targets.max() >= m):
        raise IdOutOfRange(f"targets outside [0, {m})")
    msum = mask.sum()
    if denom is None:
        if msum == 0:
            raise AllMasked("all positions masked")
        denom = msum
    zmax = logits.max(axis=1, keepdims=True)
    z = logits - zmax
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    nll = -logp[np.arange(n), targets]
    loss = float((nll * mask).sum() / denom)
    grad = np.exp(logp)
    grad[np.arange(n), targets] -= 1.0
    grad *= (mask / denom)[:, None]
    return loss, grad


# ---------------------------------------------------------------------------
# RMSProp


class RmspropState:
    """Per-parameter running mean-square accumulators."""

    def __init__(self, params, learning_rate=1e-3, rho=0.9, epsilon=1e-8):
        self.learning_rate = learning_rate
        self.rho = rho
        self.epsilon = epsilon
        self.s = {name: np.zeros_like(p) for name, p in params.items()}


def rmsprop_step(params, grads, state: RmspropState):
    """s <- rho*s + (1-rho)*g^2; p <- p - lr*g/(sqrt(s)+eps), elementwise."""
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"grad/param shape mismatch for {name!r}")
        s = state.s[name]
        s *= state.rho
        s += (1.0 - state.rho) * g * g
        p -= state.learning_rate * g / (np.sqrt(s) + state.epsilon)


# ---------------------------------------------------------------------------
# Gradient checking


def grad_check(loss_fn, arrays, analytic, eps=1e-5):
    """Max relative error between analytic grads and central differences.

    loss_fn() recomputes the scalar loss from the (temporarily mutated)
    arrays; relative error = |a - n| / max(1e-8, |a| + |n|).
    """
    worst = 0.0
    for name, arr in arrays.items():
        an = analytic[name]
        if an.shape != arr.shape:
            raise ShapeMismatch(f"analytic grad shape mismatch for {name!r}")
        flat = arr.reshape(-1)
        aflat = an.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = loss_fn()
            flat[j] = orig - eps
            fm = loss_fn()
            flat[j] = orig
            numeric = (fp - fm) / (2.0 * eps)
            a = aflat[j]
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst

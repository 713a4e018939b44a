"""Differentiable operations on :class:`~ctxaug.numcore.tensor.Tensor`."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import kernels
from .tensor import DimensionError, Tensor, as_tensor


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _operand(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def add(a, b):
    a = as_tensor(a)
    b = _operand(b, a)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(out, (a, b), backward)


def sub(a, b):
    if not isinstance(a, Tensor):
        a = _operand(a, b)
    b = _operand(b, a)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return Tensor._from_op(out, (a, b), backward)


def mul(a, b):
    a = as_tensor(a)
    b = _operand(b, a)
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(out, (a, b), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(out, (a, b), backward)


def affine(x, W, b):
    """``x @ W + b`` for ``x[n, d_in]``, ``W[d_in, d_out]``, ``b[d_out]``."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.ndim != 2 or W.ndim != 2 or b.ndim != 1:
        raise DimensionError(f"affine: bad ranks x{x.shape} W{W.shape} b{b.shape}")
    if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise DimensionError(f"affine: shapes x{x.shape} W{W.shape} b{b.shape} do not conform")
    out = x.data @ W.data + b.data

    def backward(g):
        return g @ W.data.T, x.data.T @ g, g.sum(axis=0)

    return Tensor._from_op(out, (x, W, b), backward)


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(x):
    x = as_tensor(x)
    out = _sigmoid(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)
    res = Tensor._from_op(out, (x,), lambda g: (g * mask,))
    if res.requires_grad:
        res._kink = lambda: float(np.abs(x.data).min(initial=np.inf))
    return res


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def activation(x, kind):
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def softmax_array(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax_array(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax(x):
    """Row-wise softmax over the last axis."""
    x = as_tensor(x)
    out = softmax_array(x.data)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward)


def log_softmax(x):
    x = as_tensor(x)
    out = log_softmax_array(x.data)

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return Tensor._from_op(out, (x,), backward)


def cross_entropy(logits, targets):
    """Mean negative log-likelihood of integer ``targets`` under ``softmax(logits)``."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    n, k = logits.shape
    if n == 0:
        raise ValueError("cross_entropy of an empty batch")
    if targets.min() < 0 or targets.max() >= k:
        raise ValueError(f"cross_entropy: target ids must lie in [0, {k})")
    logp = log_softmax_array(logits.data)
    rows = np.arange(n)
    loss = -logp[rows, targets].mean()

    def backward(g):
        d = np.exp(logp)
        d[rows, targets] -= 1.0
        return (d * (g / n),)

    return Tensor._from_op(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def getitem(x, index):
    x = as_tensor(x)
    out = x.data[index]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._from_op(out, (x,), backward)


def take_rows(x, idx):
    """Gather rows ``x[idx]`` along axis 0 (embedding lookup)."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    out = x.data[idx]

    def backward(g):
        full = np.zeros_like(x.data)
        flat = idx.reshape(-1)
        kernels.scatter_add_rows(full, flat, g.reshape(len(flat), -1))
        return (full,)

    return Tensor._from_op(out, (x,), backward)


def embedding(table, ids):
    return take_rows(table, ids)


def reshape(x, shape):
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    x = as_tensor(x)
    out = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return Tensor._from_op(out, (x,), lambda g: (np.transpose(g, inv),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(out, tuple(tensors), backward)


def total(x):
    x = as_tensor(x)
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return Tensor._from_op(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean(x):
    x = as_tensor(x)
    size = x.data.size
    out = np.asarray(x.data.mean(), dtype=x.dtype)
    return Tensor._from_op(out, (x,), lambda g: (np.full(x.shape, g / size, dtype=x.dtype),))


def dropout(x, rate, rng, train_mode=True):
    """Inverted dropout: kept units are scaled by ``1/(1-rate)`` at train time."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not train_mode or rate == 0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep.astype(x.dtype)))


class LSTMParams(NamedTuple):
    """Input weights ``W_x[d,4h]``, recurrent weights ``W_h[h,4h]`` and bias ``b[4h]``.

    Gate blocks are laid out as (input, forget, output, candidate).
    """

    W_x: Tensor
    W_h: Tensor
    b: Tensor

    @property
    def hidden_size(self):
        return self.W_h.shape[0]


def lstm_step(x_t, state, params):
    """One LSTM cell update built from primitive ops; returns ``(h', c')``.

    ``x_t`` may be ``[d]`` or a batch ``[n, d]``.
    """
    h, c = state
    x_t, h, c = as_tensor(x_t), as_tensor(h), as_tensor(c)
    squeeze = x_t.ndim == 1
    if squeeze:
        x_t, h, c = reshape(x_t, (1, -1)), reshape(h, (1, -1)), reshape(c, (1, -1))
    size = params.hidden_size
    if x_t.shape[1] != params.W_x.shape[0] or h.shape[1] != size or c.shape[1] != size:
        raise DimensionError(
            f"lstm_step: x{x_t.shape} h{h.shape} c{c.shape} vs W_x{params.W_x.shape} W_h{params.W_h.shape}"
        )
    z = affine(x_t, params.W_x, params.b) + matmul(h, params.W_h)
    i = sigmoid(z[:, :size])
    f = sigmoid(z[:, size : 2 * size])
    o = sigmoid(z[:, 2 * size : 3 * size])
    g = tanh(z[:, 3 * size :])
    c_new = f * c + i * g
    h_new = o * tanh(c_new)
    if squeeze:
        return reshape(h_new, (size,)), reshape(c_new, (size,))
    return h_new, c_new


def lstm_sequence(xs, params, h0=None, c0=None):
    """Run an LSTM over time-major inputs ``xs[T, n, d]``; returns hidden states ``[T, n, h]``.

    The recurrence runs in a single fused kernel (forward and BPTT).
    """
    xs = as_tensor(xs)
    if xs.ndim != 3 or xs.shape[2] != params.W_x.shape[0]:
        raise DimensionError(f"lstm_sequence: inputs {xs.shape} vs W_x {params.W_x.shape}")
    steps, n, d = xs.shape
    size = params.hidden_size
    proj = affine(reshape(xs, (steps * n, d)), params.W_x, params.b)
    proj = reshape(proj, (steps, n, 4 * size))
    dtype = xs.dtype
    h0 = Tensor(np.zeros((n, size), dtype=dtype)) if h0 is None else as_tensor(h0)
    c0 = Tensor(np.zeros((n, size), dtype=dtype)) if c0 is None else as_tensor(c0)
    return _lstm_recurrence(proj, params.W_h, h0, c0)


def _lstm_recurrence(proj, w_h, h0, c0):
    H, C, G = kernels.lstm_forward(proj.data, w_h.data, h0.data, c0.data)

    def backward(g):
        dx, dw, dh0, dc0 = kernels.lstm_backward(g, H, C, G, w_h.data, h0.data, c0.data)
        return dx, dw, dh0, dc0

    return Tensor._from_op(H, (proj, w_h, h0, c0), backward)


def unfold_time(x, width):
    """Sliding windows over time: ``x[n, T, d] -> [n, T-width+1, width*d]``."""
    x = as_tensor(x)
    n, steps, d = x.shape
    if steps < width:
        raise DimensionError(f"unfold_time: sequence length {steps} shorter than width {width}")
    out_steps = steps - width + 1
    win = np.lib.stride_tricks.sliding_window_view(x.data, width, axis=1)
    # win: [n, out_steps, d, width] -> [n, out_steps, width, d]
    out = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(n, out_steps, width * d)

    def backward(g):
        g = g.reshape(n, out_steps, width, d)
        full = np.zeros_like(x.data)
        for k in range(width):
            full[:, k : k + out_steps] += g[:, :, k]
        return (full,)

    return Tensor._from_op(out, (x,), backward)


def conv1d(x, W, b, width):
    """Valid 1-D convolution over time.

    ``x[n, T, d]``, ``W[width*d, f]``, ``b[f]`` -> ``[n, T-width+1, f]``.
    """
    windows = unfold_time(x, width)
    n, steps, wd = windows.shape
    out = affine(reshape(windows, (n * steps, wd)), W, b)
    return reshape(out, (n, steps, W.shape[1]))


def masked_max_time(x, mask):
    """Max over axis 1 of ``x[n, T, f]`` considering only positions where ``mask[n, T]``.

    Each row needs at least one unmasked position; ties go to the earliest step.
    """
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape[:2]:
        raise DimensionError(f"masked_max_time: mask {mask.shape} vs input {x.shape}")
    if not mask.any(axis=1).all():
        raise ValueError("masked_max_time: a row has no valid positions")
    masked = np.where(mask[:, :, None], x.data, -np.inf)
    arg = masked.argmax(axis=1)
    n, _, f = x.shape
    rows = np.arange(n)[:, None]
    cols = np.arange(f)[None, :]
    out = x.data[rows, arg, cols]

    def backward(g):
        full = np.zeros_like(x.data)
        full[rows, arg, cols] = g
        return (full,)

    def gap():
        # winner/runner-up distance; exact ties come from clipped inputs
        # (e.g. ReLU zeros) and are flat, so they are skipped
        if masked.shape[1] < 2:
            return np.inf
        top2 = -np.partition(-masked, 1, axis=1)[:, :2]
        gaps = top2[:, 0] - top2[:, 1]
        return float(gaps[np.isfinite(gaps) & (gaps > 0)].min(initial=np.inf))

    res = Tensor._from_op(out, (x,), backward)
    if res.requires_grad:
        res._kink = gap
    return res

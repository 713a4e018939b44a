"""Pure-numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors every function
here with the same signature and semantics.
"""
import numpy as np


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_forward(xproj, w_h, h0, c0):
    """Run an LSTM recurrence over time-major pre-projected inputs.

    ``xproj`` is ``[T, n, 4h]`` holding ``x_t @ W_x + b`` with gate blocks in
    (input, forget, output, candidate) order. Returns hidden states ``H``,
    cell states ``C`` (both ``[T, n, h]``) and activated gates ``G``.
    """
    steps, n, four_h = xproj.shape
    h = four_h // 4
    dtype = xproj.dtype
    H = np.empty((steps, n, h), dtype=dtype)
    C = np.empty((steps, n, h), dtype=dtype)
    G = np.empty((steps, n, four_h), dtype=dtype)
    h_prev, c_prev = h0, c0
    for t in range(steps):
        z = xproj[t] + h_prev @ w_h
        gates = G[t]
        gates[:, : 3 * h] = _sigmoid(z[:, : 3 * h])
        gates[:, 3 * h :] = np.tanh(z[:, 3 * h :])
        i, f, o, g = gates[:, :h], gates[:, h : 2 * h], gates[:, 2 * h : 3 * h], gates[:, 3 * h :]
        C[t] = f * c_prev + i * g
        H[t] = o * np.tanh(C[t])
        h_prev, c_prev = H[t], C[t]
    return H, C, G


def lstm_backward(dH, H, C, G, w_h, h0, c0):
    """Backpropagate through :func:`lstm_forward`.

    Returns ``(d_xproj, d_w_h, d_h0, d_c0)``.
    """
    steps, n, h = H.shape
    dtype = H.dtype
    dx = np.empty((steps, n, 4 * h), dtype=dtype)
    dw = np.zeros_like(w_h)
    dh_next = np.zeros((n, h), dtype=dtype)
    dc_next = np.zeros((n, h), dtype=dtype)
    for t in range(steps - 1, -1, -1):
        gates = G[t]
        i, f, o, g = gates[:, :h], gates[:, h : 2 * h], gates[:, 2 * h : 3 * h], gates[:, 3 * h :]
        c_prev = C[t - 1] if t > 0 else c0
        h_prev = H[t - 1] if t > 0 else h0
        dh = dH[t] + dh_next
        tc = np.tanh(C[t])
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dx[t]
        dz[:, :h] = dc * g * i * (1.0 - i)
        dz[:, h : 2 * h] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * h : 3 * h] = dh * tc * o * (1.0 - o)
        dz[:, 3 * h :] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dw += h_prev.T @ dz
        dh_next = dz @ w_h.T
    return dx, dw, dh_next, dc_next


def scatter_add_rows(out, idx, src):
    """``out[idx[k]] += src[k]`` for every k, accumulating duplicates in order."""
    np.add.at(out, idx, src)


def sample_rows(probs, u):
    """Inverse-CDF sample one index per row of ``probs`` given uniforms ``u``.

    Rows need not be exactly normalized; the target is scaled by the row
    total. Zero-probability entries are never returned.
    """
    cdf = np.cumsum(np.asarray(probs, dtype=np.float64), axis=1)
    target = np.asarray(u, dtype=np.float64) * cdf[:, -1]
    idx = np.minimum((cdf <= target[:, None]).sum(axis=1), probs.shape[1] - 1)
    rows = np.arange(len(idx))
    bad = np.asarray(probs)[rows, idx] <= 0
    if bad.any():
        # rounding pushed the target past the last positive entry
        positive = np.asarray(probs)[bad] > 0
        idx[bad] = probs.shape[1] - 1 - np.argmax(positive[:, ::-1], axis=1)
    return idx.astype(np.int64)

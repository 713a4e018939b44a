# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``.

Matrix products go through scipy's BLAS bindings; the gate nonlinearities
and cell update are fused into a single pass per time step.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport exp
from scipy.linalg.cython_blas cimport sgemm, dgemm

cnp.import_array()


cdef inline void _gemm(char transa, char transb, int m, int n, int k,
                       floating alpha, floating *a, int lda, floating *b, int ldb,
                       floating beta, floating *c, int ldc) noexcept nogil:
    # column-major BLAS call
    if floating is float:
        sgemm(&transa, &transb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        dgemm(&transa, &transb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


cdef extern from *:
    """
    #include <stdint.h>
    #include <string.h>
    #if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
    #define CTXAUG_CLONES __attribute__((target_clones("avx512f", "avx2", "default")))
    #else
    #define CTXAUG_CLONES
    #endif

    /* Branch-free expf (Cephes polynomial, ~1 ulp) so gate loops vectorize. */
    static inline float ctxaug_expf(float x) {
        x = x < -87.0f ? -87.0f : x;
        x = x > 88.0f ? 88.0f : x;
        float fx = x * 1.44269504088896341f + 0.5f;
        float n = (float)(int32_t)fx;
        n = n > fx ? n - 1.0f : n;
        float r = x - n * 0.693359375f + n * 2.12194440e-4f;
        float p = 1.9875691500e-4f;
        p = p * r + 1.3981999507e-3f;
        p = p * r + 8.3334519073e-3f;
        p = p * r + 4.1665795894e-2f;
        p = p * r + 1.6666665459e-1f;
        p = p * r + 5.0000001201e-1f;
        p = p * r * r + r + 1.0f;
        int32_t bits = ((int32_t)n + 127) << 23;
        float scale;
        memcpy(&scale, &bits, sizeof scale);
        return p * scale;
    }

    /* row[0:4h] holds (i, f, o, g) pre-activations; writes activations in
       place and the new cell and hidden state. */
    CTXAUG_CLONES
    static void ctxaug_lstm_cell_f(float *restrict row, const float *restrict c_prev,
                                   float *restrict c_out, float *restrict h_out, int h) {
        for (int j = 0; j < 3 * h; j++)
            row[j] = 1.0f / (1.0f + ctxaug_expf(-row[j]));
        for (int j = 3 * h; j < 4 * h; j++)
            row[j] = 2.0f / (1.0f + ctxaug_expf(-2.0f * row[j])) - 1.0f;
        for (int j = 0; j < h; j++)
            c_out[j] = row[h + j] * c_prev[j] + row[j] * row[3 * h + j];
        for (int j = 0; j < h; j++)
            h_out[j] = row[2 * h + j] * (2.0f / (1.0f + ctxaug_expf(-2.0f * c_out[j])) - 1.0f);
    }

    /* Backward through one cell for one batch row. dc_next is updated in
       place to the gradient flowing into the previous cell state. */
    CTXAUG_CLONES
    static void ctxaug_lstm_cell_back_f(const float *restrict gates, const float *restrict c,
                                        const float *restrict c_prev, const float *restrict dh_out,
                                        const float *restrict dh_next, float *restrict dc_next,
                                        float *restrict dz, int h) {
        for (int j = 0; j < h; j++) {
            float gi = gates[j], gf = gates[h + j], go = gates[2 * h + j], gg = gates[3 * h + j];
            float dh = dh_out[j] + dh_next[j];
            float tc = 2.0f / (1.0f + ctxaug_expf(-2.0f * c[j])) - 1.0f;
            float dc = dc_next[j] + dh * go * (1.0f - tc * tc);
            dz[j] = dc * gg * gi * (1.0f - gi);
            dz[h + j] = dc * c_prev[j] * gf * (1.0f - gf);
            dz[2 * h + j] = dh * tc * go * (1.0f - go);
            dz[3 * h + j] = dc * gi * (1.0f - gg * gg);
            dc_next[j] = dc * gf;
        }
    }
    """
    float ctxaug_expf(float x) noexcept nogil
    void ctxaug_lstm_cell_f(float *row, const float *c_prev, float *c_out,
                            float *h_out, int h) noexcept nogil
    void ctxaug_lstm_cell_back_f(const float *gates, const float *c, const float *c_prev,
                                 const float *dh_out, const float *dh_next, float *dc_next,
                                 float *dz, int h) noexcept nogil


cdef inline floating _exp(floating x) noexcept nogil:
    if floating is float:
        return ctxaug_expf(x)
    else:
        return exp(x)


cdef inline floating _sig(floating x) noexcept nogil:
    return 1.0 / (1.0 + _exp(-x))


cdef inline floating _tanh(floating x) noexcept nogil:
    return 2.0 / (1.0 + _exp(-2.0 * x)) - 1.0


def _lstm_forward(floating[:, :, ::1] xproj, floating[:, ::1] w_h,
                  floating[:, ::1] h0, floating[:, ::1] c0,
                  floating[:, :, ::1] H, floating[:, :, ::1] C, floating[:, :, ::1] G):
    cdef int steps = xproj.shape[0]
    cdef int n = xproj.shape[1]
    cdef int four_h = xproj.shape[2]
    cdef int h = four_h // 4
    cdef int t, r, j
    cdef floating *h_prev
    cdef floating *c_prev
    cdef floating *z
    cdef floating *row
    cdef floating *hr
    cdef floating *cr
    cdef floating *cp
    if n == 0 or h == 0:
        return
    with nogil:
        for t in range(steps):
            h_prev = &h0[0, 0] if t == 0 else &H[t - 1, 0, 0]
            c_prev = &c0[0, 0] if t == 0 else &C[t - 1, 0, 0]
            z = &G[t, 0, 0]
            for r in range(n):
                for j in range(four_h):
                    z[r * four_h + j] = xproj[t, r, j]
            # z[n,4h] += h_prev[n,h] @ w_h[h,4h]
            _gemm(c'N', c'N', four_h, n, h, 1.0, &w_h[0, 0], four_h,
                  h_prev, h, 1.0, z, four_h)
            for r in range(n):
                row = z + r * four_h
                hr = &H[t, r, 0]
                cr = &C[t, r, 0]
                cp = c_prev + r * h
                if floating is float:
                    ctxaug_lstm_cell_f(row, cp, cr, hr, h)
                else:
                    for j in range(3 * h):
                        row[j] = _sig(row[j])
                    for j in range(3 * h, four_h):
                        row[j] = _tanh(row[j])
                    for j in range(h):
                        cr[j] = row[h + j] * cp[j] + row[j] * row[3 * h + j]
                        hr[j] = row[2 * h + j] * _tanh(cr[j])


def lstm_forward(xproj, w_h, h0, c0):
    xproj = np.ascontiguousarray(xproj)
    dtype = xproj.dtype
    w_h = np.ascontiguousarray(w_h, dtype=dtype)
    h0 = np.ascontiguousarray(h0, dtype=dtype)
    c0 = np.ascontiguousarray(c0, dtype=dtype)
    steps, n, four_h = xproj.shape
    h = four_h // 4
    H = np.empty((steps, n, h), dtype=dtype)
    C = np.empty((steps, n, h), dtype=dtype)
    G = np.empty((steps, n, four_h), dtype=dtype)
    if steps:
        _lstm_forward(xproj, w_h, h0, c0, H, C, G)
    return H, C, G


def _lstm_backward(floating[:, :, ::1] dH, floating[:, :, ::1] H, floating[:, :, ::1] C,
                   floating[:, :, ::1] G, floating[:, ::1] w_h,
                   floating[:, ::1] h0, floating[:, ::1] c0,
                   floating[:, :, ::1] dx, floating[:, ::1] dw,
                   floating[:, ::1] dh_next, floating[:, ::1] dc_next):
    cdef int steps = H.shape[0]
    cdef int n = H.shape[1]
    cdef int h = H.shape[2]
    cdef int four_h = 4 * h
    cdef int t, r, j, k
    cdef floating *h_prev
    cdef floating *c_prev
    cdef floating *dz
    cdef floating gi, gf, go, gg, tc, dh, dc
    if n == 0 or h == 0:
        return
    with nogil:
        for t in range(steps - 1, -1, -1):
            h_prev = &h0[0, 0] if t == 0 else &H[t - 1, 0, 0]
            c_prev = &c0[0, 0] if t == 0 else &C[t - 1, 0, 0]
            dz = &dx[t, 0, 0]
            for r in range(n):
                if floating is float:
                    ctxaug_lstm_cell_back_f(&G[t, r, 0], &C[t, r, 0], c_prev + r * h,
                                            &dH[t, r, 0], &dh_next[r, 0], &dc_next[r, 0],
                                            dz + r * four_h, h)
                    continue
                for j in range(h):
                    k = r * four_h
                    gi = G[t, r, j]
                    gf = G[t, r, h + j]
                    go = G[t, r, 2 * h + j]
                    gg = G[t, r, 3 * h + j]
                    dh = dH[t, r, j] + dh_next[r, j]
                    tc = _tanh(C[t, r, j])
                    dc = dc_next[r, j] + dh * go * (1.0 - tc * tc)
                    dz[k + j] = dc * gg * gi * (1.0 - gi)
                    dz[k + h + j] = dc * c_prev[r * h + j] * gf * (1.0 - gf)
                    dz[k + 2 * h + j] = dh * tc * go * (1.0 - go)
                    dz[k + 3 * h + j] = dc * gi * (1.0 - gg * gg)
                    dc_next[r, j] = dc * gf
            # dw[h,4h] += h_prev.T @ dz
            _gemm(c'N', c'T', four_h, h, n, 1.0, dz, four_h, h_prev, h, 1.0,
                  &dw[0, 0], four_h)
            # dh_next[n,h] = dz @ w_h.T
            _gemm(c'T', c'N', h, n, four_h, 1.0, &w_h[0, 0], four_h, dz, four_h, 0.0,
                  &dh_next[0, 0], h)


def lstm_backward(dH, H, C, G, w_h, h0, c0):
    dtype = H.dtype
    dH = np.ascontiguousarray(dH, dtype=dtype)
    H = np.ascontiguousarray(H)
    C = np.ascontiguousarray(C, dtype=dtype)
    G = np.ascontiguousarray(G, dtype=dtype)
    w_h = np.ascontiguousarray(w_h, dtype=dtype)
    h0 = np.ascontiguousarray(h0, dtype=dtype)
    c0 = np.ascontiguousarray(c0, dtype=dtype)
    steps, n, h = H.shape
    dx = np.empty((steps, n, 4 * h), dtype=dtype)
    dw = np.zeros_like(w_h)
    dh_next = np.zeros((n, h), dtype=dtype)
    dc_next = np.zeros((n, h), dtype=dtype)
    if steps:
        _lstm_backward(dH, H, C, G, w_h, h0, c0, dx, dw, dh_next, dc_next)
    return dx, dw, dh_next, dc_next


def _scatter_add_rows(floating[:, ::1] out, cnp.int64_t[::1] idx, floating[:, ::1] src):
    cdef Py_ssize_t k, j, row
    cdef Py_ssize_t d = out.shape[1]
    with nogil:
        for k in range(idx.shape[0]):
            row = idx[k]
            for j in range(d):
                out[row, j] += src[k, j]


def scatter_add_rows(out, idx, src):
    if not out.flags.c_contiguous:
        raise ValueError("scatter_add_rows needs a C-contiguous output")
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= out.shape[0]):
        raise IndexError("row index out of range")
    src = np.ascontiguousarray(src, dtype=out.dtype).reshape(len(idx), -1)
    _scatter_add_rows(out.reshape(out.shape[0], -1), idx, src)


def sample_rows(probs, u):
    cdef double[:, ::1] p = np.ascontiguousarray(probs, dtype=np.float64)
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t v = p.shape[1]
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    cdef Py_ssize_t r, j, last
    cdef double total, target, acc
    with nogil:
        for r in range(n):
            total = 0.0
            last = v - 1
            for j in range(v):
                total += p[r, j]
                if p[r, j] > 0:
                    last = j
            target = uu[r] * total
            acc = 0.0
            o[r] = last
            for j in range(v):
                acc += p[r, j]
                if acc > target and p[r, j] > 0:
                    o[r] = j
                    break
    return out

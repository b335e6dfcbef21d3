# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM cell kernels.

Same contract as ``qbilstm._fallback``; see that module for the argument
layout.  Gate rows are packed ``[node, input, forget, output]``.
"""

import numpy as np

from libc.math cimport exp, floor, ldexp, tanh


cdef inline double _round_half_away(double v) noexcept nogil:
    cdef double a = -v if v < 0.0 else v
    cdef double r = floor(a)
    if a - r >= 0.5:
        r += 1.0
    return -r if v < 0.0 else r


cdef inline double _quant(double v, const double* p) noexcept nogil:
    # p = (mode, f, code_lo, code_hi); mode 1 is sign binarization
    cdef int f
    cdef double r
    if p[0] == 1.0:
        return 1.0 if v >= 0.0 else -1.0
    f = <int>p[1]
    r = _round_half_away(ldexp(v, f))
    if r < p[2]:
        r = p[2]
    elif r > p[3]:
        r = p[3]
    return ldexp(r, -f)


cdef inline double _sigmoid(double v) noexcept nogil:
    return 1.0 / (1.0 + exp(-v))


cdef inline double _dot(const double* a, const double* v, Py_ssize_t n) noexcept nogil:
    # split accumulators are safe: every partial sum of grid values is exact
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t j = 0
    while j + 4 <= n:
        s0 += a[j] * v[j]
        s1 += a[j + 1] * v[j + 1]
        s2 += a[j + 2] * v[j + 2]
        s3 += a[j + 3] * v[j + 3]
        j += 4
    while j < n:
        s0 += a[j] * v[j]
        j += 1
    return (s0 + s1) + (s2 + s3)


cdef void _step(const double* W, const double* R, const double* b, double scale,
                Py_ssize_t H, Py_ssize_t I,
                const double* x, const double* y_prev, const double* c_prev,
                const double* qp, double* pre,
                double* y_out, double* y_rec, double* c_out) noexcept nogil:
    cdef Py_ssize_t g, j
    cdef double s, node, ig, fg, og, c, h, yraw
    for g in range(4 * H):
        s = _dot(W + g * I, x, I) + _dot(R + g * H, y_prev, H) + b[g]
        pre[g] = s * scale
    for j in range(H):
        node = _quant(tanh(pre[j]), qp + 4)
        ig = _quant(_sigmoid(pre[H + j]), qp)
        fg = _quant(_sigmoid(pre[2 * H + j]), qp)
        og = _quant(_sigmoid(pre[3 * H + j]), qp)
        c = _quant(ig * node + fg * c_prev[j], qp + 8)
        h = _quant(tanh(c), qp + 4)
        yraw = og * h
        c_out[j] = c
        y_out[j] = _quant(yraw, qp + 12)
        y_rec[j] = _quant(yraw, qp + 16)


def cell_step(const double[:, ::1] W, const double[:, ::1] R, const double[::1] b, double scale,
              const double[::1] x, const double[::1] y_prev, const double[::1] c_prev,
              const double[::1] qp):
    cdef Py_ssize_t H = R.shape[1]
    cdef Py_ssize_t I = W.shape[1]
    pre = np.empty(4 * H)
    y_out = np.empty(H)
    y_rec = np.empty(H)
    c_out = np.empty(H)
    cdef double[::1] pre_v = pre, yo = y_out, yr = y_rec, co = c_out
    with nogil:
        _step(&W[0, 0], &R[0, 0], &b[0], scale, H, I, &x[0], &y_prev[0], &c_prev[0],
              &qp[0], &pre_v[0], &yo[0], &yr[0], &co[0])
    return y_out, y_rec, c_out


def direction_pass(const double[:, ::1] W, const double[:, ::1] R, const double[::1] b, double scale,
                   const double[:, ::1] X, const double[::1] qp, bint reverse):
    cdef Py_ssize_t H = R.shape[1]
    cdef Py_ssize_t I = W.shape[1]
    cdef Py_ssize_t C = X.shape[0]
    cdef Py_ssize_t n, t
    Y = np.empty((C, H))
    state = np.zeros((4, H))  # y_rec and c, double-buffered
    pre = np.empty(4 * H)
    cdef double[:, ::1] Yv = Y, sv = state
    cdef double[::1] pre_v = pre
    cdef int cur = 0
    if C == 0:
        return Y, state[0].copy(), state[1].copy()
    with nogil:
        for n in range(C):
            t = C - 1 - n if reverse else n
            _step(&W[0, 0], &R[0, 0], &b[0], scale, H, I, &X[t, 0],
                  &sv[cur, 0], &sv[cur + 1, 0], &qp[0], &pre_v[0],
                  &Yv[t, 0], &sv[2 - cur, 0], &sv[3 - cur, 0])
            cur = 2 - cur
    return Y, state[cur].copy(), state[cur + 1].copy()

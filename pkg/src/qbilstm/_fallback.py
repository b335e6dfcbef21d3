"""Pure numpy implementation of the LSTM cell kernels.

Arguments shared by both backends:

``W`` (4H x I), ``R`` (4H x H), ``b`` (4H,)
    Integer weight codes stored as float64, gate rows packed
    ``[node, input, forget, output]``.
``scale``
    Real value of one code unit (``2**-f``, or ``1/sqrt(H+I)`` for binary weights).
``qp``
    20 floats, five quantizers of ``(mode, f, code_lo, code_hi)`` each, in the
    order gate, node, cell, output activation, recurrent activation.  Mode 1
    means sign binarization.

All pre-activation sums are over dyadic values with few significant bits, so
they are exact in float64 regardless of summation order; the only rounding
before activation is the final multiplication by ``scale``.
"""

import numpy as np

from .quant import round_half_away


def _quant(v, p):
    if p[0] == 1.0:
        return np.where(v >= 0.0, 1.0, -1.0)
    f = int(p[1])
    codes = np.clip(round_half_away(np.ldexp(v, f)), p[2], p[3])
    return np.ldexp(codes, -f)


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def cell_step(W, R, b, scale, x, y_prev, c_prev, qp):
    H = R.shape[1]
    pre = (W @ x + R @ y_prev + b) * scale
    node = _quant(np.tanh(pre[:H]), qp[4:8])
    ig = _quant(_sigmoid(pre[H:2 * H]), qp[0:4])
    fg = _quant(_sigmoid(pre[2 * H:3 * H]), qp[0:4])
    og = _quant(_sigmoid(pre[3 * H:]), qp[0:4])
    c = _quant(ig * node + fg * c_prev, qp[8:12])
    yraw = og * _quant(np.tanh(c), qp[4:8])
    return _quant(yraw, qp[12:16]), _quant(yraw, qp[16:20]), c


def direction_pass(W, R, b, scale, X, qp, reverse):
    C = X.shape[0]
    H = R.shape[1]
    Y = np.empty((C, H))
    y = np.zeros(H)
    c = np.zeros(H)
    order = range(C - 1, -1, -1) if reverse else range(C)
    for t in order:
        Y[t], y, c = cell_step(W, R, b, scale, X[t], y, c, qp)
    return Y, y, c

"""Numba-compiled direct 3D convolution kernels.

Imported lazily by :mod:`e3dnas.backends` so that a numpy-only
configuration never pays the numba import or JIT cost.  Both kernels run
one batch of independent draws: ``x`` is (draws, C_in, T, H, W), weights
are per-draw, and out-of-range taps read as zeros (same padding).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(parallel=True, fastmath=True, cache=True)
def conv_regular(x, w, out, stride_t, stride_s, pad_t, pad_h, pad_w):
    # x: (D, Ci, T, H, W), w: (D, Co, Ci, kt, kh, kw), out: (D, Co, To, Ho, Wo)
    D, Ci, T, H, W = x.shape
    Co = w.shape[1]
    kt, kh, kw = w.shape[3], w.shape[4], w.shape[5]
    To, Ho, Wo = out.shape[2], out.shape[3], out.shape[4]
    for d in prange(D):
        for co in range(Co):
            for to in range(To):
                t0 = to * stride_t - pad_t
                for ho in range(Ho):
                    h0 = ho * stride_s - pad_h
                    for wo in range(Wo):
                        w0 = wo * stride_s - pad_w
                        acc = np.float32(0.0)
                        for ci in range(Ci):
                            for i in range(kt):
                                ti = t0 + i
                                if ti < 0 or ti >= T:
                                    continue
                                for j in range(kh):
                                    hi = h0 + j
                                    if hi < 0 or hi >= H:
                                        continue
                                    for k in range(kw):
                                        wi = w0 + k
                                        if wi < 0 or wi >= W:
                                            continue
                                        acc += w[d, co, ci, i, j, k] * x[d, ci, ti, hi, wi]
                        out[d, co, to, ho, wo] = acc


@njit(parallel=True, fastmath=True, cache=True)
def conv_depthwise(x, w, out, stride_t, stride_s, pad_t, pad_h, pad_w):
    # x: (D, C, T, H, W), w: (D, C, kt, kh, kw), out: (D, C, To, Ho, Wo)
    D, C, T, H, W = x.shape
    kt, kh, kw = w.shape[2], w.shape[3], w.shape[4]
    To, Ho, Wo = out.shape[2], out.shape[3], out.shape[4]
    for d in prange(D):
        for c in range(C):
            for to in range(To):
                t0 = to * stride_t - pad_t
                for ho in range(Ho):
                    h0 = ho * stride_s - pad_h
                    for wo in range(Wo):
                        w0 = wo * stride_s - pad_w
                        acc = np.float32(0.0)
                        for i in range(kt):
                            ti = t0 + i
                            if ti < 0 or ti >= T:
                                continue
                            for j in range(kh):
                                hi = h0 + j
                                if hi < 0 or hi >= H:
                                    continue
                                for k in range(kw):
                                    wi = w0 + k
                                    if wi < 0 or wi >= W:
                                        continue
                                    acc += w[d, c, i, j, k] * x[d, c, ti, hi, wi]
                        out[d, c, to, ho, wo] = acc

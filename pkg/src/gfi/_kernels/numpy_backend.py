"""Pure numpy implementations of the hot kernels.

Used whenever the compiled module is unavailable (or forced via
GFI_KERNEL_BACKEND=numpy).  Convolutions go through im2col so the heavy
lifting lands in BLAS; the wave update is a sliced stencil.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"

# 4th-order central second-derivative coefficients (unit spacing)
_C0 = -5.0 / 2.0
_C1 = 4.0 / 3.0
_C2 = -1.0 / 12.0


def _pad_hw(x, ph, pw):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def conv2d_fwd(x, w, sh, sw, ph, pw):
    """Cross-correlate x (N,CI,H,W) with w (CO,CI,KH,KW) -> (N,CO,HO,WO)."""
    n, ci, h, wd = x.shape
    co, ci2, kh, kw = w.shape
    if ci != ci2:
        raise ValueError(f"channel mismatch: input has {ci}, kernel wants {ci2}")
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{wd} "
                         f"with padding ({ph},{pw})")
    xp = _pad_hw(x, ph, pw)
    # (N,CI,HO,WO,KH,KW) strided view, no copy
    cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    mat = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, ci * kh * kw)
    y = mat @ w.reshape(co, ci * kh * kw).T
    return np.ascontiguousarray(y.reshape(n, ho, wo, co).transpose(0, 3, 1, 2))


def conv2d_bwd_w(gy, x, sh, sw, ph, pw, kh, kw):
    """Gradient of conv2d_fwd w.r.t. the kernel."""
    n, ci, h, wd = x.shape
    n2, co, ho, wo = gy.shape
    xp = _pad_hw(x, ph, pw)
    cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    mat = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, ci * kh * kw)
    gmat = gy.transpose(0, 2, 3, 1).reshape(n * ho * wo, co)
    return np.ascontiguousarray((gmat.T @ mat).reshape(co, ci, kh, kw))


def conv2d_bwd_x(gy, w, sh, sw, ph, pw, h, wd):
    """Gradient of conv2d_fwd w.r.t. the input (also transposed-conv forward)."""
    n, co, ho, wo = gy.shape
    co2, ci, kh, kw = w.shape
    gxp = np.zeros((n, ci, h + 2 * ph, wd + 2 * pw), dtype=gy.dtype)
    # for a fixed kernel tap (u,v) the deposits hit a non-overlapping strided slice
    for u in range(kh):
        for v in range(kw):
            contrib = np.tensordot(gy, w[:, :, u, v], axes=([1], [0]))  # (N,HO,WO,CI)
            gxp[:, :, u:u + sh * ho:sh, v:v + sw * wo:sw] += \
                contrib.transpose(0, 3, 1, 2)
    if ph or pw:
        gxp = gxp[:, :, ph:ph + h, pw:pw + wd]
    return np.ascontiguousarray(gxp)


def wave_step(pc, pp, coef):
    """One leapfrog update of the padded pressure field.

    pc/pp are the current/previous fields with a 2-cell ghost ring; coef is
    (v*dt/dx)^2 on the same grid.  Returns the next field (ghost ring zero).
    """
    pn = np.zeros_like(pc)
    c = pc[2:-2, 2:-2]
    lap = (2.0 * _C0) * c
    lap += _C1 * (pc[1:-3, 2:-2] + pc[3:-1, 2:-2] +
                  pc[2:-2, 1:-3] + pc[2:-2, 3:-1])
    lap += _C2 * (pc[:-4, 2:-2] + pc[4:, 2:-2] +
                  pc[2:-2, :-4] + pc[2:-2, 4:])
    pn[2:-2, 2:-2] = 2.0 * c - pp[2:-2, 2:-2] + coef[2:-2, 2:-2] * lap
    return pn

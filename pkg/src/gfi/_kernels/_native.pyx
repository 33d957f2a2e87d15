# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: direct conv2d forward/backward and the wave stencil.

Same call signatures as numpy_backend; the package picks whichever imported.
"""

import numpy as np

cimport cython

NAME = "native"

ctypedef fused real:
    float
    double


def _conv_fwd_core(real[:, :, :, ::1] xp, real[:, :, :, ::1] w,
                   real[:, :, :, ::1] y, int sh, int sw):
    cdef Py_ssize_t n = y.shape[0], co = y.shape[1], ho = y.shape[2], wo = y.shape[3]
    cdef Py_ssize_t ci = xp.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t b, o, c, u, v, i, j
    cdef real wv
    with nogil:
        for b in range(n):
            for o in range(co):
                for c in range(ci):
                    for u in range(kh):
                        for v in range(kw):
                            wv = w[o, c, u, v]
                            for i in range(ho):
                                for j in range(wo):
                                    y[b, o, i, j] += wv * xp[b, c, i * sh + u, j * sw + v]


def _conv_bwd_x_core(real[:, :, :, ::1] gy, real[:, :, :, ::1] w,
                     real[:, :, :, ::1] gxp, int sh, int sw):
    cdef Py_ssize_t n = gy.shape[0], co = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t ci = gxp.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t b, o, c, u, v, i, j
    cdef real wv
    with nogil:
        for b in range(n):
            for c in range(ci):
                for o in range(co):
                    for u in range(kh):
                        for v in range(kw):
                            wv = w[o, c, u, v]
                            for i in range(ho):
                                for j in range(wo):
                                    gxp[b, c, i * sh + u, j * sw + v] += wv * gy[b, o, i, j]


def _conv_bwd_w_core(real[:, :, :, ::1] gy, real[:, :, :, ::1] xp,
                     real[:, :, :, ::1] gw, int sh, int sw):
    cdef Py_ssize_t n = gy.shape[0], co = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t ci = xp.shape[1], kh = gw.shape[2], kw = gw.shape[3]
    cdef Py_ssize_t b, o, c, u, v, i, j
    cdef real acc
    with nogil:
        for b in range(n):
            for o in range(co):
                for c in range(ci):
                    for u in range(kh):
                        for v in range(kw):
                            acc = 0
                            for i in range(ho):
                                for j in range(wo):
                                    acc += gy[b, o, i, j] * xp[b, c, i * sh + u, j * sw + v]
                            gw[o, c, u, v] += acc


def _wave_core(double[:, ::1] pc, double[:, ::1] pp, double[:, ::1] coef,
               double[:, ::1] pn):
    cdef Py_ssize_t nz = pc.shape[0], nx = pc.shape[1], i, j
    cdef double lap
    cdef double c0 = -5.0        # 2 * (-5/2), both axes share the center tap
    cdef double c1 = 4.0 / 3.0
    cdef double c2 = -1.0 / 12.0
    with nogil:
        for i in range(2, nz - 2):
            for j in range(2, nx - 2):
                lap = c0 * pc[i, j] \
                    + c1 * (pc[i - 1, j] + pc[i + 1, j] + pc[i, j - 1] + pc[i, j + 1]) \
                    + c2 * (pc[i - 2, j] + pc[i + 2, j] + pc[i, j - 2] + pc[i, j + 2])
                pn[i, j] = 2.0 * pc[i, j] - pp[i, j] + coef[i, j] * lap


def _check4(x, name):
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-d, got {x.ndim}-d")
    if x.dtype not in (np.float32, np.float64):
        raise TypeError(f"{name} must be float32/float64, got {x.dtype}")
    return np.ascontiguousarray(x)


def _pad_hw(x, ph, pw):
    if ph == 0 and pw == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def conv2d_fwd(x, w, sh, sw, ph, pw):
    """Cross-correlate x (N,CI,H,W) with w (CO,CI,KH,KW) -> (N,CO,HO,WO)."""
    x = _check4(x, "x")
    w = _check4(w, "w")
    n, ci, h, wd = x.shape
    co, ci2, kh, kw = w.shape
    if ci != ci2:
        raise ValueError(f"channel mismatch: input has {ci}, kernel wants {ci2}")
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{wd} "
                         f"with padding ({ph},{pw})")
    y = np.zeros((n, co, ho, wo), dtype=x.dtype)
    _conv_fwd_core(_pad_hw(x, ph, pw), w, y, sh, sw)
    return y


def conv2d_bwd_x(gy, w, sh, sw, ph, pw, h, wd):
    gy = _check4(gy, "gy")
    w = _check4(w, "w")
    n, co, ho, wo = gy.shape
    ci = w.shape[1]
    gxp = np.zeros((n, ci, h + 2 * ph, wd + 2 * pw), dtype=gy.dtype)
    _conv_bwd_x_core(gy, w, gxp, sh, sw)
    if ph or pw:
        gxp = np.ascontiguousarray(gxp[:, :, ph:ph + h, pw:pw + wd])
    return gxp


def conv2d_bwd_w(gy, x, sh, sw, ph, pw, kh, kw):
    gy = _check4(gy, "gy")
    x = _check4(x, "x")
    n, co, ho, wo = gy.shape
    ci = x.shape[1]
    gw = np.zeros((co, ci, kh, kw), dtype=gy.dtype)
    _conv_bwd_w_core(gy, _pad_hw(x, ph, pw), gw, sh, sw)
    return gw


def wave_step(pc, pp, coef):
    """One leapfrog update of the padded (2-cell ghost ring) pressure field."""
    pc = np.ascontiguousarray(pc, dtype=np.float64)
    pp = np.ascontiguousarray(pp, dtype=np.float64)
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    pn = np.zeros_like(pc)
    _wave_core(pc, pp, coef, pn)
    return pn

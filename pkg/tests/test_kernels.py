"""The compiled and numpy kernel backends must agree on identical inputs."""

import numpy as np
import pytest

from gfi import _kernels
from gfi._kernels import numpy_backend

native = pytest.importorskip("gfi._kernels._native")

CONV_CASES = [
    ((2, 3, 12, 11), (4, 3, 3, 3), (1, 1), (1, 1)),
    ((1, 2, 9, 9), (2, 2, 2, 2), (2, 2), (0, 0)),
    ((2, 5, 40, 14), (3, 5, 27, 3), (7, 1), (0, 1)),
]


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("xs,ws,stride,pad", CONV_CASES)
def test_conv_backends_agree(xs, ws, stride, pad, dtype):
    rng = np.random.default_rng(3)
    x = rng.standard_normal(xs).astype(dtype)
    w = rng.standard_normal(ws).astype(dtype)
    sh, sw = stride
    ph, pw = pad
    tol = 1e-5 if dtype == np.float32 else 1e-12

    y_n = native.conv2d_fwd(x, w, sh, sw, ph, pw)
    y_p = numpy_backend.conv2d_fwd(x, w, sh, sw, ph, pw)
    assert y_n.dtype == y_p.dtype == dtype
    assert y_n.shape == y_p.shape
    np.testing.assert_allclose(y_n, y_p, rtol=tol, atol=tol)

    g = rng.standard_normal(y_n.shape).astype(dtype)
    gx_n = native.conv2d_bwd_x(g, w, sh, sw, ph, pw, xs[2], xs[3])
    gx_p = numpy_backend.conv2d_bwd_x(g, w, sh, sw, ph, pw, xs[2], xs[3])
    np.testing.assert_allclose(gx_n, gx_p, rtol=tol, atol=tol)

    kh, kw = ws[2:]
    gw_n = native.conv2d_bwd_w(g, x, sh, sw, ph, pw, kh, kw)
    gw_p = numpy_backend.conv2d_bwd_w(g, x, sh, sw, ph, pw, kh, kw)
    np.testing.assert_allclose(gw_n, gw_p, rtol=tol, atol=tol)


def test_wave_step_backends_agree():
    rng = np.random.default_rng(4)
    pc = rng.standard_normal((20, 30))
    pp = rng.standard_normal((20, 30))
    coef = rng.uniform(0.05, 0.3, (20, 30))
    a = native.wave_step(pc, pp, coef)
    b = numpy_backend.wave_step(pc, pp, coef)
    assert a.dtype == b.dtype == np.float64
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    assert np.all(a[:2] == 0) and np.all(a[:, :2] == 0)


def test_selected_backend_has_a_name():
    assert _kernels.BACKEND in ("native", "numpy")
    for fn in ("conv2d_fwd", "conv2d_bwd_x", "conv2d_bwd_w", "wave_step"):
        assert callable(getattr(_kernels, fn))

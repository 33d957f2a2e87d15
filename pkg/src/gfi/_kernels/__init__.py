"""Kernel backend selection.

The compiled module is preferred when it built; GFI_KERNEL_BACKEND=numpy or
=native forces a choice (the latter raises if the extension is missing).
"""

import os

_forced = os.environ.get("GFI_KERNEL_BACKEND", "").strip().lower()

if _forced == "numpy":
    from gfi._kernels import numpy_backend as _impl
elif _forced == "native":
    from gfi._kernels import _native as _impl
elif _forced:
    raise ValueError(f"GFI_KERNEL_BACKEND must be 'numpy' or 'native', "
                     f"got {_forced!r}")
else:
    try:
        from gfi._kernels import _native as _impl
    except ImportError:
        from gfi._kernels import numpy_backend as _impl

BACKEND = _impl.NAME
conv2d_fwd = _impl.conv2d_fwd
conv2d_bwd_x = _impl.conv2d_bwd_x
conv2d_bwd_w = _impl.conv2d_bwd_w
wave_step = _impl.wave_step

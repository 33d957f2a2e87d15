"""Acoustic survey simulation and latent-space translation models."""

from gfi._kernels import BACKEND as kernel_backend
from gfi.tensor import Tensor, gradcheck, no_grad

__version__ = "0.1.0"

__all__ = ["Tensor", "gradcheck", "no_grad", "kernel_backend", "__version__"]

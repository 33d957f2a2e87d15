"""Trainable layers built on the tensor ops.

Every layer exposes `kind`, `named_params()` and is callable on a Tensor.
Weights start uniform in +-sqrt(1/fan_in); construction takes an explicit
numpy Generator so model builds are reproducible.
"""

import numpy as np

from gfi import tensor as T
from gfi.tensor import Tensor


def _uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype),
                  requires_grad=True)


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


class Layer:
    kind = "base"

    def named_params(self):
        return []

    def __call__(self, x):
        raise NotImplementedError


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0,
                 bias=True, rng=None, dtype=np.float32, zero_init=False):
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = _pair(kernel)
        self.stride = _pair(stride)
        self.padding = _pair(padding)
        fan_in = in_ch * kh * kw
        self.weight = _uniform(rng, (out_ch, in_ch, kh, kw), fan_in, dtype)
        self.bias = _uniform(rng, (out_ch,), fan_in, dtype) if bias else None
        if zero_init:
            self.weight.data[...] = 0
            if self.bias is not None:
                self.bias.data[...] = 0

    def named_params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out

    def __call__(self, x):
        y = T.conv2d(x, self.weight, self.stride, self.padding)
        if self.bias is not None:
            y = y + T.reshape(self.bias, (1, -1, 1, 1))
        return y


class ConvTranspose2d(Layer):
    kind = "transposed-conv2d"

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0,
                 output_padding=0, bias=True, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = _pair(kernel)
        self.stride = _pair(stride)
        self.padding = _pair(padding)
        self.output_padding = _pair(output_padding)
        fan_in = in_ch * kh * kw
        self.weight = _uniform(rng, (in_ch, out_ch, kh, kw), fan_in, dtype)
        self.bias = _uniform(rng, (out_ch,), fan_in, dtype) if bias else None

    def named_params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out

    def __call__(self, x):
        y = T.conv_transpose2d(x, self.weight, self.stride, self.padding,
                               self.output_padding)
        if self.bias is not None:
            y = y + T.reshape(self.bias, (1, -1, 1, 1))
        return y


class LeakyReLU(Layer):
    kind = "leaky-relu"

    def __init__(self, slope=0.2):
        self.slope = slope

    def __call__(self, x):
        return T.leaky_relu(x, self.slope)


class ScaleShift(Layer):
    """Per-channel learnable gain and offset (a norm layer without stats)."""

    kind = "scale-shift"

    def __init__(self, channels, dtype=np.float32):
        self.gain = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.shift = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)

    def named_params(self):
        return [("gain", self.gain), ("shift", self.shift)]

    def __call__(self, x):
        g = T.reshape(self.gain, (1, -1, 1, 1))
        s = T.reshape(self.shift, (1, -1, 1, 1))
        return x * g + s


class NearestUpsample(Layer):
    kind = "nearest-upsample"

    def __init__(self, factor=2):
        self.factor = _pair(factor)

    def __call__(self, x):
        return T.upsample_nearest(x, self.factor)


class MaxPool2d(Layer):
    kind = "max-pool"

    def __init__(self, kernel=2):
        self.kernel = _pair(kernel)

    def __call__(self, x):
        return T.maxpool2d(x, self.kernel)


class Linear(Layer):
    kind = "linear"

    def __init__(self, d_in, d_out, bias=True, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = _uniform(rng, (d_in, d_out), d_in, dtype)
        self.bias = _uniform(rng, (d_out,), d_in, dtype) if bias else None

    def named_params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers):
        self.layers = list(layers)

    def named_params(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, p in layer.named_params():
                out.append((f"{i}.{name}", p))
        return out

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

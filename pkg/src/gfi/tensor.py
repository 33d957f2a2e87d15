"""Reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps an ndarray and records the op graph as it is built; calling
backward() on a scalar walks the graph once in reverse topological order and
accumulates gradients into the leaf tensors that asked for them.  The graph
is consumed by backward(): a second call on the same graph raises, and the
trainer is responsible for zeroing .grad between steps.
"""

import numpy as np

from gfi import _kernels as K

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (cheap inference)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fns",
                 "_consumed")

    def __init__(self, data, requires_grad=False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._grad_fns = ()
        self._consumed = False

    # ---- bookkeeping ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, " \
               f"requires_grad={self.requires_grad})"

    def backward(self):
        """Backpropagate from a scalar; fills .grad on requires-grad leaves."""
        if self.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.shape}")
        if self._consumed:
            raise RuntimeError("graph already consumed by a previous backward(); "
                               "rebuild the forward pass")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        flows = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = flows.pop(id(node), None)
            if g is None:
                continue
            if node._parents:
                for p, fn in zip(node._parents, node._grad_fns):
                    contrib = fn(g)
                    prev = flows.get(id(p))
                    flows[id(p)] = contrib if prev is None else prev + contrib
                node._parents = ()
                node._grad_fns = ()
                node._consumed = True
            elif node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
        self._consumed = True

    # ---- operators ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other, self)
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), _coerce(other, self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def abs(self):
        return tabs(self)

    def square(self):
        return square(self)


def _coerce(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _make(data, pairs):
    """Build an op-result tensor; pairs = ((parent, grad_fn), ...)."""
    out = Tensor(data)
    if _grad_enabled:
        live = tuple((p, fn) for p, fn in pairs if p.requires_grad)
        if live:
            out.requires_grad = True
            out._parents = tuple(p for p, _ in live)
            out._grad_fns = tuple(fn for _, fn in live)
    return out


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to `shape`."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_dtypes(a, b, opname):
    if a.dtype != b.dtype:
        raise TypeError(f"{opname}: dtype mismatch {a.dtype} vs {b.dtype}")


# ---- elementwise ops ----------------------------------------------------

def add(a, b):
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _coerce(b, a)
    _check_dtypes(a, b, "add")
    return _make(a.data + b.data,
                 ((a, lambda g: _unbroadcast(g, a.shape)),
                  (b, lambda g: _unbroadcast(g, b.shape))))


def mul(a, b):
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _coerce(b, a)
    _check_dtypes(a, b, "mul")
    return _make(a.data * b.data,
                 ((a, lambda g: _unbroadcast(g * b.data, a.shape)),
                  (b, lambda g: _unbroadcast(g * a.data, b.shape))))


def tabs(x):
    return _make(np.abs(x.data), ((x, lambda g: g * np.sign(x.data)),))


def square(x):
    return _make(x.data * x.data, ((x, lambda g: g * (2.0 * x.data)),))


def leaky_relu(x, slope=0.2):
    mask = x.data > 0
    return _make(np.where(mask, x.data, x.data * slope),
                 ((x, lambda g: np.where(mask, g, g * slope)),))


# ---- reductions and shape ops ------------------------------------------

def tsum(x):
    return _make(x.data.sum(),
                 ((x, lambda g: np.full(x.shape, g, dtype=x.dtype)),))


def tmean(x):
    n = x.size
    return _make(x.data.mean(),
                 ((x, lambda g: np.full(x.shape, g / n, dtype=x.dtype)),))


def reshape(x, shape):
    old = x.shape
    return _make(x.data.reshape(shape),
                 ((x, lambda g: g.reshape(old)),))


def concat(tensors, axis=1):
    tensors = list(tensors)
    base = tensors[0]
    for t in tensors[1:]:
        _check_dtypes(base, t, "concat")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def slicer(i):
        def fn(g):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offsets[i], offsets[i + 1])
            return np.ascontiguousarray(g[tuple(idx)])
        return fn

    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple((t, slicer(i)) for i, t in enumerate(tensors)))


def slice_channels(x, c0, c1):
    """x[:, c0:c1] with gradient scattered back into a zero field."""
    def fn(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[:, c0:c1] = g
        return gx
    return _make(np.ascontiguousarray(x.data[:, c0:c1]), ((x, fn),))


def matmul(a, b):
    _check_dtypes(a, b, "matmul")
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul wants 2-d operands, got {a.ndim}-d and {b.ndim}-d")
    return _make(a.data @ b.data,
                 ((a, lambda g: g @ b.data.T),
                  (b, lambda g: a.data.T @ g)))


# ---- structured ops over the kernel backend -----------------------------

def conv2d(x, w, stride=(1, 1), padding=(0, 0)):
    """Batched cross-correlation; x (N,CI,H,W), w (CO,CI,KH,KW)."""
    _check_dtypes(x, w, "conv2d")
    sh, sw = stride
    ph, pw = padding
    h, wd = x.shape[2], x.shape[3]
    kh, kw = w.shape[2], w.shape[3]
    y = K.conv2d_fwd(x.data, w.data, sh, sw, ph, pw)
    return _make(y, ((x, lambda g: K.conv2d_bwd_x(g, w.data, sh, sw, ph, pw, h, wd)),
                     (w, lambda g: K.conv2d_bwd_w(g, x.data, sh, sw, ph, pw, kh, kw))))


def conv_transpose2d(x, w, stride=(1, 1), padding=(0, 0), output_padding=(0, 0)):
    """Transposed conv; x (N,CI,H,W), w (CI,CO,KH,KW).

    Forward is the scatter adjoint of conv2d, so the three conv kernels are
    reused with roles swapped.
    """
    _check_dtypes(x, w, "conv_transpose2d")
    sh, sw = stride
    ph, pw = padding
    oph, opw = output_padding
    if not (0 <= oph < sh and 0 <= opw < sw):
        raise ValueError(f"output_padding {output_padding} must be < stride {stride}")
    kh, kw = w.shape[2], w.shape[3]
    ho = (x.shape[2] - 1) * sh - 2 * ph + kh + oph
    wo = (x.shape[3] - 1) * sw - 2 * pw + kw + opw
    y = K.conv2d_bwd_x(x.data, w.data, sh, sw, ph, pw, ho, wo)
    return _make(y, ((x, lambda g: K.conv2d_fwd(g, w.data, sh, sw, ph, pw)),
                     (w, lambda g: K.conv2d_bwd_w(x.data, g, sh, sw, ph, pw, kh, kw))))


def maxpool2d(x, kernel=(2, 2)):
    """Non-overlapping max pooling; spatial dims must divide evenly."""
    kh, kw = kernel
    n, c, h, wd = x.shape
    if h % kh or wd % kw:
        raise ValueError(f"pool {kernel} does not tile input {h}x{wd}")
    ho, wo = h // kh, wd // kw
    win = x.data.reshape(n, c, ho, kh, wo, kw).transpose(0, 1, 2, 4, 3, 5) \
        .reshape(n, c, ho, wo, kh * kw)
    idx = win.argmax(axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def fn(g):
        gw = np.zeros((n, c, ho, wo, kh * kw), dtype=g.dtype)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        return np.ascontiguousarray(
            gw.reshape(n, c, ho, wo, kh, kw).transpose(0, 1, 2, 4, 3, 5)
              .reshape(n, c, h, wd))

    return _make(np.ascontiguousarray(y), ((x, fn),))


def upsample_nearest(x, factor=(2, 2)):
    fh, fw = factor
    n, c, h, wd = x.shape
    y = x.data.repeat(fh, axis=2).repeat(fw, axis=3)

    def fn(g):
        return g.reshape(n, c, h, fh, wd, fw).sum(axis=(3, 5))

    return _make(y, ((x, fn),))


# ---- numeric gradient check ---------------------------------------------

def finite_difference_grad(func, inputs, eps=1e-5):
    """Central-difference gradients of a scalar-valued func(*inputs).

    Mutates each input's data in place element by element (restoring it),
    so func must read the current values on every call.
    """
    grads = []
    with no_grad():
        for t in inputs:
            g = np.zeros_like(t.data)
            flat, gf = t.data.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = float(func(*inputs).data)
                flat[i] = orig - eps
                lo = float(func(*inputs).data)
                flat[i] = orig
                gf[i] = (hi - lo) / (2.0 * eps)
            grads.append(g)
    return grads


def gradcheck(func, inputs, eps=1e-5):
    """Max discrepancy between backprop and finite differences.

    Returns the worst |ad - fd| over all inputs, scaled by the largest
    finite-difference magnitude (floored at 1 so near-zero gradients are
    compared absolutely).
    """
    for t in inputs:
        t.zero_grad()
        t.requires_grad = True
    out = func(*inputs)
    out.backward()
    fd = finite_difference_grad(func, inputs, eps)
    worst = 0.0
    for t, g_fd in zip(inputs, fd):
        g_ad = t.grad if t.grad is not None else np.zeros_like(t.data)
        denom = max(float(np.abs(g_fd).max(initial=0.0)), 1.0)
        worst = max(worst, float(np.abs(g_ad - g_fd).max(initial=0.0)) / denom)
    return worst

"""Encoder/decoder pairs, latent translators, and their composition.

Encoders are planned per axis: ceil-halving conv stages (k3/s2/p1) where the
chain lands exactly on the latent size, with at most one leading valid-conv
collapse stage when it cannot (long time axes).  The decoder mirrors the
recorded stage shapes with transposed convs, choosing output_padding so
decode(encode(x)) always restores the input shape.
"""

import json
import struct
from io import BytesIO

import numpy as np

from gfi import gft
from gfi import tensor as T
from gfi.layers import (Conv2d, ConvTranspose2d, LeakyReLU, Linear, MaxPool2d,
                        NearestUpsample, ScaleShift, Sequential)
from gfi.tensor import Tensor

MODEL_NAMES = ("inversion-net", "auto-linear", "latent-unet-small",
               "latent-unet-large", "invertible-xnet")
DIRECTIONS = ("forward", "inverse")

CKPT_MAGIC = b"GFICKPT\0"


class ModeError(RuntimeError):
    """Requested direction or training mode unsupported by the model."""


# ---- stage planning -----------------------------------------------------

def _halving_sizes(n0, nl):
    sizes = [n0]
    n = n0
    while n > nl:
        n = (n + 1) // 2
        sizes.append(n)
    return sizes if n == nl else None


def _collapse_candidates(nl, cap):
    """Sizes <= cap from which ceil-halving reaches nl (preimage closure)."""
    level, out = {nl}, {nl}
    while level:
        nxt = {m for t in level for m in (2 * t - 1, 2 * t)
               if t < m <= cap and m not in out}
        out |= nxt
        level = nxt
    return sorted(out, reverse=True)


def _plan_axis(n0, nl):
    """(kernel, stride, pad) stages taking size n0 down to nl."""
    if nl > n0:
        raise ValueError(f"latent extent {nl} exceeds input extent {n0}")
    sizes = _halving_sizes(n0, nl)
    if sizes is not None:
        return [(3, 2, 1)] * (len(sizes) - 1)
    for m in _collapse_candidates(nl, n0):
        s = n0 // m
        k = n0 - s * (m - 1)
        if k <= max(7, 4 * s):
            rest = _halving_sizes(m, nl)
            return [(k, s, 0)] + [(3, 2, 1)] * (len(rest) - 1)
    raise ValueError(f"no conv stage plan from {n0} to {nl}")


def _conv_out(n, k, s, p):
    return (n + 2 * p - k) // s + 1


def _channel_ladder(c_latent, n_stages):
    ch = [min(8 * 2 ** i, c_latent) for i in range(n_stages)]
    ch[-1] = c_latent
    return ch


class EncoderDecoderPair:
    """Conv encoder to a (C, h, w) latent and its mirrored decoder."""

    def __init__(self, domain, in_shape, latent_shape, rng, dtype=np.float32):
        self.domain = domain
        self.in_shape = tuple(in_shape)
        self.latent_shape = tuple(latent_shape)
        c_in, h0, w0 = self.in_shape
        c_lat, hl, wl = self.latent_shape
        rows = _plan_axis(h0, hl)
        cols = _plan_axis(w0, wl)
        ladder = 1 + max(0, int(np.ceil(np.log2(max(c_lat, 8) / 8))))
        n_stages = max(len(rows), len(cols), ladder, 1)
        rows += [(3, 1, 1)] * (n_stages - len(rows))
        cols += [(3, 1, 1)] * (n_stages - len(cols))
        chans = _channel_ladder(c_lat, n_stages)
        enc, shapes = [], [(h0, w0)]
        c_prev, h, w = c_in, h0, w0
        for (kh, sh, ph), (kw, sw, pw), c_out in zip(rows, cols, chans):
            enc.append(Conv2d(c_prev, c_out, (kh, kw), (sh, sw), (ph, pw),
                              rng=rng, dtype=dtype))
            enc.append(LeakyReLU(0.2))
            h, w = _conv_out(h, kh, sh, ph), _conv_out(w, kw, sw, pw)
            shapes.append((h, w))
            c_prev = c_out
        if (h, w) != (hl, wl):
            raise AssertionError(f"stage plan landed on {(h, w)}, "
                                 f"wanted {(hl, wl)}")
        dec = []
        for i in reversed(range(n_stages)):
            (kh, sh, ph), (kw, sw, pw) = rows[i], cols[i]
            th, tw = shapes[i]
            ih, iw = shapes[i + 1]
            oph = th - ((ih - 1) * sh - 2 * ph + kh)
            opw = tw - ((iw - 1) * sw - 2 * pw + kw)
            c_out = chans[i - 1] if i else chans[0]
            dec.append(ConvTranspose2d(chans[i], c_out, (kh, kw), (sh, sw),
                                       (ph, pw), (oph, opw),
                                       rng=rng, dtype=dtype))
            dec.append(LeakyReLU(0.2))
        dec.append(Conv2d(chans[0], c_in, 3, 1, 1, rng=rng, dtype=dtype))
        self.encoder = Sequential(enc)
        self.decoder = Sequential(dec)

    def encode(self, x):
        if x.shape[1:] != self.in_shape:
            raise ValueError(f"{self.domain} input {x.shape[1:]} does not "
                             f"match {self.in_shape}")
        return self.encoder(x)

    def decode(self, z):
        if z.shape[1:] != self.latent_shape:
            raise ValueError(f"latent {z.shape[1:]} does not match "
                             f"{self.latent_shape}")
        return self.decoder(z)

    def named_params(self):
        return ([(f"encoder.{n}", p) for n, p in self.encoder.named_params()]
                + [(f"decoder.{n}", p) for n, p in self.decoder.named_params()])


# ---- translators --------------------------------------------------------

class IdentityTranslator:
    kind = "identity"

    def __init__(self, latent_shape, direction):
        self.latent_shape = tuple(latent_shape)
        self.direction = direction

    def named_params(self):
        return []

    def __call__(self, z):
        return z


class LinearTranslator:
    kind = "linear"

    MAX_DIM = 16384  # a dense d x d map beyond this is not a desk model

    def __init__(self, latent_shape, direction, rng, dtype=np.float32):
        self.latent_shape = tuple(latent_shape)
        self.direction = direction
        d = int(np.prod(latent_shape))
        if d > self.MAX_DIM:
            raise ValueError(f"flattened latent of {d} is too large for a "
                             f"dense linear translator (cap {self.MAX_DIM})")
        self.lin = Linear(d, d, rng=rng, dtype=dtype)
        self._d = d

    def named_params(self):
        return [(f"lin.{n}", p) for n, p in self.lin.named_params()]

    def __call__(self, z):
        n = z.shape[0]
        y = self.lin(T.reshape(z, (n, self._d)))
        return T.reshape(y, (n,) + self.latent_shape)


class UNetTranslator:
    """Small U-Net over latent maps with optional skip concatenations."""

    kind = "unet"

    def __init__(self, latent_shape, direction, rng, base=32, depth=1,
                 skip_connections=True, dtype=np.float32):
        c, h, w = latent_shape
        for d in range(depth):
            if (h >> d) % 2 or (w >> d) % 2:
                raise ValueError(f"latent {h}x{w} cannot pool to depth {depth}")
        self.latent_shape = tuple(latent_shape)
        self.direction = direction
        self.base = base
        self.depth = depth
        self.skip_connections = skip_connections

        def block(cin, cout):
            return Sequential([Conv2d(cin, cout, 3, 1, 1, rng=rng, dtype=dtype),
                               ScaleShift(cout, dtype=dtype), LeakyReLU(0.2)])

        self.stem = block(c, base)
        self.pool = MaxPool2d(2)
        self.up = NearestUpsample(2)
        self.down_blocks = [block(base * 2 ** i, base * 2 ** (i + 1))
                            for i in range(depth)]
        self.up_blocks = []
        for i in reversed(range(depth)):
            cin = base * 2 ** (i + 1)
            if skip_connections:
                cin += base * 2 ** i
            self.up_blocks.append(block(cin, base * 2 ** i))
        self.head = Conv2d(base, c, 3, 1, 1, rng=rng, dtype=dtype)

    def named_params(self):
        out = [(f"stem.{n}", p) for n, p in self.stem.named_params()]
        for i, b in enumerate(self.down_blocks):
            out += [(f"down{i}.{n}", p) for n, p in b.named_params()]
        for i, b in enumerate(self.up_blocks):
            out += [(f"up{i}.{n}", p) for n, p in b.named_params()]
        out += [(f"head.{n}", p) for n, p in self.head.named_params()]
        return out

    def __call__(self, z):
        x = self.stem(z)
        skips = []
        for b in self.down_blocks:
            skips.append(x)
            x = b(self.pool(x))
        for b, s in zip(self.up_blocks, reversed(skips)):
            x = self.up(x)
            if self.skip_connections:
                x = T.concat([x, s], axis=1)
            x = b(x)
        return self.head(x)


class CouplingTranslator:
    """Stack of additive coupling blocks; exactly invertible by construction.

    Subnet final convs start at zero, so a fresh translator is the identity
    map in both directions.
    """

    kind = "coupling"

    def __init__(self, latent_shape, rng, n_blocks=4, hidden=None,
                 dtype=np.float32, zero_init=True):
        c, h, w = latent_shape
        if c % 2:
            raise ValueError(f"coupling needs an even channel count, got {c}")
        self.latent_shape = tuple(latent_shape)
        self.n_blocks = n_blocks
        half = c // 2
        self.hidden = hidden if hidden is not None else max(16, half)
        self.direction = "both"

        def subnet():
            return Sequential([
                Conv2d(half, self.hidden, 3, 1, 1, rng=rng, dtype=dtype),
                LeakyReLU(0.2),
                Conv2d(self.hidden, half, 3, 1, 1, rng=rng, dtype=dtype,
                       zero_init=zero_init),
            ])

        self.blocks = [(subnet(), subnet()) for _ in range(n_blocks)]
        self._half = half

    def named_params(self):
        out = []
        for i, (s1, s2) in enumerate(self.blocks):
            out += [(f"block{i}.s1.{n}", p) for n, p in s1.named_params()]
            out += [(f"block{i}.s2.{n}", p) for n, p in s2.named_params()]
        return out

    def forward(self, z):
        c = self._half
        for s1, s2 in self.blocks:
            a = T.slice_channels(z, 0, c)
            b = T.slice_channels(z, c, 2 * c)
            a2 = a + s1(b)
            b2 = b + s2(a2)
            z = T.concat([a2, b2], axis=1)
        return z

    def inverse(self, z):
        c = self._half
        for s1, s2 in reversed(self.blocks):
            a2 = T.slice_channels(z, 0, c)
            b2 = T.slice_channels(z, c, 2 * c)
            b = b2 - s2(a2)
            a = a2 - s1(b)
            z = T.concat([a, b], axis=1)
        return z

    def __call__(self, z):
        return self.forward(z)


def _as_batch(z, dtype=None):
    if isinstance(z, Tensor):
        return z, True, False
    arr = np.asarray(z, dtype=dtype)
    if arr.ndim == 3:
        return Tensor(arr[None]), False, True
    return Tensor(arr), False, False


def coupling_forward(t, z):
    zt, was_tensor, squeeze = _as_batch(z)
    out = t.forward(zt)
    if was_tensor:
        return out
    return out.data[0] if squeeze else out.data


def coupling_inverse(t, z):
    zt, was_tensor, squeeze = _as_batch(z)
    out = t.inverse(zt)
    if was_tensor:
        return out
    return out.data[0] if squeeze else out.data


def translate(t, z, direction):
    """Apply a translator in a direction; one-way translators reject the other."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, "
                         f"got {direction!r}")
    if t.kind == "coupling":
        return t.forward(z) if direction == "forward" else t.inverse(z)
    if t.direction != direction:
        raise ModeError(f"{t.kind} translator serves {t.direction!r} only, "
                        f"not {direction!r}")
    return t(z)


def encode(pair, x):
    xt, was_tensor, squeeze = _as_batch(x)
    out = pair.encode(xt)
    if was_tensor:
        return out
    return out.data[0] if squeeze else out.data


def decode(pair, z):
    zt, was_tensor, squeeze = _as_batch(z)
    out = pair.decode(zt)
    if was_tensor:
        return out
    return out.data[0] if squeeze else out.data


# ---- the composed model -------------------------------------------------

class GfiModel:
    """Encoder/decoder pairs bridged by latent translator(s).

    mode: forward-only | inverse-only | disjoint | joint.  Joint models share
    a single coupling translator between the two directions.
    """

    def __init__(self, pair_v, pair_p, translator_fwd=None,
                 translator_inv=None, mode="disjoint", name="custom"):
        if pair_v.latent_shape != pair_p.latent_shape:
            raise ValueError(f"latent shapes differ: {pair_v.latent_shape} "
                             f"vs {pair_p.latent_shape}")
        if mode == "joint":
            if translator_fwd is not translator_inv or \
                    translator_fwd is None or translator_fwd.kind != "coupling":
                raise ValueError("joint mode needs one shared coupling "
                                 "translator")
        self.pair_v = pair_v
        self.pair_p = pair_p
        self.translator_fwd = translator_fwd
        self.translator_inv = translator_inv
        self.mode = mode
        self.name = name

    @property
    def shared_translator(self):
        return (self.translator_fwd is not None
                and self.translator_fwd is self.translator_inv)

    def forward_t(self, v):
        if self.translator_fwd is None:
            raise ModeError(f"model {self.name!r} ({self.mode}) has no "
                            "forward path")
        z = self.pair_v.encode(v)
        return self.pair_p.decode(translate(self.translator_fwd, z, "forward"))

    def inverse_t(self, p):
        if self.translator_inv is None:
            raise ModeError(f"model {self.name!r} ({self.mode}) has no "
                            "inverse path")
        z = self.pair_p.encode(p)
        return self.pair_v.decode(translate(self.translator_inv, z, "inverse"))

    def named_params(self):
        out = [(f"pair_v.{n}", p) for n, p in self.pair_v.named_params()]
        out += [(f"pair_p.{n}", p) for n, p in self.pair_p.named_params()]
        if self.shared_translator:
            out += [(f"translator.{n}", p)
                    for n, p in self.translator_fwd.named_params()]
        else:
            if self.translator_fwd is not None:
                out += [(f"translator_fwd.{n}", p)
                        for n, p in self.translator_fwd.named_params()]
            if self.translator_inv is not None:
                out += [(f"translator_inv.{n}", p)
                        for n, p in self.translator_inv.named_params()]
        return out

    def translator_params(self):
        return [(n, p) for n, p in self.named_params()
                if n.startswith("translator")]

    def pair_params(self):
        return [(n, p) for n, p in self.named_params()
                if n.startswith("pair_")]

    def zero_grad(self):
        for _, p in self.named_params():
            p.grad = None

    def param_counts(self):
        counts = {"pair_v": 0, "pair_p": 0, "translator": 0}
        for n, p in self.named_params():
            key = n.split(".", 1)[0]
            counts["translator" if key.startswith("translator") else key] += p.size
        counts["total"] = sum(counts.values())
        return counts


def model_dtype(m):
    for _, p in m.named_params():
        return p.dtype
    return np.dtype(np.float32)


def predict_forward(m, v):
    """Velocity -> waveform in normalized space; accepts arrays or Tensors."""
    vt, was_tensor, squeeze = _as_batch(v, dtype=model_dtype(m))
    if was_tensor:
        return m.forward_t(vt)
    with T.no_grad():
        out = m.forward_t(vt)
    return out.data[0] if squeeze else out.data


def predict_inverse(m, p):
    pt, was_tensor, squeeze = _as_batch(p, dtype=model_dtype(m))
    if was_tensor:
        return m.inverse_t(pt)
    with T.no_grad():
        out = m.inverse_t(pt)
    return out.data[0] if squeeze else out.data


# ---- presets ------------------------------------------------------------

def desk_latent():
    return (16, 8, 8)


def full_latent():
    return (128, 70, 70)


def _unet_depth(requested, latent):
    _, h, w = latent
    fit = 0
    while fit < requested and (h >> fit) % 2 == 0 and (w >> fit) % 2 == 0 \
            and (h >> (fit + 1)) >= 2 and (w >> (fit + 1)) >= 2:
        fit += 1
    return max(1, fit) if requested else 0


def allowed_modes(name):
    """Training modes a model supports; the first is its canonical default."""
    if name == "inversion-net":
        return ("inverse",)
    if name == "invertible-xnet":
        return ("joint", "joint+cycle")
    if name == "auto-linear":
        return ("reconstruct-then-translate", "forward", "inverse")
    return ("inverse", "forward", "reconstruct-then-translate")


def build_model(name, v_shape, p_shape, latent=None, train_mode=None,
                seed=0, skip_connections=True, n_blocks=4, dtype=np.float32):
    """Construct a named model for given domain shapes.

    train_mode narrows one-directional builds: e.g. a latent U-Net built for
    mode 'inverse' carries only the p->v translator and rejects forward
    prediction, which is what its checkpoints must do too.
    """
    if name not in MODEL_NAMES:
        raise ValueError(f"unknown model {name!r}; expected one of "
                         f"{MODEL_NAMES}")
    latent = tuple(latent) if latent else desk_latent()
    if train_mode is None:
        train_mode = allowed_modes(name)[0]
    if train_mode not in allowed_modes(name):
        raise ModeError(f"model {name!r} does not support mode "
                        f"{train_mode!r} (allowed: {allowed_modes(name)})")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    pair_v = EncoderDecoderPair("velocity", v_shape, latent, rng, dtype)
    pair_p = EncoderDecoderPair("waveform", p_shape, latent, rng, dtype)

    build_info = {"name": name, "v_shape": list(v_shape),
                  "p_shape": list(p_shape), "latent": list(latent),
                  "train_mode": train_mode, "seed": int(seed),
                  "skip_connections": bool(skip_connections),
                  "n_blocks": int(n_blocks)}

    def done(model):
        model.build_info = build_info
        return model

    if name == "inversion-net":
        tr = IdentityTranslator(latent, "inverse")
        return done(GfiModel(pair_v, pair_p, None, tr, "inverse-only", name))
    if name == "invertible-xnet":
        tr = CouplingTranslator(latent, rng, n_blocks=n_blocks, dtype=dtype)
        return done(GfiModel(pair_v, pair_p, tr, tr, "joint", name))

    if name == "auto-linear":
        def make(direction):
            return LinearTranslator(latent, direction, rng, dtype)
    else:
        base, depth_req = (32, 1) if name == "latent-unet-small" else (64, 2)
        depth = _unet_depth(depth_req, latent)

        def make(direction):
            return UNetTranslator(latent, direction, rng, base=base,
                                  depth=depth,
                                  skip_connections=skip_connections,
                                  dtype=dtype)

    if train_mode == "forward":
        return done(GfiModel(pair_v, pair_p, make("forward"), None,
                             "forward-only", name))
    if train_mode == "inverse":
        return done(GfiModel(pair_v, pair_p, None, make("inverse"),
                             "inverse-only", name))
    return done(GfiModel(pair_v, pair_p, make("forward"), make("inverse"),
                         "disjoint", name))


# ---- checkpoints --------------------------------------------------------

def save_checkpoint(model, path, build_info, extra=None):
    """Write header JSON plus every parameter as contiguous GFT1 records."""
    params = model.named_params()
    header = {
        "format": "gfi-checkpoint-v1",
        "model": model.name,
        "mode": model.mode,
        "build": build_info,
        "param_counts": model.param_counts(),
        "params": [[n, list(p.shape)] for n, p in params],
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, p in params:
            gft.write_tensor(f, p.data)


def read_checkpoint_header(path):
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: not a gfi checkpoint")
        (n,) = struct.unpack("<I", f.read(4))
        return json.loads(f.read(n).decode())


def load_checkpoint(path):
    """Rebuild the model from its header and restore parameter values."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:8] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a gfi checkpoint")
    (n,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + n].decode())
    b = header["build"]
    model = build_model(header["model"], tuple(b["v_shape"]),
                        tuple(b["p_shape"]), tuple(b["latent"]),
                        train_mode=b.get("train_mode"), seed=b["seed"],
                        skip_connections=b.get("skip_connections", True),
                        n_blocks=b.get("n_blocks", 4))
    buf = BytesIO(raw[12 + n:])
    for (pname, pshape), (name, p) in zip(header["params"],
                                          model.named_params()):
        if pname != name or tuple(pshape) != p.shape:
            raise ValueError(f"{path}: parameter mismatch {pname} vs {name}")
        arr = gft.read_tensor(buf)
        if arr.shape != p.shape:
            raise ValueError(f"{path}: shape mismatch for {name}")
        p.data = arr.astype(p.data.dtype)
    if buf.read(1):
        raise ValueError(f"{path}: trailing bytes after parameters")
    return model, header

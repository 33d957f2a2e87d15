"""Training loops for translation models.

Modes: forward, inverse, joint (shared coupling translator, summed losses,
one backward), joint+cycle (adds latent cycle terms; works on unpaired
splits), and reconstruct-then-translate (stage 1 trains both autoencoders,
stage 2 trains only translators against byte-frozen codecs).
"""

import csv
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from gfi import datagen, metrics, models, optim
from gfi import tensor as T
from gfi.tensor import Tensor

MODES = ("forward", "inverse", "joint", "joint+cycle",
         "reconstruct-then-translate")
LOSS_KINDS = ("mae", "mse", "elastic")


@dataclass
class LossSpec:
    kind: str = "mae"
    w_mae: float = 1.0
    w_mse: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {LOSS_KINDS}, "
                             f"got {self.kind!r}")
        if self.kind == "elastic" and self.w_mae <= 0 and self.w_mse <= 0:
            raise ValueError("elastic loss needs a positive weight")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    lr0: float = 2e-3
    decay: float = 0.5
    decay_interval: int = 100
    loss: LossSpec = field(default_factory=LossSpec)
    mode: str = "inverse"
    seed: int = 0
    stage1_epochs: int = 0
    unpaired: bool = False
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.mode == "reconstruct-then-translate":
            if not 0 < self.stage1_epochs < self.epochs:
                raise ValueError("stage1_epochs must lie strictly between 0 "
                                 "and epochs for two-stage training")
        if self.unpaired and self.mode != "joint+cycle":
            raise ValueError("unpaired data only trains in joint+cycle mode")


HISTORY_COLUMNS = ("epoch", "lr", "loss_total", "loss_forward",
                   "loss_inverse", "loss_cycle", "loss_recon",
                   "val_mae", "val_mse", "val_ssim")


class TrainHistory:
    """Per-epoch loss components, validation metrics, and learning rates."""

    def __init__(self):
        self.rows = []

    def append(self, **kw):
        row = {k: kw.get(k) for k in HISTORY_COLUMNS}
        self.rows.append(row)

    def column(self, name):
        return [r[name] for r in self.rows]

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(HISTORY_COLUMNS)
            for r in self.rows:
                w.writerow(["" if r[c] is None else repr(r[c])
                            if isinstance(r[c], float) else r[c]
                            for c in HISTORY_COLUMNS])


def loss(pred, target, spec=None):
    """Scalar training loss between a predicted Tensor and a target."""
    spec = spec or LossSpec()
    if not isinstance(target, Tensor):
        target = Tensor(np.asarray(target, dtype=pred.dtype))
    if pred.shape != target.shape:
        raise ValueError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    if spec.kind == "mae":
        return T.tmean(T.tabs(diff))
    if spec.kind == "mse":
        return T.tmean(T.square(diff))
    return (T.tmean(T.tabs(diff)) * spec.w_mae
            + T.tmean(T.square(diff)) * spec.w_mse)


def xnet_loss(m, v, p, spec=None):
    """(total, L_forward, L_inverse) through one shared translator.

    total backpropagates both terms in a single pass, so the shared
    parameters receive gradient from both directions at once.
    """
    if m.mode != "joint" or not m.shared_translator:
        raise models.ModeError("xnet_loss needs a joint model with a shared "
                               "coupling translator")
    lf = loss(m.forward_t(v), p, spec)
    li = loss(m.inverse_t(p), v, spec)
    return lf + li, lf, li


def cycle_loss(m, v=None, p=None, spec=None):
    """Latent cycle terms; either domain may be absent (unpaired batches)."""
    if v is None and p is None:
        raise ValueError("cycle_loss needs at least one of v, p")
    total = None
    if v is not None:
        lv = loss(m.inverse_t(m.forward_t(v)), v, spec)
        total = lv
    if p is not None:
        lp = loss(m.forward_t(m.inverse_t(p)), p, spec)
        total = lp if total is None else total + lp
    return total


def combined_loss(m, v, p, spec=None):
    """joint+cycle objective: (total, L_f, L_i, L_c) with total = sum."""
    _, lf, li = xnet_loss(m, v, p, spec)
    lc = cycle_loss(m, v=v, p=p, spec=spec)
    return (lf + li) + lc, lf, li, lc


def lr_for(cfg, epoch):
    return optim.lr_at(epoch, cfg.lr0, cfg.decay, cfg.decay_interval)


def _snapshot(params):
    return {n: p.data.tobytes() for n, p in params}


def _check_frozen(params, snap):
    for n, p in params:
        if p.data.tobytes() != snap[n]:
            raise RuntimeError(f"internal error: frozen parameter {n!r} "
                               "changed during stage 2")


def _finite_or_raise(value, epoch, step):
    if not np.isfinite(value):
        raise RuntimeError(f"training diverged: non-finite loss at "
                           f"epoch {epoch} step {step}")


class _EpochMeans:
    def __init__(self):
        self.sums = {}
        self.counts = {}

    def add(self, key, value, n):
        self.sums[key] = self.sums.get(key, 0.0) + value * n
        self.counts[key] = self.counts.get(key, 0) + n

    def get(self, key):
        if key not in self.sums:
            return None
        return self.sums[key] / self.counts[key]


def _val_metrics(m, dataset, v_val, p_val, direction):
    """Unnormalized validation metrics in the given direction."""
    sv = dataset.stats("velocity")
    sp = dataset.stats("waveform")
    if direction == "forward":
        pred_n = models.predict_forward(m, datagen.normalize(v_val, sv))
        pred = datagen.unnormalize(pred_n, sp)
        target, dom = p_val, "waveform"
    elif direction == "inverse":
        pred_n = models.predict_inverse(m, datagen.normalize(p_val, sp))
        pred = datagen.unnormalize(pred_n, sv)
        target, dom = v_val, "velocity"
    else:  # reconstruction of the velocity domain during stage 1
        vn = datagen.normalize(v_val, sv)
        with T.no_grad():
            rec = m.pair_v.decode(m.pair_v.encode(Tensor(
                vn.astype(models.model_dtype(m))))).data
        pred = datagen.unnormalize(rec, sv)
        target, dom = v_val, "velocity"
    entry = dataset.manifest["norm"][dom]
    lo, hi = entry["vmin"], entry["vmax"]
    span = hi - lo
    mae = metrics.metric(pred, target, "mae")
    mse = metrics.metric(pred, target, "mse")
    vals = [metrics.ssim_nd((pred[i] - lo) / span, (target[i] - lo) / span)
            for i in range(len(target))]
    return mae, mse, float(np.mean(vals))


def train(m, dataset, cfg, out_dir=None):
    """Run cfg.mode training; returns (model, history).

    With out_dir set, writes history.csv, a final checkpoint.ckpt, and
    checkpoint_best.ckpt at the lowest validation MAE.  The model must carry
    build_info (models built by build_model do) so checkpoints can be
    reloaded without outside knowledge.
    """
    if cfg.mode in ("joint", "joint+cycle") and m.mode != "joint":
        raise models.ModeError(f"{cfg.mode} training needs a joint model, "
                               f"got mode {m.mode!r}")
    if cfg.mode == "forward" and m.translator_fwd is None:
        raise models.ModeError("forward training needs a forward translator")
    if cfg.mode == "inverse" and m.translator_inv is None:
        raise models.ModeError("inverse training needs an inverse translator")
    if cfg.mode == "reconstruct-then-translate" and \
            m.translator_fwd is None and m.translator_inv is None:
        raise models.ModeError("two-stage training needs a translator")
    build_info = getattr(m, "build_info", None)
    if out_dir is not None and build_info is None:
        raise ValueError("checkpointing needs a model built by build_model")

    v_raw, p_raw = dataset.train_arrays()
    sv, sp = dataset.stats("velocity"), dataset.stats("waveform")
    dt = models.model_dtype(m)
    vn = datagen.normalize(v_raw, sv).astype(dt)
    pn = datagen.normalize(p_raw, sp).astype(dt)
    n = len(vn)

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 20]))
    order0 = rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    if n - n_val < 1:
        raise ValueError(f"{n} samples leave no training data after a "
                         f"{cfg.val_fraction} validation split")
    val_idx = order0[:n_val]
    tr_idx = order0[n_val:]
    v_val, p_val = v_raw[val_idx], p_raw[val_idx]

    if cfg.unpaired:
        half = len(tr_idx) // 2
        if half < 1:
            raise ValueError("unpaired training needs at least 2 samples")
        v_pool, p_pool = tr_idx[:half], tr_idx[half:]

    rtt = cfg.mode == "reconstruct-then-translate"
    if rtt:
        opt_pairs = optim.Adam(m.pair_params(), lr=cfg.lr0)
        opt_tr = optim.Adam(m.translator_params(), lr=cfg.lr0)
        if not opt_tr.named_params:
            raise models.ModeError("two-stage training needs trainable "
                                   "translator parameters")
    else:
        opt = optim.Adam(m.named_params(), lr=cfg.lr0)

    history = TrainHistory()
    best_mae = None
    frozen_snap = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        extra = {"dataset": dataset.name, "norm": dataset.manifest["norm"],
                 "train": asdict(cfg)}

    for epoch in range(cfg.epochs):
        lr = lr_for(cfg, epoch)
        stage1 = rtt and epoch < cfg.stage1_epochs
        if rtt:
            if epoch == cfg.stage1_epochs:
                frozen_snap = _snapshot(m.pair_params())
            active = opt_pairs if stage1 else opt_tr
        else:
            active = opt
        active.lr = lr
        means = _EpochMeans()

        if cfg.unpaired:
            v_order = v_pool[rng.permutation(len(v_pool))]
            p_order = p_pool[rng.permutation(len(p_pool))]
            steps = max(len(v_order), len(p_order))
            for step, s0 in enumerate(range(0, steps, cfg.batch_size)):
                vi = v_order[s0:s0 + cfg.batch_size]
                pi = p_order[s0:s0 + cfg.batch_size]
                vb = Tensor(vn[vi]) if len(vi) else None
                pb = Tensor(pn[pi]) if len(pi) else None
                lc = cycle_loss(m, v=vb, p=pb, spec=cfg.loss)
                val = lc.item()
                _finite_or_raise(val, epoch, step)
                bs = (len(vi) or 0) + (len(pi) or 0)
                means.add("loss_cycle", val, bs)
                means.add("loss_total", val, bs)
                m.zero_grad()
                lc.backward()
                active.step()
        else:
            order = tr_idx[rng.permutation(len(tr_idx))]
            for step, s0 in enumerate(range(0, len(order), cfg.batch_size)):
                ids = order[s0:s0 + cfg.batch_size]
                bs = len(ids)
                vb, pb = Tensor(vn[ids]), Tensor(pn[ids])
                if cfg.mode == "forward":
                    total = loss(m.forward_t(vb), pb, cfg.loss)
                    means.add("loss_forward", total.item(), bs)
                elif cfg.mode == "inverse":
                    total = loss(m.inverse_t(pb), vb, cfg.loss)
                    means.add("loss_inverse", total.item(), bs)
                elif cfg.mode == "joint":
                    total, lf, li = xnet_loss(m, vb, pb, cfg.loss)
                    means.add("loss_forward", lf.item(), bs)
                    means.add("loss_inverse", li.item(), bs)
                elif cfg.mode == "joint+cycle":
                    total, lf, li, lc = combined_loss(m, vb, pb, cfg.loss)
                    means.add("loss_forward", lf.item(), bs)
                    means.add("loss_inverse", li.item(), bs)
                    means.add("loss_cycle", lc.item(), bs)
                elif stage1:
                    total = (loss(m.pair_v.decode(m.pair_v.encode(vb)), vb,
                                  cfg.loss)
                             + loss(m.pair_p.decode(m.pair_p.encode(pb)), pb,
                                    cfg.loss))
                    means.add("loss_recon", total.item(), bs)
                else:
                    terms = []
                    if m.translator_fwd is not None:
                        terms.append(loss(m.forward_t(vb), pb, cfg.loss))
                        means.add("loss_forward", terms[-1].item(), bs)
                    if m.translator_inv is not None:
                        terms.append(loss(m.inverse_t(pb), vb, cfg.loss))
                        means.add("loss_inverse", terms[-1].item(), bs)
                    total = terms[0] if len(terms) == 1 else \
                        terms[0] + terms[1]
                val = total.item()
                _finite_or_raise(val, epoch, step)
                means.add("loss_total", val, bs)
                m.zero_grad()
                total.backward()
                active.step()

        if frozen_snap is not None:
            _check_frozen(m.pair_params(), frozen_snap)

        row = {"epoch": epoch, "lr": lr}
        for k in ("loss_total", "loss_forward", "loss_inverse",
                  "loss_cycle", "loss_recon"):
            row[k] = means.get(k)
        if n_val:
            if stage1:
                direction = "reconstruction"
            elif cfg.mode == "forward":
                direction = "forward"
            elif m.translator_inv is not None:
                direction = "inverse"
            else:
                direction = "forward"
            mae, mse, sval = _val_metrics(m, dataset, v_val, p_val, direction)
            row.update(val_mae=mae, val_mse=mse, val_ssim=sval)
            if out_dir is not None and not stage1 and \
                    (best_mae is None or mae < best_mae):
                best_mae = mae
                models.save_checkpoint(
                    m, os.path.join(out_dir, "checkpoint_best.ckpt"),
                    build_info, extra)
        history.append(**row)

    if out_dir is not None:
        models.save_checkpoint(m, os.path.join(out_dir, "checkpoint.ckpt"),
                               build_info, extra)
        history.to_csv(os.path.join(out_dir, "history.csv"))
    return m, history

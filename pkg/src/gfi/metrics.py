"""Evaluation metrics and cross-dataset comparison grids."""

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from gfi import datagen, models

WINDOW = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03


def metric(pred, target, kind):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"metric shapes differ: {pred.shape} vs "
                         f"{target.shape}")
    if kind == "mae":
        return float(np.mean(np.abs(pred - target)))
    if kind == "mse":
        return float(np.mean((pred - target) ** 2))
    raise ValueError(f"metric kind must be 'mae' or 'mse', got {kind!r}")


def _gauss_window():
    r = np.arange(WINDOW, dtype=np.float64) - (WINDOW - 1) / 2
    g = np.exp(-(r ** 2) / (2 * SIGMA ** 2))
    w = np.outer(g, g)
    return w / w.sum()


_WIN = _gauss_window()


def ssim(a, b, dynamic_range=1.0):
    """Mean SSIM over valid windows of two 2-d images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError(f"ssim expects 2-d images, got {a.ndim}-d")
    h, w = a.shape
    if h < WINDOW or w < WINDOW:
        raise ValueError(f"image {h}x{w} is smaller than the "
                         f"{WINDOW}x{WINDOW} ssim window")
    wa = sliding_window_view(a, (WINDOW, WINDOW))
    wb = sliding_window_view(b, (WINDOW, WINDOW))
    mu_a = np.einsum("ijkl,kl->ij", wa, _WIN)
    mu_b = np.einsum("ijkl,kl->ij", wb, _WIN)
    ea = np.einsum("ijkl,kl->ij", wa * wa, _WIN)
    eb = np.einsum("ijkl,kl->ij", wb * wb, _WIN)
    eab = np.einsum("ijkl,kl->ij", wa * wb, _WIN)
    va = ea - mu_a * mu_a
    vb = eb - mu_b * mu_b
    cov = eab - mu_a * mu_b
    c1 = (K1 * dynamic_range) ** 2
    c2 = (K2 * dynamic_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2)
    return float(min(1.0, np.mean(num / den)))


def ssim_nd(a, b, dynamic_range=1.0):
    """SSIM of (H, W) images or channel-averaged SSIM of (C, H, W) stacks."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim == 2:
        return ssim(a, b, dynamic_range)
    if a.ndim != 3 or a.shape != b.shape:
        raise ValueError(f"ssim_nd expects matching 2-d or 3-d arrays, got "
                         f"{a.shape} and {b.shape}")
    return float(np.mean([ssim(a[c], b[c], dynamic_range)
                          for c in range(a.shape[0])]))


AGGREGATE_KEYS = ("mae", "mse", "ssim")


@dataclass
class MetricReport:
    checkpoint_id: str
    dataset_id: str
    direction: str
    per_sample: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("sample",) + AGGREGATE_KEYS)
            for row in self.per_sample:
                w.writerow([row["sample"]] + [repr(row[k])
                                              for k in AGGREGATE_KEYS])
            w.writerow(["mean"] + [repr(self.aggregates[k])
                                   for k in AGGREGATE_KEYS])


def _check_norm(norm, dataset):
    for dom in ("velocity", "waveform"):
        have = norm[dom]["scheme"]
        want = dataset.scheme(dom)
        if have != want:
            raise ValueError(
                f"normalization scheme mismatch on {dom}: checkpoint used "
                f"{have!r} but dataset {dataset.name!r} uses {want!r}")


def evaluate(m, dataset, direction, norm=None, checkpoint_id=""):
    """Test-split metrics in physical units.

    Model inputs and outputs use the checkpoint's normalization stats (norm,
    defaulting to the dataset's own).  MAE and MSE compare unnormalized
    predictions to raw targets; SSIM compares both rescaled to [0, 1] by the
    evaluation dataset's min/max for the target domain.
    """
    if direction not in models.DIRECTIONS:
        raise ValueError(f"direction must be one of {models.DIRECTIONS}, "
                         f"got {direction!r}")
    if norm is None:
        norm = dataset.manifest["norm"]
    else:
        _check_norm(norm, dataset)
    sv = datagen.stats_for(norm["velocity"], norm["velocity"]["scheme"])
    sp = datagen.stats_for(norm["waveform"], norm["waveform"]["scheme"])
    v_test, p_test = dataset.test_arrays()
    if direction == "forward":
        pred_n = models.predict_forward(m, datagen.normalize(v_test, sv))
        pred = datagen.unnormalize(pred_n, sp)
        target, dom = p_test, "waveform"
    else:
        pred_n = models.predict_inverse(m, datagen.normalize(p_test, sp))
        pred = datagen.unnormalize(pred_n, sv)
        target, dom = v_test, "velocity"
    entry = dataset.manifest["norm"][dom]
    lo, hi = entry["vmin"], entry["vmax"]
    span = hi - lo
    report = MetricReport(checkpoint_id, dataset.name, direction)
    for i in range(len(target)):
        report.per_sample.append({
            "sample": i,
            "mae": metric(pred[i], target[i], "mae"),
            "mse": metric(pred[i], target[i], "mse"),
            "ssim": ssim_nd((pred[i] - lo) / span, (target[i] - lo) / span),
        })
    report.aggregates = {k: float(np.mean([r[k] for r in report.per_sample]))
                         for k in AGGREGATE_KEYS}
    return report


@dataclass
class ZeroShotGrid:
    row_ids: list
    col_ids: list
    direction: str
    cells: list  # cells[i][j] -> {mae, mse, ssim}

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("checkpoint", "dataset") + AGGREGATE_KEYS)
            for rid, row in zip(self.row_ids, self.cells):
                for cid, cell in zip(self.col_ids, row):
                    w.writerow([rid, cid] + [repr(cell[k])
                                             for k in AGGREGATE_KEYS])


def zero_shot_grid(entries, datasets, direction):
    """Evaluate every (checkpoint, dataset) pair.

    entries: list of (model, norm, checkpoint_id); norm comes from the
    checkpoint header so off-family datasets are judged exactly as the model
    was trained.
    """
    cells = []
    for m, norm, cid in entries:
        row = []
        for ds in datasets:
            rep = evaluate(m, ds, direction, norm=norm, checkpoint_id=cid)
            row.append(dict(rep.aggregates))
        cells.append(row)
    return ZeroShotGrid([e[2] for e in entries], [d.name for d in datasets],
                        direction, cells)


def grid_difference(a, b):
    """Cellwise metric differences between two grids over the same datasets."""
    if a.col_ids != b.col_ids or len(a.row_ids) != len(b.row_ids):
        raise ValueError("grids cover different datasets or checkpoint "
                         "counts; cannot difference them")
    cells = [[{k: ra[j][k] - rb[j][k] for k in AGGREGATE_KEYS}
              for j in range(len(a.col_ids))]
             for ra, rb in zip(a.cells, b.cells)]
    rows = [f"{x}-{y}" for x, y in zip(a.row_ids, b.row_ids)]
    return ZeroShotGrid(rows, list(a.col_ids), a.direction, cells)

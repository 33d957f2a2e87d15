"""Procedural velocity-map families, normalization, and dataset building.

Each map is generated from (spec.seed, index) through independent layer and
fault random streams, so the fault variant of a seed shares its parent's
stratigraphy and differs only where the displaced block moved.
"""

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from gfi import gft
from gfi.sim import SimConfig, check_cfl, simulate_survey

FAMILIES = ("flat", "curve", "flat-fault", "curve-fault")
SCHEMES = ("minmax", "standardize", "logsign-minmax")


@dataclass
class FamilySpec:
    family: str
    complexity: str = "A"
    n_layers: tuple = (3, 5)
    velocity_range: tuple = (1500.0, 4500.0)
    curvature: float = 2.0
    fault_throw: tuple = (1, 3)
    seed: int = 0
    height: int = 32
    width: int = 32

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; "
                             f"expected one of {FAMILIES}")
        if self.complexity not in ("A", "B"):
            raise ValueError(f"complexity must be A or B, got {self.complexity!r}")
        lo, hi = self.velocity_range
        if lo <= 0 or hi <= lo:
            raise ValueError(f"velocity range must be positive and increasing, "
                             f"got {self.velocity_range}")
        if self.n_layers[0] < 2 or self.n_layers[1] < self.n_layers[0]:
            raise ValueError(f"bad n_layers range {self.n_layers}")


def family_spec(family, complexity="A", seed=0, height=32, width=32):
    """Fill in the A/B complexity knobs for a family."""
    if complexity == "A":
        knobs = dict(n_layers=(3, 5), curvature=2.0, fault_throw=(1, 3))
    else:
        knobs = dict(n_layers=(5, 8), curvature=4.0, fault_throw=(2, 6))
    return FamilySpec(family=family, complexity=complexity, seed=seed,
                      height=height, width=width, **knobs)


def _layered_map(spec, rng):
    h, w = spec.height, spec.width
    n_layers = int(rng.integers(spec.n_layers[0], spec.n_layers[1] + 1))
    if n_layers > h:
        raise ValueError(f"{n_layers} layers cannot pack into {h} rows")
    vmin, vmax = spec.velocity_range
    vels = vmin + np.sort(rng.uniform(0.0, 1.0, n_layers)) * (vmax - vmin)
    # interface depths, distinct, away from row 0
    depths = np.sort(rng.choice(np.arange(1, h), size=n_layers - 1,
                                replace=False)).astype(np.float64)
    curved = spec.family in ("curve", "curve-fault")
    cols = np.arange(w)
    vmap = np.empty((h, w), dtype=np.float64)
    iface = np.empty((n_layers - 1, w), dtype=np.float64)
    for k, d in enumerate(depths):
        if curved:
            amp = rng.uniform(0.3, 1.0) * spec.curvature
            freq = rng.uniform(0.5, 1.5)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            offs = amp * np.sin(2.0 * np.pi * freq * cols / w + phase)
        else:
            offs = np.zeros(w)
        iface[k] = np.clip(d + offs, 1, h - 1)
    rows = np.arange(h)[None, :, None]
    layer_idx = (rows >= iface[:, None, :]).sum(axis=0)
    vmap[:] = vels[layer_idx]
    return vmap


def _apply_fault(vmap, spec, rng):
    h, w = vmap.shape
    slope = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
    pivot = rng.uniform(0.25 * w, 0.75 * w)
    r0 = rng.uniform(0.25 * h, 0.75 * h)
    throw = int(rng.integers(spec.fault_throw[0], spec.fault_throw[1] + 1))
    throw *= int(rng.choice([-1, 1]))
    plane = r0 + slope * (np.arange(w) - pivot)
    out = vmap.copy()
    rows = np.arange(h)
    for c in range(w):
        block = rows > plane[c]
        src = np.clip(rows[block] - throw, 0, h - 1)
        out[block, c] = vmap[src, c]
    return out


def gen_velocity(spec, index):
    """Deterministic (1, H, W) map for (spec, index) in m/s."""
    ss = np.random.SeedSequence([int(spec.seed), int(index)])
    layer_seed, fault_seed = ss.spawn(2)
    vmap = _layered_map(spec, np.random.default_rng(layer_seed))
    if spec.family.endswith("-fault"):
        vmap = _apply_fault(vmap, spec, np.random.default_rng(fault_seed))
    return vmap[None].astype(np.float32)


# ---- normalization ------------------------------------------------------

@dataclass
class NormStats:
    scheme: str
    vmin: float = None
    vmax: float = None
    mean: float = None
    std: float = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; "
                             f"expected one of {SCHEMES}")


def _logsign(x):
    return np.log1p(np.abs(x)) * np.sign(x)


def _logsign_inv(y):
    return np.expm1(np.abs(y)) * np.sign(y)


def compute_stats(x, scheme):
    """Train-split statistics for a scheme (log-domain extrema for logsign)."""
    x = np.asarray(x)
    if scheme == "logsign-minmax":
        x = _logsign(x)
    return NormStats(scheme=scheme,
                     vmin=float(x.min()), vmax=float(x.max()),
                     mean=float(x.mean()), std=float(x.std()))


def _span(stats):
    if stats.vmax is None or stats.vmin is None or stats.vmax <= stats.vmin:
        raise ValueError(f"degenerate minmax stats: vmin={stats.vmin}, "
                         f"vmax={stats.vmax}")
    return stats.vmax - stats.vmin


def normalize(x, stats):
    x = np.asarray(x)
    if stats.scheme == "minmax":
        return (x - stats.vmin) / _span(stats)
    if stats.scheme == "standardize":
        if not stats.std or stats.std <= 0:
            raise ValueError(f"degenerate standardize stats: std={stats.std}")
        return (x - stats.mean) / stats.std
    return (_logsign(x) - stats.vmin) / _span(stats)


def unnormalize(y, stats):
    y = np.asarray(y)
    if stats.scheme == "minmax":
        return y * _span(stats) + stats.vmin
    if stats.scheme == "standardize":
        if not stats.std or stats.std <= 0:
            raise ValueError(f"degenerate standardize stats: std={stats.std}")
        return y * stats.std + stats.mean
    return _logsign_inv(y * _span(stats) + stats.vmin)


# ---- dataset ------------------------------------------------------------

def _domain_stats(x):
    x = np.asarray(x)
    logd = _logsign(x)
    return {"vmin": float(x.min()), "vmax": float(x.max()),
            "mean": float(x.mean()), "std": float(x.std()),
            "logmin": float(logd.min()), "logmax": float(logd.max())}


def stats_for(entry, scheme):
    """Build NormStats for a scheme from a manifest norm entry."""
    if scheme == "logsign-minmax":
        return NormStats(scheme=scheme, vmin=entry["logmin"],
                         vmax=entry["logmax"])
    return NormStats(scheme=scheme, vmin=entry["vmin"], vmax=entry["vmax"],
                     mean=entry["mean"], std=entry["std"])


class Dataset:
    """On-disk paired samples plus the manifest with train-split stats."""

    def __init__(self, root):
        self.root = Path(root)
        with open(self.root / "manifest.json") as f:
            self.manifest = json.load(f)

    def _load(self, key):
        return gft.load(self.root / self.manifest["files"][key])

    def train_arrays(self):
        return self._load("train_velocity"), self._load("train_waveform")

    def test_arrays(self):
        return self._load("test_velocity"), self._load("test_waveform")

    def scheme(self, domain):
        return self.manifest["norm"][domain]["scheme"]

    def stats(self, domain, scheme=None):
        entry = self.manifest["norm"][domain]
        return stats_for(entry, scheme or entry["scheme"])

    @property
    def sim_config(self):
        return SimConfig(**self.manifest["sim_config"])

    @property
    def name(self):
        fam = self.manifest["family_spec"]
        return f"{fam['family']}-{fam['complexity']}"


def build_dataset(spec, n_train, n_test, sim_cfg, out_dir,
                  v_scheme="minmax", p_scheme="standardize"):
    """Generate maps, simulate surveys, and write the dataset directory.

    Train samples are indices [0, n_train), test samples follow, so the
    splits are disjoint by construction.  Returns the loaded Dataset.
    """
    if n_train < 1 or n_test < 0:
        raise ValueError("need n_train >= 1 and n_test >= 0")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_total = n_train + n_test
    vmaps = np.stack([gen_velocity(spec, i) for i in range(n_total)])
    check_cfl(sim_cfg, float(vmaps.max()))
    cubes = []
    for i in range(n_total):
        try:
            cubes.append(simulate_survey(vmaps[i], sim_cfg))
        except Exception as exc:
            raise RuntimeError(f"simulation failed on sample {i}: {exc}") from exc
    cubes = np.stack(cubes)
    files = {"train_velocity": "velocity.gft",
             "train_waveform": "waveform.gft",
             "test_velocity": "velocity_test.gft",
             "test_waveform": "waveform_test.gft"}
    gft.save(out_dir / files["train_velocity"], vmaps[:n_train])
    gft.save(out_dir / files["train_waveform"], cubes[:n_train])
    gft.save(out_dir / files["test_velocity"], vmaps[n_train:])
    gft.save(out_dir / files["test_waveform"], cubes[n_train:])
    norm = {"velocity": {"scheme": v_scheme, **_domain_stats(vmaps[:n_train])},
            "waveform": {"scheme": p_scheme, **_domain_stats(cubes[:n_train])}}
    manifest = {
        "family_spec": asdict(spec),
        "counts": {"n_train": n_train, "n_test": n_test},
        "split": {"train": [0, n_train], "test": [n_train, n_total]},
        "norm": norm,
        "files": files,
        "sim_config": json.loads(sim_cfg.to_json()),
        "shapes": {"velocity": list(vmaps.shape[1:]),
                   "waveform": list(cubes.shape[1:])},
    }
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    return Dataset(out_dir)

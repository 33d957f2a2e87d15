"""2D acoustic wave propagation by explicit finite differences.

Second order in time, fourth order in space, on a grid padded with sponge
layers (left/right/bottom) and a free surface on top.  The time loop keeps
the invariant "pc holds p(t_i) when panel row i is recorded", so sample i of
a trace is the pressure at exactly i*dt.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from gfi import _kernels as K

C_MAX = 0.85  # stability ceiling for vmax*dt*sqrt(2)/dx with this stencil


class SimulationError(RuntimeError):
    pass


def thread_count():
    """Worker cap from GFI_THREADS; GFI_DETERMINISTIC=1 forces serial."""
    if os.environ.get("GFI_DETERMINISTIC") == "1":
        return 1
    raw = os.environ.get("GFI_THREADS", "").strip()
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError(f"GFI_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


@dataclass
class SimConfig:
    nx: int = 32
    nz: int = 32
    dx: float = 10.0
    dt: float = 1e-3
    nt: int = 250
    f0: float = 15.0
    t0: float = None
    source_depth: int = 1
    receiver_depth: int = 1
    source_positions: list = field(default_factory=lambda: [0, 15, 31])
    receiver_positions: list = field(default_factory=lambda: list(range(32)))
    sponge_width: int = 20
    sponge_strength: float = 0.0035
    source_amplitude: float = 1.0

    def __post_init__(self):
        if self.t0 is None:
            self.t0 = 1.2 / self.f0
        self.validate()

    def validate(self):
        if self.dx <= 0 or self.dt <= 0 or self.f0 <= 0:
            raise ValueError("dx, dt and f0 must be positive")
        if self.nt < 1 or self.nx < 1 or self.nz < 1:
            raise ValueError("nt, nx and nz must be at least 1")
        if self.sponge_width < 0:
            raise ValueError("sponge_width must be >= 0")
        for name, row in (("source_depth", self.source_depth),
                          ("receiver_depth", self.receiver_depth)):
            if not 0 <= row < self.nz:
                raise ValueError(f"{name} {row} outside grid of {self.nz} rows")
        for name, cols in (("source_positions", self.source_positions),
                           ("receiver_positions", self.receiver_positions)):
            if not cols:
                raise ValueError(f"{name} is empty")
            for c in cols:
                if not 0 <= c < self.nx:
                    raise ValueError(f"{name} column {c} outside grid of "
                                     f"{self.nx} columns")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def desk_sim_config():
    return SimConfig()


def full_sim_config():
    return SimConfig(nx=70, nz=70, nt=1000,
                     source_positions=[int(c) for c in np.linspace(0, 69, 5)],
                     receiver_positions=list(range(70)))


def ricker(f0, t0, t):
    """Ricker wavelet: second derivative of a Gaussian, peak 1 at t = t0."""
    if f0 <= 0:
        raise ValueError(f"f0 must be positive, got {f0}")
    a = (np.pi * f0 * (np.asarray(t) - t0)) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def peak_time(trace, dt):
    """Arrival pick: |trace| peak location, refined by parabolic interpolation.

    Sub-sample refinement matters because moveout between receivers is
    compared against d/v at fractions of dt.
    """
    a = np.abs(np.asarray(trace, dtype=np.float64))
    i = int(np.argmax(a))
    if 0 < i < len(a) - 1:
        y0, y1, y2 = a[i - 1], a[i], a[i + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom != 0.0:
            return (i + 0.5 * (y0 - y2) / denom) * dt
    return i * dt


def cfl_number(cfg, vmax):
    return vmax * cfg.dt * math.sqrt(2.0) / cfg.dx


def check_cfl(cfg, vmax):
    """Raise if the explicit scheme would be unstable for this vmax."""
    if vmax <= 0:
        raise ValueError(f"vmax must be positive, got {vmax}")
    cfl = cfl_number(cfg, vmax)
    if cfl > C_MAX:
        raise SimulationError(f"CFL number {cfl:.4f} exceeds {C_MAX}; "
                              "reduce dt or refine the grid")


def _check_vmap(vmap, cfg):
    vmap = np.asarray(vmap)
    if vmap.ndim == 3 and vmap.shape[0] == 1:
        vmap = vmap[0]
    if vmap.shape != (cfg.nz, cfg.nx):
        raise ValueError(f"velocity map {vmap.shape} does not match grid "
                         f"({cfg.nz}, {cfg.nx})")
    if not np.all(np.isfinite(vmap)) or np.any(vmap <= 0):
        raise ValueError("velocity map must be positive and finite")
    return vmap.astype(np.float64)


def _sponge_profiles(cfg):
    """Separable Cerjan-style tapers for the padded grid (ghosts get 1)."""
    w = cfg.sponge_width
    nzp = cfg.nz + w + 4          # 2 ghost rows above and below
    nxp = cfg.nx + 2 * w + 4
    rows = np.ones(nzp)
    cols = np.ones(nxp)
    d = np.arange(1, w + 1, dtype=np.float64)
    taper = np.exp(-(cfg.sponge_strength * d) ** 2)
    if w:
        rows[2 + cfg.nz:2 + cfg.nz + w] = taper
        cols[2 + w - 1:1:-1] = taper
        cols[2 + w + cfg.nx:2 + w + cfg.nx + w] = taper
    return np.outer(rows, cols)


def _padded_coef(vmap, cfg):
    w = cfg.sponge_width
    vp = np.pad(vmap, ((0, w), (w, w)), mode="edge")
    vp = np.pad(vp, 2, mode="edge")
    return (vp * cfg.dt / cfg.dx) ** 2


def simulate_shot(vmap, source_index, cfg, with_stats=False):
    """Propagate one source and record a (nt, R) pressure panel.

    with_stats additionally returns {'peak_abs': max |field| over the run}.
    """
    vmap = _check_vmap(vmap, cfg)
    check_cfl(cfg, float(vmap.max()))
    if not 0 <= source_index < len(cfg.source_positions):
        raise IndexError(f"source index {source_index} out of range "
                         f"{len(cfg.source_positions)}")
    w = cfg.sponge_width
    coef = _padded_coef(vmap, cfg)
    taper = _sponge_profiles(cfg)
    src_r = 2 + cfg.source_depth
    src_c = 2 + w + cfg.source_positions[source_index]
    rec_r = 2 + cfg.receiver_depth
    rec_c = np.asarray([2 + w + c for c in cfg.receiver_positions])
    pc = np.zeros_like(coef)
    pp = np.zeros_like(coef)
    panel = np.zeros((cfg.nt, len(rec_c)), dtype=np.float64)
    amp = cfg.source_amplitude * cfg.dt ** 2
    peak = 0.0
    for it in range(cfg.nt):
        panel[it] = pc[rec_r, rec_c]
        pn = K.wave_step(pc, pp, coef)
        pn[src_r, src_c] += amp * float(ricker(cfg.f0, cfg.t0, it * cfg.dt))
        # free surface: pressure node on the top interior row,
        # antisymmetric ghosts above it
        pn[2, :] = 0.0
        pn[1, :] = -pn[3, :]
        pn[0, :] = -pn[4, :]
        pn *= taper
        pc *= taper
        pk = float(np.abs(pn).max())
        if not math.isfinite(pk):
            raise SimulationError(f"non-finite field at step {it} "
                                  f"(source {source_index})")
        peak = max(peak, pk)
        pp, pc = pc, pn
    out = panel.astype(np.float32)
    if with_stats:
        return out, {"peak_abs": peak}
    return out


def simulate_survey(vmap, cfg):
    """Run every source and stack the panels into an (S, nt, R) cube."""
    n_src = len(cfg.source_positions)

    def run(i):
        try:
            return simulate_shot(vmap, i, cfg)
        except SimulationError as exc:
            raise SimulationError(f"source {i}: {exc}") from exc

    workers = min(thread_count(), n_src)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            panels = list(pool.map(run, range(n_src)))
    else:
        panels = [run(i) for i in range(n_src)]
    return np.stack(panels)

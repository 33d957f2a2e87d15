"""Acceptance suite: one test per criterion, summarized at end of run.

Each test prints nothing on success; the conftest terminal-summary hook
emits one PASS/FAIL line per criterion with the measured margin.
"""

import filecmp
import os
import time

import numpy as np
import pytest

from gfi import cli, datagen, metrics, models, sim, training
from gfi.models import CouplingTranslator, build_model
from gfi.sim import SimConfig
from gfi.tensor import Tensor
from gfi.training import LossSpec, TrainConfig

import gradcheck_cases
from conftest import DESK_P_SHAPE, DESK_V_SHAPE, note_criterion

LATENT = models.desk_latent()


# -------------------------------------------------------------------------

def test_criterion_01_gradcheck_suite():
    """Every layer kind: autodiff vs central differences, f64, < 1e-6."""
    t0 = time.monotonic()
    assert len(gradcheck_cases.CASES) >= 20
    worst = 0.0
    for name, builder in gradcheck_cases.CASES:
        func, inputs = builder()
        assert all(t.dtype == np.float64 for t in inputs), name
        err = gradcheck_cases.T.gradcheck(func, inputs)
        assert err < 1e-6, f"{name}: {err:.3e}"
        worst = max(worst, err)
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0
    note_criterion(1, "gradcheck suite",
                   f"{len(gradcheck_cases.CASES)} configs, worst "
                   f"{worst:.2e}, {elapsed:.1f}s")


def test_criterion_02_invertibility_suite():
    """inverse(forward(z)) returns z within dtype-dependent bounds."""
    worst = {np.float32: 0.0, np.float64: 0.0}
    bound = {np.float32: 1e-5, np.float64: 1e-10}
    for dtype in (np.float32, np.float64):
        for n_blocks in (1, 2, 4, 8):
            tr = CouplingTranslator(
                LATENT, np.random.default_rng(100 + n_blocks),
                n_blocks=n_blocks, dtype=dtype, zero_init=False)
            z = np.random.default_rng(n_blocks) \
                .standard_normal((100,) + LATENT).astype(dtype)
            back = models.coupling_inverse(tr, models.coupling_forward(tr, z))
            err = float(np.abs(back - z).max())
            assert err < bound[dtype], f"{n_blocks} blocks, {dtype}: {err:.3e}"
            worst[dtype] = max(worst[dtype], err)

    # zero-initialized subnets: the translator is the identity, exactly
    tr = CouplingTranslator(LATENT, np.random.default_rng(0), n_blocks=4)
    z = np.random.default_rng(1).standard_normal((100,) + LATENT) \
        .astype(np.float32)
    assert np.array_equal(models.coupling_forward(tr, z), z)
    assert np.array_equal(models.coupling_inverse(tr, z), z)

    note_criterion(2, "invertibility suite",
                   f"blocks 1/2/4/8 x 100 latents: f32 worst "
                   f"{worst[np.float32]:.2e} (<1e-5), f64 worst "
                   f"{worst[np.float64]:.2e} (<1e-10), zero-init exact")


def test_criterion_03_physics_oracle():
    t0 = time.monotonic()

    # first arrivals: moveout between a far-field reference receiver and
    # five farther offsets matches d/v to a fraction of a sample
    v0 = 1500.0
    cfg = SimConfig(nx=96, nz=64, dx=10.0, dt=1e-3, nt=600,
                    source_depth=32, receiver_depth=32,
                    source_positions=[8], receiver_positions=list(range(96)),
                    sponge_width=20)
    vmap = np.full((64, 96), v0, dtype=np.float32)
    panel = sim.simulate_shot(vmap, 0, cfg)
    ref_col = 22  # far field, clear of the side absorbing layer
    t_ref = sim.peak_time(panel[:, ref_col], cfg.dt)
    worst_lag = 0.0
    for sep in (10, 20, 30, 40, 50):
        t_far = sim.peak_time(panel[:, ref_col + sep], cfg.dt)
        predicted = sep * cfg.dx / v0
        lag = abs((t_far - t_ref) - predicted)
        assert lag < 2.0 * cfg.dt, f"offset {sep}: lag {lag / cfg.dt:.2f} dt"
        worst_lag = max(worst_lag, lag)

    # reciprocity in a laterally varying medium; endpoints sit an integer
    # number of sine periods apart so their local velocities agree and the
    # swapped traces are directly comparable
    x = np.arange(96)
    z = np.arange(64)[:, None]
    vmap2 = (1800.0 + 250.0 * np.sin(2 * np.pi * x / 11.0)
             + 4.0 * z).astype(np.float32)
    a, b = 20, 75
    cfg_ab = SimConfig(**{**cfg.__dict__, "source_positions": [a],
                          "receiver_positions": [b]})
    cfg_ba = SimConfig(**{**cfg.__dict__, "source_positions": [b],
                          "receiver_positions": [a]})
    t_ab = sim.simulate_shot(vmap2, 0, cfg_ab)[:, 0]
    t_ba = sim.simulate_shot(vmap2, 0, cfg_ba)[:, 0]
    recip = float(np.abs(t_ab - t_ba).max() / np.abs(t_ab).max())
    assert recip < 1e-4

    # source linearity: doubling the amplitude doubles normal-range samples
    # bit for bit (subnormal pre-arrival dust is below the f32 normal range)
    desk = sim.desk_sim_config()
    flat = np.full((32, 32), 1500.0, dtype=np.float32)
    one = sim.simulate_shot(flat, 0, desk)
    desk2 = SimConfig(**{**desk.__dict__, "source_amplitude": 2.0})
    two = sim.simulate_shot(flat, 0, desk2)
    normal = np.abs(one) >= np.finfo(np.float32).tiny
    assert np.array_equal(two[normal], 2.0 * one[normal])
    assert np.abs(two[~normal]).max(initial=0.0) < 2.4e-38

    # unstable configurations are rejected before stepping
    with pytest.raises(sim.SimulationError, match="CFL"):
        sim.simulate_shot(np.full((32, 32), 6500.0, dtype=np.float32),
                          0, desk)

    elapsed = time.monotonic() - t0
    assert elapsed < 120.0
    note_criterion(3, "physics oracle",
                   f"moveout worst {worst_lag / cfg.dt:.2f} dt (<2), "
                   f"reciprocity {recip:.1e} (<1e-4), linearity exact, "
                   f"CFL gated, {elapsed:.1f}s")


def test_criterion_04_normalization_roundtrips():
    rng = np.random.default_rng(11)
    x = (rng.standard_normal((4, 3, 50, 8)) * 3.0).astype(np.float64)
    assert x.min() < 0
    worst = 0.0
    for scheme in datagen.SCHEMES:
        for arr in (x, x.astype(np.float32)):
            stats = datagen.compute_stats(arr, scheme)
            back = datagen.unnormalize(datagen.normalize(arr, stats), stats)
            rel = float(np.abs(back - arr).max() / np.abs(arr).max())
            assert rel < 1e-6, f"{scheme}: {rel:.3e}"
            worst = max(worst, rel)

    const = np.full((3, 4), 2.5)
    for scheme in datagen.SCHEMES:
        stats = datagen.compute_stats(const, scheme)
        with pytest.raises(ValueError, match="degenerate"):
            datagen.normalize(const, stats)

    note_criterion(4, "normalization roundtrips",
                   f"3 schemes x f32/f64 worst rel {worst:.2e} (<1e-6), "
                   f"degenerate stats rejected")


def _ssim_bruteforce(a, b, dynamic_range=1.0):
    """Independent per-window SSIM: explicit loops, definitional variance."""
    g = np.exp(-((np.arange(11) - 5.0) ** 2) / (2.0 * 1.5 ** 2))
    w = np.outer(g, g)
    w /= w.sum()
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    h, wd = a.shape
    vals = []
    for i in range(h - 10):
        for j in range(wd - 10):
            pa = a[i:i + 11, j:j + 11]
            pb = b[i:i + 11, j:j + 11]
            mu_a = (w * pa).sum()
            mu_b = (w * pb).sum()
            va = (w * (pa - mu_a) ** 2).sum()
            vb = (w * (pb - mu_b) ** 2).sum()
            cov = (w * (pa - mu_a) * (pb - mu_b)).sum()
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
    return min(1.0, float(np.mean(vals)))


def test_criterion_05_ssim_oracle():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(20):
        a = rng.uniform(size=(16, 16))
        b = np.clip(a + rng.standard_normal((16, 16))
                    * rng.uniform(0.01, 0.5), 0.0, 1.0)
        diff = abs(metrics.ssim(a, b) - _ssim_bruteforce(a, b))
        assert diff < 1e-6
        worst = max(worst, diff)
    img = rng.uniform(size=(16, 16))
    assert metrics.ssim(img, img) == 1.0
    sym = abs(metrics.ssim(a, b) - metrics.ssim(b, a))
    assert sym < 1e-12
    note_criterion(5, "ssim oracle",
                   f"20 pairs, worst |impl-bruteforce| {worst:.2e} (<1e-6), "
                   f"self 1.0, symmetry {sym:.1e}")


def test_criterion_06_overfit_smoke(ds_overfit):
    t0 = time.monotonic()
    m = build_model("latent-unet-small", DESK_V_SHAPE, DESK_P_SHAPE,
                    train_mode="inverse", seed=0)
    cfg = TrainConfig(epochs=300, batch_size=4, mode="inverse", seed=0,
                      val_fraction=0.0)
    _, hist = training.train(m, ds_overfit, cfg)
    losses = hist.column("loss_total")
    ratio = min(losses) / losses[0]
    elapsed = time.monotonic() - t0
    assert ratio < 0.10, f"best train MAE is {ratio:.1%} of epoch 1"
    assert elapsed < 600.0
    note_criterion(6, "overfit smoke",
                   f"train MAE down to {ratio:.1%} of epoch 1 "
                   f"(<10%) in {elapsed:.0f}s")


def test_criterion_07_joint_training(ds_xnet, tmp_path):
    spec = LossSpec("mse")

    # at init, the forward loss alone must already reach the shared
    # translator's parameters
    m0 = build_model("invertible-xnet", DESK_V_SHAPE, DESK_P_SHAPE, seed=0)
    v_raw, p_raw = ds_xnet.train_arrays()
    vn = datagen.normalize(v_raw[:8], ds_xnet.stats("velocity"))
    pn = datagen.normalize(p_raw[:8], ds_xnet.stats("waveform"))
    lf = training.loss(m0.forward_t(Tensor(vn.astype(np.float32))),
                       pn.astype(np.float32), spec)
    m0.zero_grad()
    lf.backward()
    gsq = 0.0
    for _, p in m0.translator_params():
        if p.grad is not None:
            gsq += float((p.grad.astype(np.float64) ** 2).sum())
    gnorm = float(np.sqrt(gsq))
    assert gnorm > 0.0

    m = build_model("invertible-xnet", DESK_V_SHAPE, DESK_P_SHAPE, seed=0)
    cfg = TrainConfig(epochs=60, batch_size=8, lr0=2e-3, mode="joint",
                      seed=0, val_fraction=0.1, loss=spec)
    out = tmp_path / "xnet"
    _, hist = training.train(m, ds_xnet, cfg, out_dir=out)
    lf_col = hist.column("loss_forward")
    li_col = hist.column("loss_inverse")
    rf = lf_col[-1] / lf_col[0]
    ri = li_col[-1] / li_col[0]
    assert rf <= 0.70, f"forward loss only fell to {rf:.1%}"
    assert ri <= 0.70, f"inverse loss only fell to {ri:.1%}"

    # one checkpoint file serves both directions
    loaded, _ = models.load_checkpoint(out / "checkpoint.ckpt")
    wf = models.predict_forward(loaded, vn[0].astype(np.float32))
    vel = models.predict_inverse(loaded, pn[0].astype(np.float32))
    assert wf.shape == DESK_P_SHAPE
    assert vel.shape == DESK_V_SHAPE
    assert np.array_equal(wf, models.predict_forward(
        m, vn[0].astype(np.float32)))

    note_criterion(7, "joint training",
                   f"loss drops: forward to {rf:.1%}, inverse to {ri:.1%} "
                   f"(<=70%), init translator grad norm {gnorm:.1e}, "
                   f"one checkpoint serves both directions")


def test_criterion_08_two_stage_regime(ds_xnet):
    def run(epochs):
        m = build_model("auto-linear", DESK_V_SHAPE, DESK_P_SHAPE, seed=0)
        cfg = TrainConfig(epochs=epochs, batch_size=8, stage1_epochs=30,
                          mode="reconstruct-then-translate", seed=0,
                          val_fraction=0.1, loss=LossSpec("mse"))
        return training.train(m, ds_xnet, cfg)

    m_short, _ = run(31)
    m_long, hist = run(50)

    # stage 1 is seed-identical across runs; 1 vs 20 stage-2 epochs must
    # leave every encoder/decoder parameter byte-identical
    pairs_short = m_short.pair_params()
    pairs_long = m_long.pair_params()
    assert len(pairs_short) == len(pairs_long) > 0
    for (na, pa), (nb, pb) in zip(pairs_short, pairs_long):
        assert na == nb
        assert pa.data.tobytes() == pb.data.tobytes(), na
    moved = any(not np.array_equal(a.data, b.data)
                for (_, a), (_, b) in zip(m_short.translator_params(),
                                          m_long.translator_params()))
    assert moved, "stage 2 never trained the translator"

    recon = hist.column("loss_recon")
    ratio = recon[29] / recon[0]
    assert ratio <= 0.50, f"stage-1 reconstruction only fell to {ratio:.1%}"
    assert recon[30] is None

    note_criterion(8, "two-stage regime",
                   f"pair params byte-identical across 1 vs 20 stage-2 "
                   f"epochs, stage-1 recon to {ratio:.1%} (<=50%)")


def test_criterion_09_cycle_loss(ds_xnet):
    spec = LossSpec("mse")

    m = build_model("invertible-xnet", DESK_V_SHAPE, DESK_P_SHAPE, seed=0,
                    train_mode="joint+cycle")
    cfg = TrainConfig(epochs=40, batch_size=8, mode="joint+cycle", seed=0,
                      unpaired=True, val_fraction=0.1, loss=spec)
    _, hist = training.train(m, ds_xnet, cfg)
    cyc = hist.column("loss_cycle")
    ratio = cyc[-1] / cyc[0]
    assert ratio <= 0.70, f"cycle loss only fell to {ratio:.1%}"
    assert hist.column("loss_forward") == [None] * 40
    assert hist.column("loss_inverse") == [None] * 40

    # paired joint+cycle: the combined scalar must equal the f32 sum of its
    # three parts, in training precision and association, at every step
    m2 = build_model("invertible-xnet", DESK_V_SHAPE, DESK_P_SHAPE, seed=1)
    v_raw, p_raw = ds_xnet.train_arrays()
    vn = datagen.normalize(v_raw, ds_xnet.stats("velocity")) \
        .astype(np.float32)
    pn = datagen.normalize(p_raw, ds_xnet.stats("waveform")) \
        .astype(np.float32)
    from gfi import optim
    opt = optim.Adam(m2.named_params(), lr=2e-3)
    exact_steps = 0
    for step in range(8):
        ids = slice(step * 8, step * 8 + 8)
        total, lf, li, lc = training.combined_loss(
            m2, Tensor(vn[ids]), Tensor(pn[ids]), spec)
        parts = np.float32(np.float32(np.float32(lf.item())
                                      + np.float32(li.item()))
                           + np.float32(lc.item()))
        assert float(parts) == total.item(), f"step {step}"
        exact_steps += 1
        m2.zero_grad()
        total.backward()
        opt.step()

    note_criterion(9, "cycle loss",
                   f"unpaired cycle to {ratio:.1%} (<=70%), supervised "
                   f"terms absent, combined == Lf+Li+Lc exactly on "
                   f"{exact_steps}/8 steps")


def test_criterion_10_ablation_harness(ds_small, tmp_path):
    out = tmp_path / "ablation.csv"
    rc = cli.main(["ablate-latent", "--dataset", str(ds_small.root),
                   "--sizes", "8,16,32", "--epochs", "2",
                   "--batch-size", "4", "--val-fraction", "0.25",
                   "--out", str(out)])
    assert rc == 0
    import csv as csvmod
    rows = list(csvmod.DictReader(open(out)))
    assert len(rows) == 6
    seen = {(r["latent"], r["skip"]) for r in rows}
    assert seen == {(s, k) for s in ("8", "16", "32") for k in ("0", "1")}
    for r in rows:
        assert int(r["params"]) > 0
        assert np.isfinite(float(r["final_loss"]))
        assert np.isfinite(float(r["val_mae"]))
    note_criterion(10, "ablation harness",
                   "sizes {8,16,32} x skip on/off: 6 rows, losses and "
                   "validation metrics all finite")


def test_criterion_11_zero_shot_grid(ds_small, ds_curve, tmp_path):
    entries = []
    for tag, ds in (("flat", ds_small), ("curve", ds_curve)):
        m = build_model("latent-unet-small", DESK_V_SHAPE, DESK_P_SHAPE,
                        train_mode="inverse", seed=0)
        cfg = TrainConfig(epochs=2, batch_size=4, mode="inverse", seed=0,
                          val_fraction=0.0)
        training.train(m, ds, cfg, out_dir=tmp_path / tag)
        loaded, header = models.load_checkpoint(
            tmp_path / tag / "checkpoint.ckpt")
        entries.append((loaded, header["norm"], f"ck-{tag}"))

    grid = metrics.zero_shot_grid(entries, [ds_small, ds_curve], "inverse")
    worst = 0.0
    for i, (mdl, norm, _) in enumerate(entries):
        ds = (ds_small, ds_curve)[i]
        standalone = metrics.evaluate(mdl, ds, "inverse", norm=norm)
        for key in metrics.AGGREGATE_KEYS:
            diff = abs(grid.cells[i][i][key] - standalone.aggregates[key])
            assert diff <= 1e-9
            worst = max(worst, diff)

    diff_grid = metrics.grid_difference(grid, grid)
    assert all(v == 0.0 for row in diff_grid.cells
               for cell in row for v in cell.values())

    note_criterion(11, "zero-shot grid",
                   f"2 checkpoints x 2 families; diagonal vs evaluate() "
                   f"worst {worst:.1e} (<=1e-9), self-difference all zero")


def test_criterion_12_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("GFI_DETERMINISTIC", "1")
    produced = []
    for run in ("a", "b"):
        root = tmp_path / run
        args = [
            ["gen-data", "--family", "flat", "--train", "4", "--test", "1",
             "--seed", "7", "--out", str(root / "ds")],
            ["train", "--dataset", str(root / "ds"),
             "--model", "latent-unet-small", "--mode", "inverse",
             "--epochs", "2", "--batch-size", "4", "--val-fraction", "0.25",
             "--out", str(root / "run")],
            ["eval", "--checkpoint", str(root / "run" / "checkpoint.ckpt"),
             "--dataset", str(root / "ds"),
             "--direction", "inverse", "--out", str(root / "report.csv")],
        ]
        for argv in args:
            assert cli.main(argv) == 0
        produced.append(root)

    a, b = produced
    rel_files = sorted(os.path.join(dp, f)[len(str(a)) + 1:]
                       for dp, _, fs in os.walk(a) for f in fs)
    assert rel_files
    mismatched = [f for f in rel_files
                  if not filecmp.cmp(a / f, b / f, shallow=False)]
    assert mismatched == []
    note_criterion(12, "determinism",
                   f"{len(rel_files)} artifacts byte-identical across "
                   f"rerun (datasets, checkpoints, history, report)")

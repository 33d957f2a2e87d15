"""Command-line front end.

Exit codes: 0 success, 1 failed run (instability, divergence, bad data),
2 usage errors (unknown flags, missing paths, malformed values).
"""

import argparse
import csv
import dataclasses
import os
import sys

from gfi import datagen, gft, metrics, models, render, sim, training


class UsageError(Exception):
    pass


PRESETS = ("desk", "full")


def _preset_sim(name):
    return sim.desk_sim_config() if name == "desk" else sim.full_sim_config()


def _preset_extent(name):
    return 32 if name == "desk" else 70


def _apply_overrides(cfg, pairs):
    """Rebuild a SimConfig with key=value overrides applied on top."""
    d = dataclasses.asdict(cfg)
    for pair in pairs or []:
        if "=" not in pair:
            raise UsageError(f"override {pair!r} is not key=value")
        key, _, value = pair.partition("=")
        if key not in d:
            raise UsageError(f"unknown simulation field {key!r}")
        try:
            if isinstance(d[key], list):
                d[key] = [int(x) for x in value.split(",")]
            elif isinstance(d[key], int):
                d[key] = int(value)
            else:
                d[key] = float(value)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from exc
    try:
        return sim.SimConfig(**d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid simulation config: {exc}") from exc


def _need_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def _open_dataset(path):
    if not os.path.isfile(os.path.join(path, "manifest.json")):
        raise UsageError(f"dataset not found: {path} (no manifest.json)")
    return datagen.Dataset(path)


# ---- subcommands --------------------------------------------------------

def cmd_gen_data(args):
    spec = datagen.family_spec(args.family, args.complexity, seed=args.seed,
                               height=_preset_extent(args.preset),
                               width=_preset_extent(args.preset))
    cfg = _apply_overrides(_preset_sim(args.preset), args.set)
    ds = datagen.build_dataset(spec, args.train, args.test, cfg, args.out,
                               v_scheme=args.v_norm, p_scheme=args.p_norm)
    shapes = ds.manifest["shapes"]
    print(f"wrote {ds.name}: {args.train} train + {args.test} test samples "
          f"to {args.out}")
    print(f"velocity {tuple(shapes['velocity'])}, "
          f"waveform {tuple(shapes['waveform'])}")
    return 0


def cmd_simulate(args):
    _need_file(args.velocity, "velocity file")
    cfg = _apply_overrides(_preset_sim(args.preset), args.set)
    vol = gft.load(args.velocity)
    if vol.ndim == 4:
        vol = vol[args.index]
    if vol.ndim == 3:
        vol = vol[0]
    survey = sim.simulate_survey(vol, cfg)
    gft.save(args.out, survey)
    print(f"wrote survey {survey.shape} to {args.out}")
    return 0


def _default_latent(ds):
    h, w = ds.manifest["shapes"]["velocity"][1:]
    return models.full_latent() if min(h, w) >= 70 else models.desk_latent()


def _parse_latent(args, ds):
    if args.latent:
        parts = args.latent.split(",")
        if len(parts) != 3:
            raise UsageError("--latent wants C,H,W")
        return tuple(int(p) for p in parts)
    if args.latent_size:
        return (16, args.latent_size, args.latent_size)
    return _default_latent(ds)


def cmd_train(args):
    ds = _open_dataset(args.dataset)
    latent = _parse_latent(args, ds)
    mode = args.mode or models.allowed_modes(args.model)[0]
    shapes = ds.manifest["shapes"]
    m = models.build_model(args.model, tuple(shapes["velocity"]),
                           tuple(shapes["waveform"]), latent,
                           train_mode=mode, seed=args.seed,
                           skip_connections=not args.no_skip,
                           n_blocks=args.blocks)
    interval = args.decay_interval
    if interval is None:
        interval = 150 if min(shapes["velocity"][1:]) >= 70 else 100
    stage1 = args.stage1_epochs
    if mode == "reconstruct-then-translate" and not stage1:
        stage1 = max(1, args.epochs // 2)
    cfg = training.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr0=args.lr0,
        decay=args.decay, decay_interval=interval,
        loss=training.LossSpec(args.loss, args.w_mae, args.w_mse),
        mode=mode, seed=args.seed, stage1_epochs=stage1,
        unpaired=args.unpaired, val_fraction=args.val_fraction)
    _, history = training.train(m, ds, cfg, out_dir=args.out)
    last = history.rows[-1]
    counts = m.param_counts()
    print(f"model {args.model} ({counts['total']} params: "
          f"pair_v {counts['pair_v']}, pair_p {counts['pair_p']}, "
          f"translator {counts['translator']})")
    print(f"trained {cfg.epochs} epochs in mode {mode}; "
          f"final loss {last['loss_total']:.6g}")
    print(f"checkpoint: {os.path.join(args.out, 'checkpoint.ckpt')}")
    return 0


def cmd_eval(args):
    _need_file(args.checkpoint, "checkpoint")
    ds = _open_dataset(args.dataset)
    m, header = models.load_checkpoint(args.checkpoint)
    rep = metrics.evaluate(m, ds, args.direction, norm=header.get("norm"),
                           checkpoint_id=args.checkpoint)
    if args.out:
        rep.to_csv(args.out)
    agg = rep.aggregates
    print(f"{args.direction} on {ds.name}: mae {agg['mae']:.6g} "
          f"mse {agg['mse']:.6g} ssim {agg['ssim']:.6g}")
    return 0


def _load_entries(paths):
    entries = []
    for p in paths:
        _need_file(p, "checkpoint")
        m, header = models.load_checkpoint(p)
        entries.append((m, header.get("norm"), p))
    return entries


def cmd_zero_shot(args):
    datasets = [_open_dataset(d) for d in args.datasets]
    grid = metrics.zero_shot_grid(_load_entries(args.checkpoints), datasets,
                                  args.direction)
    grid.to_csv(args.out)
    print(f"wrote {len(grid.row_ids)}x{len(grid.col_ids)} grid to {args.out}")
    if args.baseline:
        base = metrics.zero_shot_grid(_load_entries(args.baseline), datasets,
                                      args.direction)
        diff = metrics.grid_difference(grid, base)
        diff.to_csv(args.diff_out)
        print(f"wrote difference grid to {args.diff_out}")
    return 0


def cmd_ablate_latent(args):
    ds = _open_dataset(args.dataset)
    try:
        sizes = [int(s) for s in args.sizes.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --sizes: {exc}") from exc
    shapes = ds.manifest["shapes"]
    rows = []
    for size in sizes:
        for skip in (True, False):
            m = models.build_model(args.model, tuple(shapes["velocity"]),
                                   tuple(shapes["waveform"]), (16, size, size),
                                   train_mode="inverse", seed=args.seed,
                                   skip_connections=skip)
            cfg = training.TrainConfig(epochs=args.epochs,
                                       batch_size=args.batch_size,
                                       lr0=args.lr0, mode="inverse",
                                       seed=args.seed,
                                       val_fraction=args.val_fraction)
            _, history = training.train(m, ds, cfg)
            last = history.rows[-1]
            rows.append({"latent": size, "skip": int(skip),
                         "params": m.param_counts()["total"],
                         "final_loss": last["loss_total"],
                         "val_mae": last["val_mae"],
                         "val_mse": last["val_mse"],
                         "val_ssim": last["val_ssim"]})
            print(f"latent {size} skip={skip}: loss {last['loss_total']:.6g}")
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v
                        for k, v in r.items()})
    print(f"wrote {len(rows)} ablation rows to {args.out}")
    return 0


def cmd_render(args):
    _need_file(args.input, "input file")
    arr = gft.load(args.input)
    if args.kind == "velocity":
        if arr.ndim == 4:
            arr = arr[args.index]
        out = render.render_velocity(arr, args.out)
        print(f"wrote {out}")
    else:
        if arr.ndim == 4:
            arr = arr[args.index]
        for p in render.render_waveform(arr, args.out):
            print(f"wrote {p}")
    return 0


# ---- parser -------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="gfi",
                                 description="acoustic survey simulation and "
                                             "latent translation models")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a paired dataset")
    p.add_argument("--family", required=True, choices=datagen.FAMILIES)
    p.add_argument("--complexity", default="A", choices=("A", "B"))
    p.add_argument("--preset", default="desk", choices=PRESETS)
    p.add_argument("--train", type=int, default=8)
    p.add_argument("--test", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--v-norm", default="minmax", choices=datagen.SCHEMES)
    p.add_argument("--p-norm", default="standardize", choices=datagen.SCHEMES)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("simulate", help="run a survey on a velocity file")
    p.add_argument("--velocity", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--preset", default="desk", choices=PRESETS)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True, choices=models.MODEL_NAMES)
    p.add_argument("--mode", choices=training.MODES)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr0", type=float, default=2e-3)
    p.add_argument("--decay", type=float, default=0.5)
    p.add_argument("--decay-interval", type=int)
    p.add_argument("--loss", default="mae", choices=training.LOSS_KINDS)
    p.add_argument("--w-mae", type=float, default=1.0)
    p.add_argument("--w-mse", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latent", help="C,H,W latent override")
    p.add_argument("--latent-size", type=int,
                   help="square latent extent at 16 channels")
    p.add_argument("--no-skip", action="store_true",
                   help="drop U-Net skip connections")
    p.add_argument("--blocks", type=int, default=4,
                   help="coupling blocks for invertible-xnet")
    p.add_argument("--stage1-epochs", type=int, default=0)
    p.add_argument("--unpaired", action="store_true")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--direction", default="inverse",
                   choices=models.DIRECTIONS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("zero-shot", help="cross-evaluate checkpoints on "
                                         "multiple datasets")
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--datasets", nargs="+", required=True)
    p.add_argument("--direction", default="inverse",
                   choices=models.DIRECTIONS)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", nargs="+",
                   help="second checkpoint set for a difference grid")
    p.add_argument("--diff-out", default="zero_shot_diff.csv")
    p.set_defaults(func=cmd_zero_shot)

    p = sub.add_parser("ablate-latent", help="sweep latent sizes and skips")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", default="latent-unet-small",
                   choices=models.MODEL_NAMES)
    p.add_argument("--sizes", default="8,16,32")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr0", type=float, default=2e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate_latent)

    p = sub.add_parser("render", help="render tensors to PPM/PGM images")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", required=True, choices=("velocity", "waveform"))
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

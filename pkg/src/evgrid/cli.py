"""Batch command-line front end.

Subcommands: gen, rayism, train, infer, eval, render. Every command is
reproducible from (config, seed) and echoes the effective configuration
into its output directory. Exit codes: 0 ok, 1 usage, 2 config, 3 runtime.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from evgrid import config as cfgmod
from evgrid.errors import ConfigError, DomainError, EvgridError
from evgrid.grid import read_grid, render_pgm, render_ppm, write_grid
from evgrid.net.train import mc_predict, train
from evgrid.net.unet import load_checkpoint
from evgrid.rayism import ray_ism_scene
from evgrid.scores import ScoreAccumulator, render_table
from evgrid.sim import corner_sensor_poses, detections_from_jsonl, load_manifest, write_dataset

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a JSON config document")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config value")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--threads", type=int, default=1, help="worker count (advisory)")

    parser = argparse.ArgumentParser(prog="evgrid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True)

    p = sub.add_parser("rayism", parents=[common], help="run Ray-ISM over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="train Soft-Net or Ev-Net")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=["soft", "ev"])

    p = sub.add_parser("infer", parents=[common], help="write predicted grids")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", required=True, choices=["soft", "ev", "ev-s"])
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", parents=[common], help="score prediction directories")
    p.add_argument("pred_dirs", nargs="+")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", parents=[common], help="render a grid file to PPM/PGM")
    p.add_argument("grid_file")
    p.add_argument("out_image")
    return parser


def _sample_ids(manifest: dict, split: str) -> list[str]:
    if split == "all":
        return sorted(sid for ids in manifest["splits"].values() for sid in ids)
    if split not in manifest["splits"]:
        raise ConfigError(f"unknown split {split!r}")
    return list(manifest["splits"][split])


def cmd_gen(args, cfg: dict) -> int:
    out = Path(args.out)
    cfgmod.echo_config(cfg, out)
    write_dataset(
        n_scenes=cfg["sim"]["n_scenes"],
        spec=cfgmod.grid_spec(cfg),
        out_dir=out,
        master_seed=cfg["master_seed"],
        cfg=cfgmod.sim_config(cfg),
        scene_params=cfgmod.scene_params(cfg),
    )
    return EXIT_OK


def cmd_rayism(args, cfg: dict) -> int:
    out = Path(args.out)
    cfgmod.echo_config(cfg, out)
    manifest = load_manifest(args.dataset)
    spec = cfgmod.grid_spec(cfg)
    rcfg = cfgmod.rayism_config(cfg)
    threshold = cfg["sim"]["dynamic_velocity_threshold"]
    for sid in _sample_ids(manifest, "all"):
        sdir = Path(args.dataset) / "samples" / sid
        ego = read_grid(sdir / "radar.grid").origin
        dets = detections_from_jsonl((sdir / "detections.jsonl").read_text())
        pred = ray_ism_scene(dets, corner_sensor_poses(ego), spec, rcfg, ego=ego,
                             dynamic_velocity_threshold=threshold)
        write_grid(out / f"{sid}.grid", pred)
    return EXIT_OK


def cmd_train(args, cfg: dict) -> int:
    out = Path(args.out)
    cfgmod.echo_config(cfg, out)
    tcfg = cfgmod.train_config(cfg, model=args.model)
    train(args.dataset, tcfg, out_dir=out)
    return EXIT_OK


def cmd_infer(args, cfg: dict) -> int:
    out = Path(args.out)
    cfgmod.echo_config(cfg, out)
    params, spec, _header = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.dataset)
    tcfg = cfgmod.train_config(cfg)
    from evgrid.grid import Grid2D

    for sid in _sample_ids(manifest, "all"):
        sdir = Path(args.dataset) / "samples" / sid
        radar = read_grid(sdir / "radar.grid")
        rng = np.random.default_rng([cfg["master_seed"], int(sid)])
        pred = mc_predict(params, spec, radar.data.astype(np.float32), tcfg.mc_samples,
                          args.mode, rng, percentile=tcfg.percentile)
        write_grid(out / f"{sid}.grid",
                   Grid2D(radar.spec, pred, channels=("b_f", "b_o", "u"), origin=radar.origin))
    return EXIT_OK


def cmd_eval(args, cfg: dict) -> int:
    out = Path(args.out)
    cfgmod.echo_config(cfg, out)
    manifest = load_manifest(args.dataset)
    ids = _sample_ids(manifest, cfg["eval"]["split"])
    tables = []
    for pred_dir in args.pred_dirs:
        pdir = Path(pred_dir)
        acc = ScoreAccumulator(conflict_guard=cfg["eval"]["conflict_guard"])
        for sid in ids:
            pred = read_grid(pdir / f"{sid}.grid").data
            sdir = Path(args.dataset) / "samples" / sid
            target = read_grid(sdir / "target.grid").data
            mask = read_grid(sdir / "mask.grid").data[0]
            acc.add(pred, target, mask)
        tables.append((pdir.name, acc.table()))
    text, csv_out = render_table(tables)
    (out / "scores.txt").write_text(text)
    (out / "scores.csv").write_text(csv_out)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_render(args, cfg: dict) -> int:
    grid = read_grid(args.grid_file)
    out = Path(args.out_image)
    if out.suffix == ".pgm" or grid.data.shape[0] == 1:
        blob = render_pgm(grid.data[0])
    else:
        blob = render_ppm(grid)
    out.write_bytes(blob)
    return EXIT_OK


_COMMANDS = {
    "gen": cmd_gen,
    "rayism": cmd_rayism,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "render": cmd_render,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return EXIT_OK
        return EXIT_USAGE
    try:
        cfg = cfgmod.load_config(args.config, args.overrides)
        if args.seed is not None:
            cfg["master_seed"] = args.seed
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvgridError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

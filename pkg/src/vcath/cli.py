"""Command-line driver.

Subcommands: ``phantom``, ``sdf``, ``register``, ``evaluate`` and
``config init``.  Exit codes: 0 success, 2 configuration error, 3 data
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import config as config_mod
from . import io
from .config import PipelineConfig
from .errors import ConfigError, DataError, VcathError
from .pipeline import (
    BUNDLE_FILES,
    RegistrationInputs,
    bundle_manifest,
    evaluate_frames,
    make_phantom,
    read_frames_csv,
    read_landmarks,
    register,
    stage,
    write_result,
)
from .volume import SdfConvention, distance_transform, truncate

log = logging.getLogger("vcath")

SNAPSHOT = "config_snapshot.json"


def _load_config(args) -> PipelineConfig:
    cfg = config_mod.load(args.config) if args.config else PipelineConfig()
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        config_mod.set_value(cfg, key.strip(), value.strip())
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.paths.output = str(Path(args.out).resolve())
    return cfg


def _require(cfg: PipelineConfig, *names: str) -> List[Path]:
    out = []
    for n in names:
        v = getattr(cfg.paths, n)
        if v is None:
            raise ConfigError(f"paths.{n} is not set")
        p = Path(v)
        if not p.exists():
            raise ConfigError(f"paths.{n} does not exist: {p}")
        out.append(p)
    return out


def _snapshot(cfg: PipelineConfig, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    snap = out_dir / SNAPSHOT
    snap.write_text(cfg.dumps())
    return snap


def cmd_config_init(args) -> int:
    text = PipelineConfig().dumps()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_phantom(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.paths.output)
    if not args.force:
        clash = [out / f for f in BUNDLE_FILES.values() if (out / f).exists()]
        if clash:
            raise ConfigError(f"{clash[0]} exists; use --force to overwrite")
    files = make_phantom(cfg, out)
    manifest = bundle_manifest(files)
    io.write_json(out / "manifest.json", manifest)
    _snapshot(cfg, out)
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def cmd_sdf(args) -> int:
    cfg = _load_config(args)
    if args.mask:
        cfg.paths.mask = str(Path(args.mask).resolve())
    (mask_path,) = _require(cfg, "mask")
    with stage("sdf"):
        mask = io.read_volume(mask_path)
        sdf = truncate(distance_transform(mask), cfg.sdf.tau)
    out = Path(args.output) if args.output else Path(cfg.paths.output) / (mask_path.stem + "_sdf.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_volume(out, sdf, SdfConvention(truncation=cfg.sdf.tau))
    _snapshot(cfg, out.parent)
    print(out)
    return 0


def _apply_bundle(cfg: PipelineConfig, bundle: Optional[str]):
    if not bundle:
        return
    b = Path(bundle).resolve()
    cfg.paths.ct_lumen = str(b / BUNDLE_FILES["lumen_ct"])
    cfg.paths.ct_wall = str(b / BUNDLE_FILES["wall_ct"])
    cfg.paths.oct_lumen = str(b / BUNDLE_FILES["oct_lumen"])
    cfg.paths.oct_wall = str(b / BUNDLE_FILES["oct_wall"])
    cfg.paths.centerline = str(b / BUNDLE_FILES["centerline"])
    cfg.paths.landmarks = str(b / BUNDLE_FILES["truth"])


def cmd_register(args) -> int:
    cfg = _load_config(args)
    _apply_bundle(cfg, args.bundle)
    if args.stage:
        cfg.stage = args.stage
    if args.epochs is not None:
        cfg.nonrigid.epochs = args.epochs
    cfg.validate()
    ct_l, ct_w, cl, oct_l, oct_w = _require(cfg, "ct_lumen", "ct_wall", "centerline", "oct_lumen", "oct_wall")
    with stage("read_inputs"):
        inputs = RegistrationInputs(
            io.read_volume(ct_l), io.read_volume(ct_w), io.read_centerline(cl),
            io.read_pullback(oct_l), io.read_pullback(oct_w),
        )

    def progress(it, L):
        if it % 25 == 0:
            log.info("iteration %d loss %.6g", it, L)

    result = register(inputs, cfg, callback=progress)
    out = Path(cfg.paths.output)
    files = write_result(out, result)
    _snapshot(cfg, out)
    summary = {"crop": result.crop.to_dict(), "rigid_angle_deg": round(float(result.to_dict()["rigid_angle_deg"]), 6),
               "rigid_loss": result.rigid_loss, "best_loss": result.best_loss,
               "files": sorted(p.name for p in files.values())}
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    from .metrics import write_curve_csv, write_landmark_csv, write_summary_csv
    from .plotting import plot_loss_history, plot_mismatch_curves, plot_mismatch_distributions

    cfg = _load_config(args)
    _apply_bundle(cfg, args.bundle)
    if args.result:
        cfg.paths.result = str(Path(args.result).resolve())
    if args.landmarks:
        cfg.paths.landmarks = str(Path(args.landmarks).resolve())
    res_dir, lm_path = _require(cfg, "result", "landmarks")
    with stage("evaluate"):
        landmarks, gt, truth = read_landmarks(lm_path)
        frames = {}
        offset = 0
        for name, fname in (("rigid", "frames_rigid.csv"), ("nonrigid", "frames.csv")):
            p = res_dir / fname
            if not p.exists():
                raise DataError(f"missing {p}")
            frames[name], offset = read_frames_csv(p)
        result = io.read_json(res_dir / "result.json")
        if "params" not in result:
            frames.pop("nonrigid")
        mm = cfg.metrics.mm_per_frame or float(truth.get("frame_spacing", cfg.grid.frame_spacing))
        reports = evaluate_frames(frames, offset, landmarks, gt, mm, cfg.metrics.gate_frames)
    out = Path(cfg.paths.output)
    out.mkdir(parents=True, exist_ok=True)
    write_landmark_csv(out / "landmarks.csv", reports)
    write_curve_csv(out / "curve_frames.csv", reports, "frame")
    write_curve_csv(out / "curve_angles.csv", reports, "angle")
    write_summary_csv(out / "summary.csv", reports)
    plot_mismatch_curves(out / "mismatch_curves.png", reports)
    plot_mismatch_distributions(out / "mismatch_distributions.png", reports)
    loss_csv = res_dir / "loss.csv"
    if loss_csv.exists():
        with open(loss_csv, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        vals = [float(r[1]) for r in rows]
        plot_loss_history(out / "loss.png", vals[1:], vals[0])
    _snapshot(cfg, out)
    for name, rep in reports.items():
        ang = "n/a" if rep.angle is None else f"{rep.angle['mean']:.1f} deg (n={rep.angle['n']})"
        print(f"{name}: frame mismatch {rep.frame['mean']:.2f} frames, angle mismatch {ang}, "
              f"within 4 frames {rep.within_frames(4):.1f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="JSON config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value, e.g. nonrigid.epochs=50")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vcath", description="Virtual-catheter pullback-to-volume registration.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common], help="generate a synthetic phantom bundle")
    p.add_argument("-o", "--out", help="bundle directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true", help="overwrite existing bundle files")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("sdf", parents=[common], help="convert a binary mask volume to a truncated SDF")
    p.add_argument("--mask", help="mask volume header (.json)")
    p.add_argument("-o", "--output", help="output volume header (.json)")
    p.set_defaults(func=cmd_sdf)

    p = sub.add_parser("register", parents=[common], help="run rigid and non-rigid registration")
    p.add_argument("-b", "--bundle", help="phantom bundle directory (sets all input paths)")
    p.add_argument("-o", "--out", help="output directory")
    p.add_argument("--stage", choices=config_mod.STAGES)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("evaluate", parents=[common], help="landmark mismatch tables and figures")
    p.add_argument("-b", "--bundle", help="phantom bundle directory (sets the landmarks path)")
    p.add_argument("-r", "--result", help="registration output directory")
    p.add_argument("-l", "--landmarks", help="truth/landmarks JSON")
    p.add_argument("-o", "--out", help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("config", help="configuration helpers")
    csub = p.add_subparsers(dest="config_command", required=True)
    pi = csub.add_parser("init", help="print the full default configuration")
    pi.add_argument("-o", "--out", help="write to a file instead of stdout")
    pi.set_defaults(func=cmd_config_init)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except VcathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

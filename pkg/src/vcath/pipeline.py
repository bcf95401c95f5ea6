"""End-to-end registration flow and phantom bundles on disk."""

from __future__ import annotations

import contextlib
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from . import io
from .config import PipelineConfig
from .errors import DataError, VcathError
from .geometry import FrameSet, fit_centerline, init_frames
from .metrics import MismatchReport, landmark_mismatch, summarize
from .nonrigid import NonrigidProblem, OptimizerConfig, RegistrationResult, optimize
from .phantom import (
    Landmark3D,
    LandmarkSet,
    generate_distorted_pullback,
    generate_vessel,
    landmark_frames,
    suite_phantom,
)
from .rigid import area_vector, long_reg, rot_reg, thickness_matrix
from .transforms import SamplingGridSpec, virtual_catheter_sample
from .volume import PullbackGrid, SdfConvention, Volume3D

log = logging.getLogger(__name__)

BUNDLE_FILES = {
    "lumen_ct": "lumen_ct.json",
    "wall_ct": "wall_ct.json",
    "oct_lumen": "oct_lumen.json",
    "oct_wall": "oct_wall.json",
    "centerline": "centerline.json",
    "truth": "truth.json",
}


@contextlib.contextmanager
def stage(name: str):
    """Prefix library errors raised inside the block with the stage name."""
    try:
        yield
    except VcathError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


def optimizer_config(cfg: PipelineConfig) -> OptimizerConfig:
    n = cfg.nonrigid
    return OptimizerConfig(
        lr_long=n.lr_long, lr_rot=n.lr_rot, lr_trans=n.lr_trans, epochs=n.epochs,
        beta1=n.beta1, beta2=n.beta2, eps=n.eps, max_rel=n.max_rel,
        smooth_sigma=cfg.sdf.smooth_sigma, smooth_ksize=cfg.sdf.smooth_ksize,
        m_s=n.m_s, m_theta=n.m_theta, m_d=n.m_d, tau=cfg.sdf.tau, seed=cfg.seed,
    )


@dataclass
class RegistrationInputs:
    ct_lumen: Volume3D
    ct_wall: Volume3D
    centerline_points: np.ndarray
    oct_lumen: PullbackGrid
    oct_wall: PullbackGrid


def register(inputs: RegistrationInputs, cfg: PipelineConfig, callback=None) -> RegistrationResult:
    """Initial frames, virtual pullbacks, rigid crop and angle, then the
    non-rigid refinement (unless ``cfg.stage`` is rigid-only)."""
    oct_l, oct_w = inputs.oct_lumen, inputs.oct_wall
    if oct_l.data.shape != oct_w.data.shape:
        raise DataError("OCT lumen and wall pullbacks differ in shape")
    spec = SamplingGridSpec.like(oct_l)
    with stage("init_frames"):
        c = fit_centerline(inputs.centerline_points)
        n_ct = int(round(c.total_length / oct_l.frame_spacing)) + 1
        F_ori = init_frames(c, n_ct)
    with stage("virtual_catheter"):
        ct_l = virtual_catheter_sample(F_ori, inputs.ct_lumen, spec, oct_l.frame_spacing)
        ct_w = virtual_catheter_sample(F_ori, inputs.ct_wall, spec, oct_l.frame_spacing)
    with stage("long_reg"):
        crop = long_reg(area_vector(ct_l), area_vector(oct_l), cfg.rigid.min_overlap)
    with stage("rot_reg"):
        H_ct = thickness_matrix(ct_w.crop(crop.ct_start, crop.ct_end), cfg.rigid.gamma)
        H_oct = thickness_matrix(oct_w.crop(crop.oct_start, crop.oct_end), cfg.rigid.gamma)
        angle = rot_reg(H_ct, H_oct)
    log.info("rigid: crop %s, angle %.1f deg", crop, np.degrees(angle))
    opt = optimizer_config(cfg)
    with stage("nonrigid"):
        problem = NonrigidProblem.from_crop(c, F_ori, crop, inputs.ct_lumen, oct_l, opt, angle)
        p0 = problem.initial_params()
        rigid_frames, rigid_loss = problem.forward(p0)
        result = RegistrationResult(crop, angle, rigid_frames, rigid_frames, float(rigid_loss))
        if cfg.stage == "rigid-only":
            return result
        best, best_loss, best_epoch, initial, history, gaps = optimize(problem, callback=callback)
        frames, _ = problem.forward(best)
    result.frames = frames
    result.params = best
    result.loss_history = history
    result.s_min_gap = gaps
    result.best_epoch = best_epoch
    result.best_loss = best_loss
    return result


FRAME_COLUMNS = ["frame_id", "oct_frame", "s"] + [f"{v}{a}" for v in "RTUV" for a in "xyz"]


def write_frames_csv(path, F: FrameSet, oct_offset: int = 0) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FRAME_COLUMNS)
        for i in range(len(F)):
            vals = [F.s[i], *F.R[i], *F.T[i], *F.U[i], *F.V[i]]
            w.writerow([i, i + oct_offset] + [repr(float(v)) for v in vals])
    return path


def read_frames_csv(path):
    """Frames and the OCT index of the first frame."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read frames {path}: {exc}") from exc
    if not rows or rows[0] != FRAME_COLUMNS or len(rows) < 2:
        raise DataError(f"{path}: not a frames CSV")
    arr = np.array([[float(v) for v in r] for r in rows[1:]])
    F = FrameSet(arr[:, 3:6], arr[:, 6:9], arr[:, 9:12], arr[:, 12:15], arr[:, 2])
    return F, int(arr[0, 1])


def write_result(out_dir, result: RegistrationResult) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "result": io.write_json(out / "result.json", result.to_dict()),
        "frames": write_frames_csv(out / "frames.csv", result.frames, result.crop.oct_start),
        "frames_rigid": write_frames_csv(out / "frames_rigid.csv", result.rigid_frames, result.crop.oct_start),
    }
    if result.params is not None:
        with open(out / "loss.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "loss"])
            w.writerow([0, repr(result.rigid_loss)])
            for i, L in enumerate(result.loss_history, start=1):
                w.writerow([i, repr(float(L))])
        files["loss"] = out / "loss.csv"
    return files


def make_phantom(cfg: PipelineConfig, out_dir) -> Dict[str, Path]:
    """Generate the phantom described by ``cfg`` and write its bundle."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.phantom
    vessel_kw = dict(p.vessel)
    vessel_kw.setdefault("tau", cfg.sdf.tau)
    motion_kw = dict(p.motion)
    vspec, mspec = suite_phantom(
        cfg.seed, n_frames=p.n_frames, n_bifurcations=p.n_bifurcations,
        frame_spacing=cfg.grid.frame_spacing, motion_overrides=motion_kw, vessel_overrides=vessel_kw,
    )
    grid = SamplingGridSpec(cfg.grid.frame_shape, cfg.grid.in_plane_spacing)
    with stage("phantom"):
        vessel = generate_vessel(vspec)
        pull = generate_distorted_pullback(vessel, mspec, grid, cfg.grid.frame_spacing)
    conv = SdfConvention(truncation=cfg.sdf.tau)
    io.write_volume(out / BUNDLE_FILES["lumen_ct"], vessel.lumen, conv)
    io.write_volume(out / BUNDLE_FILES["wall_ct"], vessel.wall, conv)
    io.write_pullback(out / BUNDLE_FILES["oct_lumen"], pull.lumen)
    io.write_pullback(out / BUNDLE_FILES["oct_wall"], pull.wall)
    io.write_centerline(out / BUNDLE_FILES["centerline"], vessel.ct_centerline_points())
    truth = {
        "vessel": vspec.to_dict(),
        "motion": mspec.to_dict(),
        "landmarks_3d": [lm.to_dict() for lm in vessel.landmarks],
        "oct_landmarks": pull.gt_landmarks.to_dict(),
        **pull.truth,
    }
    io.write_json(out / BUNDLE_FILES["truth"], truth)
    return {k: out / v for k, v in BUNDLE_FILES.items()}


def bundle_manifest(files: Dict[str, Path]) -> dict:
    """Checksums of every artifact (and raw payload) in a bundle."""
    manifest = {}
    for name, path in files.items():
        entry = {"path": path.name, "sha256": io.sha256(path)}
        raw = path.with_suffix(".raw")
        if raw.exists():
            entry["payload"] = raw.name
            entry["payload_sha256"] = io.sha256(raw)
        manifest[name] = entry
    return manifest


def read_landmarks(path):
    """3D landmarks and the ground-truth pullback landmarks from a truth file."""
    d = io.read_json(path)
    try:
        lms = [Landmark3D.from_dict(x) for x in d["landmarks_3d"]]
        gt = LandmarkSet.from_dict(d["oct_landmarks"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: missing landmark data ({exc})") from exc
    if not lms:
        raise DataError(f"{path}: no landmarks")
    return lms, gt, d


def evaluate_frames(
    frames: Dict[str, FrameSet],
    oct_offset: int,
    landmarks,
    gt: LandmarkSet,
    mm_per_frame: float,
    gate_frames: float,
) -> Dict[str, MismatchReport]:
    """Landmark mismatch reports for each set of registered frames."""
    reports = {}
    for name, F in frames.items():
        pred = landmark_frames(F, landmarks, oct_offset)
        reports[name] = summarize(landmark_mismatch(pred, gt), mm_per_frame, gate_frames)
    return reports

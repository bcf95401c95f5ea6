"""Bifurcation-landmark evaluation: frame and angle mismatches, gating,
matched-fraction curves and summary tables."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import DataError
from .phantom import LandmarkSet

DEFAULT_GATE_FRAMES = 6
FRAME_THRESHOLDS = tuple(range(0, 21))
ANGLE_THRESHOLDS = tuple(range(0, 181, 5))


@dataclass
class MismatchRow:
    id: int
    frame_pred: int
    frame_gt: int
    frame_mismatch: int
    angle_pred: float
    angle_gt: float
    angle_mismatch: float
    gated: bool = False


def angle_difference(a, b):
    """Smallest absolute difference between angles in degrees, in [0, 180]."""
    d = np.mod(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)), 360.0)
    return np.minimum(d, 360.0 - d)


def landmark_mismatch(pred: LandmarkSet, gt: LandmarkSet) -> List[MismatchRow]:
    """Pair landmarks by id and report absolute frame and angle differences."""
    if sorted(pred.ids) != sorted(gt.ids):
        raise DataError(f"landmark ids differ: {sorted(pred.ids)} vs {sorted(gt.ids)}")
    where = {k: i for i, k in enumerate(gt.ids)}
    rows = []
    for i, k in enumerate(pred.ids):
        j = where[k]
        fp, fg = int(pred.frames[i]), int(gt.frames[j])
        ap, ag = float(pred.azimuth_deg[i]), float(gt.azimuth_deg[j])
        rows.append(MismatchRow(k, fp, fg, abs(fp - fg), ap, ag, float(angle_difference(ap, ag))))
    return rows


def gate_rotational(rows: Sequence[MismatchRow], threshold_frames: float = DEFAULT_GATE_FRAMES) -> List[MismatchRow]:
    """Mark rows whose frame mismatch is at most ``threshold_frames``.

    Only gated rows enter the angle statistics.
    """
    return [MismatchRow(**{**asdict(r), "gated": r.frame_mismatch <= threshold_frames}) for r in rows]


def mismatch_curve(values, thresholds) -> np.ndarray:
    """Percentage of ``values`` that are <= each threshold."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if np.any(np.diff(thresholds) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return np.full(thresholds.shape, np.nan)
    return 100.0 * (values[None, :] <= thresholds[:, None]).mean(axis=1)


def _stats(values) -> Optional[dict]:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return None
    return {
        "n": int(values.size),
        "mean": float(values.mean()),
        "std": float(values.std(ddof=1)) if values.size > 1 else float("nan"),
        "median": float(np.median(values)),
    }


@dataclass
class MismatchReport:
    rows: List[MismatchRow]
    frame: dict
    angle: Optional[dict]
    frame_mm: dict
    frame_curve: np.ndarray
    angle_curve: np.ndarray

    def within_frames(self, k: float) -> float:
        return float(mismatch_curve([r.frame_mismatch for r in self.rows], [k])[0])


def summarize(
    rows: Sequence[MismatchRow],
    mm_per_frame: float,
    threshold_frames: float = DEFAULT_GATE_FRAMES,
    frame_thresholds=FRAME_THRESHOLDS,
    angle_thresholds=ANGLE_THRESHOLDS,
) -> MismatchReport:
    """Gate, then compute summary statistics and matched-fraction curves.

    Angle statistics use gated rows only; with none gated they are None
    rather than zero.  Standard deviations are sample (n - 1) values.
    """
    rows = gate_rotational(rows, threshold_frames)
    frames = np.array([r.frame_mismatch for r in rows], dtype=np.float64)
    angles = np.array([r.angle_mismatch for r in rows if r.gated], dtype=np.float64)
    frame = _stats(frames) or {"n": 0, "mean": float("nan"), "std": float("nan"), "median": float("nan")}
    frame_mm = {k: (v * mm_per_frame if k != "n" else v) for k, v in frame.items()}
    return MismatchReport(
        rows=rows,
        frame=frame,
        angle=_stats(angles),
        frame_mm=frame_mm,
        frame_curve=mismatch_curve(frames, frame_thresholds),
        angle_curve=mismatch_curve(angles, angle_thresholds),
    )


def write_landmark_csv(path, reports: Dict[str, MismatchReport]) -> Path:
    path = Path(path)
    fields = list(MismatchRow.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage"] + fields)
        for stage, rep in reports.items():
            for r in rep.rows:
                d = asdict(r)
                w.writerow([stage] + [int(d[f]) if f == "gated" else d[f] for f in fields])
    return path


def write_curve_csv(path, reports: Dict[str, MismatchReport], kind: str = "frame") -> Path:
    """Matched percentage per threshold, one column per stage."""
    path = Path(path)
    thresholds = FRAME_THRESHOLDS if kind == "frame" else ANGLE_THRESHOLDS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"threshold_{'frames' if kind == 'frame' else 'deg'}"] + [f"{s}_pct_matched" for s in reports])
        for i, t in enumerate(thresholds):
            vals = [getattr(rep, f"{kind}_curve")[i] for rep in reports.values()]
            w.writerow([t] + [f"{v:.6g}" for v in vals])
    return path


def _fmt(stats: Optional[dict], key: str) -> str:
    if stats is None:
        return ""
    v = stats[key]
    return "" if isinstance(v, float) and math.isnan(v) else f"{v:.6g}"


def write_summary_csv(path, reports: Dict[str, MismatchReport]) -> Path:
    """One row per metric, mean/std/median/n columns per stage."""
    path = Path(path)
    stages = list(reports)
    header = ["metric"] + [f"{s}_{k}" for s in stages for k in ("mean", "std", "median", "n")]
    metrics = [
        ("frame_mismatch_frames", lambda r: r.frame),
        ("frame_mismatch_mm", lambda r: r.frame_mm),
        ("angle_mismatch_deg_gated", lambda r: r.angle),
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for name, get in metrics:
            row = [name]
            for s in stages:
                st = get(reports[s])
                row += [_fmt(st, "mean"), _fmt(st, "std"), _fmt(st, "median"), "" if st is None else st["n"]]
            w.writerow(row)
    return path

"""On-disk formats.

Volumes and pullbacks are a JSON header plus a sibling raw little-endian
float32 payload.  Volume payloads are x-fastest; pullback payloads are
column-fastest, then row, then frame.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .volume import PullbackGrid, SdfConvention, Volume3D


def _payload_path(header_path: Path) -> Path:
    return header_path.with_suffix(".raw")


def _read_header(path: Path, kind: str) -> dict:
    path = Path(path)
    try:
        header = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {kind} header {path}: {exc}") from exc
    if header.get("dtype") != "f32le":
        raise DataError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    return header


def _read_payload(header_path: Path, header: dict, count: int) -> np.ndarray:
    raw = header_path.parent / header.get("payload", _payload_path(header_path).name)
    try:
        arr = np.fromfile(raw, dtype="<f4")
    except OSError as exc:
        raise DataError(f"cannot read payload {raw}: {exc}") from exc
    if arr.size != count:
        raise DataError(f"{raw}: expected {count} values, found {arr.size}")
    return arr


def write_volume(path, vol: Volume3D, convention: SdfConvention | None = None) -> list[Path]:
    path = Path(path)
    raw = _payload_path(path)
    header = {
        "dims": list(vol.dims),
        "spacing": list(vol.spacing),
        "origin": list(vol.origin),
        "convention": None
        if convention is None
        else {"sign": convention.sign, "truncation": convention.truncation},
        "dtype": "f32le",
        "payload": raw.name,
    }
    vol.data.astype("<f4").ravel(order="F").tofile(raw)
    path.write_text(json.dumps(header, indent=2) + "\n")
    return [path, raw]


def read_volume(path) -> Volume3D:
    path = Path(path)
    header = _read_header(path, "volume")
    dims = tuple(int(d) for d in header["dims"])
    flat = _read_payload(path, header, int(np.prod(dims)))
    data = flat.reshape(dims, order="F")
    return Volume3D(data, tuple(header["spacing"]), tuple(header["origin"]))


def write_pullback(path, grid: PullbackGrid) -> list[Path]:
    path = Path(path)
    raw = _payload_path(path)
    header = {
        "n_frames": grid.n_frames,
        "frame_shape": list(grid.frame_shape),
        "spacings": {"in_plane": grid.in_plane_spacing, "frame": grid.frame_spacing},
        "valid_mask": [bool(v) for v in grid.valid_mask],
        "dtype": "f32le",
        "payload": raw.name,
    }
    grid.data.astype("<f4").tofile(raw)
    path.write_text(json.dumps(header, indent=2) + "\n")
    return [path, raw]


def read_pullback(path) -> PullbackGrid:
    path = Path(path)
    header = _read_header(path, "pullback")
    n = int(header["n_frames"])
    h, w = (int(v) for v in header["frame_shape"])
    flat = _read_payload(path, header, n * h * w)
    sp = header["spacings"]
    return PullbackGrid(
        flat.reshape(n, h, w),
        in_plane_spacing=float(sp["in_plane"]),
        frame_spacing=float(sp["frame"]),
        valid_mask=np.asarray(header["valid_mask"], dtype=bool),
    )


def write_centerline(path, points: np.ndarray) -> Path:
    path = Path(path)
    pts = [[float(c) for c in p] for p in np.asarray(points)]
    path.write_text(json.dumps(pts) + "\n")
    return path


def read_centerline(path) -> np.ndarray:
    try:
        pts = np.asarray(json.loads(Path(path).read_text()), dtype=np.float64)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise DataError(f"cannot read centerline {path}: {exc}") from exc
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError(f"{path}: centerline must be a list of [x, y, z] points")
    return pts


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

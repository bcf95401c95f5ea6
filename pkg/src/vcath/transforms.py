"""Non-rigid catheter transforms and virtual-pullback sampling.

Pixel convention: column index runs along U, row index along V, and the
catheter sits at the exact frame centre ``((h - 1)/2, (w - 1)/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .geometry import Centerline, FrameSet, resample_frames
from .volume import PullbackGrid, Volume3D, sample_trilinear


@dataclass(frozen=True)
class SamplingGridSpec:
    frame_shape: Tuple[int, int] = (96, 96)
    in_plane_spacing: float = 0.08
    center_offset: Optional[Tuple[float, float]] = None

    @property
    def center(self) -> Tuple[float, float]:
        if self.center_offset is not None:
            return self.center_offset
        h, w = self.frame_shape
        return (h / 2 - 0.5, w / 2 - 0.5)

    def offsets(self) -> Tuple[np.ndarray, np.ndarray]:
        """In-plane offsets in mm: ``(along_u per column, along_v per row)``."""
        h, w = self.frame_shape
        cy, cx = self.center
        a = (np.arange(w) - cx) * self.in_plane_spacing
        b = (np.arange(h) - cy) * self.in_plane_spacing
        return a, b

    @classmethod
    def like(cls, grid: PullbackGrid) -> "SamplingGridSpec":
        return cls(tuple(grid.frame_shape), grid.in_plane_spacing)


def phi_long(F: FrameSet, s, c: Centerline) -> FrameSet:
    """Stretch: move the frames to arclength ``s`` and re-derive their poses."""
    return resample_frames(c, s, F)


def phi_rot(F: FrameSet, theta) -> FrameSet:
    """Twist U and V of each frame by ``theta`` (radians) about its tangent."""
    theta = np.broadcast_to(np.asarray(theta, dtype=np.float64), (len(F),))
    cos, sin = np.cos(theta)[:, None], np.sin(theta)[:, None]
    U = cos * F.U + sin * F.V
    V = -sin * F.U + cos * F.V
    return FrameSet(F.R.copy(), F.T.copy(), U, V, F.s.copy())


def phi_trans(F: FrameSet, d_u, d_v) -> FrameSet:
    """Bend: displace frame centres by ``d_u`` along U and ``d_v`` along V (mm)."""
    n = len(F)
    d_u = np.broadcast_to(np.asarray(d_u, dtype=np.float64), (n,))
    d_v = np.broadcast_to(np.asarray(d_v, dtype=np.float64), (n,))
    R = F.R + d_u[:, None] * F.U + d_v[:, None] * F.V
    return FrameSet(R, F.T.copy(), F.U.copy(), F.V.copy(), F.s.copy())


def compose(F: FrameSet, s, theta, d_u, d_v, c: Centerline) -> FrameSet:
    """Apply stretch, then twist, then bend."""
    return phi_trans(phi_rot(phi_long(F, s, c), theta), d_u, d_v)


def sample_points(F: FrameSet, spec: SamplingGridSpec) -> np.ndarray:
    """World coordinates of every pixel, shape ``(n, h, w, 3)``."""
    a, b = spec.offsets()
    return (
        F.R[:, None, None, :]
        + a[None, None, :, None] * F.U[:, None, None, :]
        + b[None, :, None, None] * F.V[:, None, None, :]
    )


def virtual_catheter_sample(
    F: FrameSet,
    vol: Volume3D,
    spec: SamplingGridSpec,
    frame_spacing: float = 0.4,
    with_grad: bool = False,
    background: float = 0.0,
):
    """Sample ``vol`` on the cross-sectional planes of ``F``.

    Returns a PullbackGrid, plus the per-pixel spatial gradient of shape
    ``(n, h, w, 3)`` when ``with_grad`` is set.
    """
    values, grads = sample_trilinear(vol, sample_points(F, spec), background)
    grid = PullbackGrid(values, spec.in_plane_spacing, frame_spacing)
    if with_grad:
        return grid, grads
    return grid

"""Scalar-field containers, signed distance transforms and trilinear sampling.

All distance fields use a positive-inside convention: voxels inside the
lumen (or wall) carry positive distances in mm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numba
import numpy as np
from scipy import ndimage

from .errors import DataError

DEFAULT_TAU = 2.0


@dataclass(frozen=True)
class SdfConvention:
    """Sign and truncation of a stored distance field."""

    sign: str = "positive-inside"
    truncation: float = DEFAULT_TAU

    def __post_init__(self):
        if self.sign != "positive-inside":
            raise ValueError(f"unsupported sign convention {self.sign!r}")
        if not self.truncation > 0:
            raise ValueError("truncation must be > 0")


@dataclass
class Volume3D:
    """Scalar field on a regular grid.

    ``data`` is indexed ``[ix, iy, iz]``; voxel ``(i, j, k)`` sits at
    ``origin + (i*sx, j*sy, k*sz)`` in mm.
    """

    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError("volume data must be 3D")
        if min(self.data.shape) < 2:
            raise ValueError("volume needs at least 2 voxels per axis")
        self.spacing = tuple(float(v) for v in self.spacing)
        self.origin = tuple(float(v) for v in self.origin)
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise ValueError("spacing must be 3 positive values")

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    def world_coords(self) -> np.ndarray:
        """World positions of all voxel centres, shape ``dims + (3,)``."""
        axes = [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def with_data(self, data: np.ndarray) -> "Volume3D":
        return Volume3D(data, self.spacing, self.origin)


@dataclass
class PullbackGrid:
    """Stack of cross-sectional frames along a (real or virtual) catheter."""

    data: np.ndarray
    in_plane_spacing: float = 0.08
    frame_spacing: float = 0.4
    valid_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError("pullback data must be (n_frames, h, w)")
        if self.valid_mask is None:
            self.valid_mask = np.ones(self.data.shape[0], dtype=bool)
        self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if self.valid_mask.shape != (self.data.shape[0],):
            raise ValueError("valid_mask must have one entry per frame")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def frame_shape(self) -> Tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    def with_data(self, data: np.ndarray) -> "PullbackGrid":
        return PullbackGrid(data, self.in_plane_spacing, self.frame_spacing, self.valid_mask.copy())

    def crop(self, start: int, end: int) -> "PullbackGrid":
        return PullbackGrid(
            self.data[start:end].copy(),
            self.in_plane_spacing,
            self.frame_spacing,
            self.valid_mask[start:end].copy(),
        )


def _distance_to_boxes(seeds: np.ndarray, spacing) -> np.ndarray:
    """Distance from every voxel centre to the nearest box of a seed voxel.

    On a lattice at half the voxel spacing, voxel centres sit at odd indices
    and each closed voxel box covers a 3x3x3 block.  The point of a box
    nearest to a voxel centre always lies on that lattice, so an exact EDT
    there is exact for boxes.
    """
    fine = np.zeros(tuple(2 * n + 1 for n in seeds.shape), dtype=bool)
    fine[1::2, 1::2, 1::2] = seeds
    fine = ndimage.binary_dilation(fine, structure=np.ones((3, 3, 3), bool))
    half = tuple(0.5 * s for s in spacing)
    return ndimage.distance_transform_edt(~fine, sampling=half)[1::2, 1::2, 1::2]


def distance_transform(mask: Volume3D, convention: SdfConvention = SdfConvention()) -> Volume3D:
    """Signed Euclidean distance (mm) to the voxelised boundary of ``mask``.

    The boundary is the set of voxel faces separating the two classes, so a
    voxel's distance is to the nearest box of the opposite class.  Inside is
    positive.
    """
    binary = np.asarray(mask.data) > 0.5
    n_in = int(binary.sum())
    if n_in == 0 or n_in == binary.size:
        raise DataError("degenerate mask")

    out = np.where(binary, _distance_to_boxes(~binary, mask.spacing), -_distance_to_boxes(binary, mask.spacing))
    return mask.with_data(out)


def truncate(sdf: Volume3D, tau: float) -> Volume3D:
    if not tau > 0:
        raise ValueError("tau must be > 0")
    return sdf.with_data(np.minimum(sdf.data, tau))


def clamp_inside(field_, tau: float = DEFAULT_TAU):
    """Keep only the in-lumen part of a field: ``min(max(x, 0), tau)``.

    Accepts a PullbackGrid, a Volume3D or a bare array and returns the same
    kind.  See :func:`clamp_inside_grad` for the sub-derivative used in the
    loss.
    """
    if isinstance(field_, (PullbackGrid, Volume3D)):
        return field_.with_data(np.clip(field_.data, 0.0, tau))
    return np.clip(field_, 0.0, tau)


def clamp_inside_grad(x: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
    # 1 strictly inside (0, tau), 0 at and beyond both ends
    return ((x > 0.0) & (x < tau)).astype(np.float64)


def gaussian_kernel(sigma_frames: float, ksize: int) -> np.ndarray:
    if ksize < 1 or ksize % 2 == 0:
        raise ValueError("ksize must be odd and >= 1")
    half = ksize // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    if sigma_frames <= 0:
        return (offsets == 0).astype(np.float64)
    w = np.exp(-0.5 * (offsets / sigma_frames) ** 2)
    return w / w.sum()


def _reflect_index(j: np.ndarray, n: int) -> np.ndarray:
    # half-sample symmetric extension: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
    period = 2 * n
    j = np.mod(j, period)
    return np.where(j < n, j, period - 1 - j)


def gaussian_smooth_longitudinal(p: PullbackGrid, sigma_frames: float = 1.0, ksize: int = 3) -> PullbackGrid:
    """Convolve every pixel column with a normalised Gaussian along the frames.

    Frames outside the stack are handled by symmetric reflection, so with all
    frames valid the operator preserves per-column sums.  Invalid frames are
    skipped and the remaining taps renormalised; invalid frames keep their
    input values.
    """
    kernel = gaussian_kernel(sigma_frames, ksize)
    n = p.n_frames
    half = ksize // 2
    data = p.data.astype(np.float64)
    valid = p.valid_mask.astype(np.float64)
    acc = np.zeros_like(data)
    norm = np.zeros(n)
    frames = np.arange(n)
    for k, w in zip(range(-half, half + 1), kernel):
        if w == 0.0:
            continue
        src = _reflect_index(frames + k, n)
        tap = w * valid[src]
        acc += tap[:, None, None] * data[src]
        norm += tap
    out = data.copy()
    ok = p.valid_mask & (norm > 0)
    out[ok] = acc[ok] / norm[ok, None, None]
    return p.with_data(out)


@numba.njit(cache=True, inline="always")
def trilinear_at(data, origin, spacing, x, y, z, background):
    """Value and gradient of the trilinear interpolant at one world point."""
    nx, ny, nz = data.shape
    fx = (x - origin[0]) / spacing[0]
    fy = (y - origin[1]) / spacing[1]
    fz = (z - origin[2]) / spacing[2]
    if not (fx >= 0.0 and fx <= nx - 1 and fy >= 0.0 and fy <= ny - 1 and fz >= 0.0 and fz <= nz - 1):
        return background, 0.0, 0.0, 0.0
    ix = min(int(math.floor(fx)), nx - 2)
    iy = min(int(math.floor(fy)), ny - 2)
    iz = min(int(math.floor(fz)), nz - 2)
    tx = fx - ix
    ty = fy - iy
    tz = fz - iz
    c000 = np.float64(data[ix, iy, iz])
    c100 = np.float64(data[ix + 1, iy, iz])
    c010 = np.float64(data[ix, iy + 1, iz])
    c110 = np.float64(data[ix + 1, iy + 1, iz])
    c001 = np.float64(data[ix, iy, iz + 1])
    c101 = np.float64(data[ix + 1, iy, iz + 1])
    c011 = np.float64(data[ix, iy + 1, iz + 1])
    c111 = np.float64(data[ix + 1, iy + 1, iz + 1])
    # interpolate along x first, then y, then z
    c00 = c000 + tx * (c100 - c000)
    c10 = c010 + tx * (c110 - c010)
    c01 = c001 + tx * (c101 - c001)
    c11 = c011 + tx * (c111 - c011)
    c0 = c00 + ty * (c10 - c00)
    c1 = c01 + ty * (c11 - c01)
    dx0 = (1.0 - ty) * (c100 - c000) + ty * (c110 - c010)
    dx1 = (1.0 - ty) * (c101 - c001) + ty * (c111 - c011)
    gx = ((1.0 - tz) * dx0 + tz * dx1) / spacing[0]
    gy = ((1.0 - tz) * (c10 - c00) + tz * (c11 - c01)) / spacing[1]
    gz = (c1 - c0) / spacing[2]
    return c0 + tz * (c1 - c0), gx, gy, gz


@numba.njit(cache=True)
def _trilinear_kernel(data, origin, spacing, pts, background, values, grads):
    for k in range(pts.shape[0]):
        v, gx, gy, gz = trilinear_at(data, origin, spacing, pts[k, 0], pts[k, 1], pts[k, 2], background)
        values[k] = v
        grads[k, 0] = gx
        grads[k, 1] = gy
        grads[k, 2] = gz


def sample_trilinear(vol: Volume3D, points: np.ndarray, background: float = 0.0):
    """Trilinear interpolation at world points, with the exact spatial gradient.

    Parameters
    ----------
    vol : Volume3D
    points : array_like, shape (..., 3)
        Physical coordinates in mm.
    background : float
        Value returned outside the grid (gradient zero there).

    Returns
    -------
    values : np.ndarray, shape (...)
    grads : np.ndarray, shape (..., 3)
        Derivative of the interpolant with respect to each point coordinate.
    """
    pts = np.asarray(points, dtype=np.float64)
    lead = pts.shape[:-1]
    flat = np.ascontiguousarray(pts.reshape(-1, 3))
    values = np.empty(flat.shape[0])
    grads = np.empty((flat.shape[0], 3))
    _trilinear_kernel(
        vol.data,
        np.asarray(vol.origin, dtype=np.float64),
        np.asarray(vol.spacing, dtype=np.float64),
        flat,
        float(background),
        values,
        grads,
    )
    return values.reshape(lead), grads.reshape(lead + (3,))

"""Rigid initialisation: longitudinal crop from lumen-area curves and a global
rotation from wall-thickness matrices."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError
from .volume import PullbackGrid

DEFAULT_GAMMA = 30
MIN_OVERLAP = 40
MIN_COMMON_FRAMES = 5


@dataclass(frozen=True)
class CropIndices:
    """Matching frame ranges ``[start, end)`` in both pullbacks."""

    ct_start: int
    ct_end: int
    oct_start: int
    oct_end: int

    def __post_init__(self):
        if not (0 <= self.ct_start < self.ct_end and 0 <= self.oct_start < self.oct_end):
            raise ValueError(f"invalid crop {self}")
        if self.ct_end - self.ct_start != self.oct_end - self.oct_start:
            raise ValueError("crop overlap lengths differ")

    @property
    def length(self) -> int:
        return self.ct_end - self.ct_start

    @property
    def shift(self) -> int:
        """CT frame index minus the matching OCT frame index."""
        return self.ct_start - self.oct_start

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ThicknessMatrix:
    """Radial wall thickness, ``H[i, k]`` in mm along ray ``k`` of frame ``i``.

    ``valid`` is False for frames with no wall pixels (their rows are zero).
    """

    H: np.ndarray
    valid: np.ndarray

    @property
    def gamma(self) -> int:
        return self.H.shape[1]

    def crop(self, start: int, end: int) -> "ThicknessMatrix":
        return ThicknessMatrix(self.H[start:end].copy(), self.valid[start:end].copy())


def field_of_view(shape) -> np.ndarray:
    """Pixels inside the disk inscribed in a frame of ``shape``.

    Restricting measurements to this disk makes them invariant to a
    rotation of the catheter about its axis.
    """
    h, w = shape
    r, c = np.mgrid[:h, :w]
    return np.hypot(r - (h / 2 - 0.5), c - (w / 2 - 0.5)) <= min(h, w) / 2


def area_vector(lumen: PullbackGrid) -> np.ndarray:
    """Lumen area per frame in mm^2 within the circular field of view.

    NaN marks invalid frames.
    """
    fov = field_of_view(lumen.frame_shape)
    counts = ((lumen.data > 0) & fov).sum(axis=(1, 2)).astype(np.float64)
    areas = counts * lumen.in_plane_spacing ** 2
    areas[~lumen.valid_mask] = np.nan
    return areas


def _shift_score(a_ct: np.ndarray, a_oct: np.ndarray, k: int) -> float:
    n1, n2 = a_ct.size, a_oct.size
    lo, hi = max(0, k), min(n1, n2 + k)
    diff = a_ct[lo:hi] - a_oct[lo - k:hi - k]
    diff = diff[np.isfinite(diff)]
    if diff.size == 0:
        return math.inf
    return float(np.mean(diff * diff))


def long_reg(a_ct, a_oct, min_overlap: int = MIN_OVERLAP) -> CropIndices:
    """Slide the shorter area curve along the longer one.

    Every placement where the shorter curve lies fully inside the longer
    one is scored by the mean squared area difference over frames valid in
    both (NaN entries are skipped).  The lowest score wins; ties go to the
    smallest absolute shift, then the smaller shift.
    """
    a_ct = np.asarray(a_ct, dtype=np.float64)
    a_oct = np.asarray(a_oct, dtype=np.float64)
    n1, n2 = a_ct.size, a_oct.size
    if min(n1, n2) < min_overlap:
        raise DataError(f"area curves overlap by at most {min(n1, n2)} frames (< {min_overlap})")
    # ct frame j pairs with oct frame j - k
    shifts = range(min(0, n1 - n2), max(0, n1 - n2) + 1)
    best = None
    for k in shifts:
        key = (_shift_score(a_ct, a_oct, k), abs(k), k)
        if best is None or key < best:
            best = key
    if not math.isfinite(best[0]):
        raise DataError("no shift has any frame valid in both area curves")
    k = best[2]
    ct_start, ct_end = max(0, k), min(n1, n2 + k)
    return CropIndices(ct_start, ct_end, ct_start - k, ct_end - k)


def _wall_centroid(mask: np.ndarray):
    rows, cols = np.nonzero(mask)
    return rows.mean(), cols.mean()


def thickness_matrix(wall: PullbackGrid, gamma: int = DEFAULT_GAMMA) -> ThicknessMatrix:
    """Trace ``gamma`` rays from the wall centroid of every frame.

    Ray ``k`` points along ``cos(phi) U + sin(phi) V`` with ``phi = 2 pi k /
    gamma`` (columns follow U, rows follow V).  Samples are taken at the
    midpoints of half-pixel steps; each sample landing on a positive wall
    pixel (nearest-pixel lookup) inside the circular field of view adds
    half a pixel of length.
    """
    n = wall.n_frames
    h, w = wall.frame_shape
    step = 0.5
    max_t = float(np.hypot(h, w))
    t = (np.arange(int(max_t / step) + 1) + 0.5) * step
    phi = 2.0 * np.pi * np.arange(gamma) / gamma
    H = np.zeros((n, gamma))
    valid = np.zeros(n, dtype=bool)
    fov = field_of_view((h, w))
    for i in range(n):
        mask = (wall.data[i] > 0) & fov
        if not wall.valid_mask[i] or not mask.any():
            continue
        valid[i] = True
        r0, c0 = _wall_centroid(mask)
        rr = r0 + np.sin(phi)[:, None] * t[None, :]
        cc = c0 + np.cos(phi)[:, None] * t[None, :]
        ri = np.rint(rr).astype(int)
        ci = np.rint(cc).astype(int)
        inside = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
        hit = np.zeros_like(inside)
        hit[inside] = mask[ri[inside], ci[inside]]
        H[i] = hit.sum(axis=1) * step * wall.in_plane_spacing
    return ThicknessMatrix(H, valid)


def rot_reg(H_ct: ThicknessMatrix, H_oct: ThicknessMatrix) -> float:
    """Global rotation (radians) that best maps CT thickness onto OCT thickness.

    Scores every circular column shift ``k`` by the mean squared difference
    between ``roll(H_ct, -k)`` and ``H_oct`` over frames valid in both, and
    returns ``2 pi k / gamma`` for the best one (ties to the smallest k).
    Rotating the CT frames by the returned angle reproduces the OCT
    orientation.
    """
    if H_ct.H.shape != H_oct.H.shape:
        raise DataError(f"thickness matrices differ in shape: {H_ct.H.shape} vs {H_oct.H.shape}")
    both = H_ct.valid & H_oct.valid
    if both.sum() < MIN_COMMON_FRAMES:
        raise DataError(f"only {int(both.sum())} frames valid in both thickness matrices (< {MIN_COMMON_FRAMES})")
    a, b = H_ct.H[both], H_oct.H[both]
    gamma = H_ct.gamma
    scores = [float(np.mean((np.roll(a, -k, axis=1) - b) ** 2)) for k in range(gamma)]
    k_best = int(np.argmin(scores))
    return 2.0 * np.pi * k_best / gamma

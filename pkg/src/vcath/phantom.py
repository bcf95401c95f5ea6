"""Synthetic vessels and distorted pullbacks with exact ground truth.

The vessel is a union of capsules swept along a smooth centerline, plus
straight branch capsules and small wall bulges.  The CT side is the voxelised
signed distance field; the pullback side is sampled from the analytic field
at the pixel positions, so the two never share a discretisation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numba
import numpy as np
from scipy.spatial import cKDTree

from . import bspline
from .errors import DataError
from .geometry import Centerline, FrameSet, Seed, fit_centerline, least_aligned_axis, transport_frames
from .transforms import SamplingGridSpec, phi_rot, phi_trans, sample_points
from .volume import DEFAULT_TAU, PullbackGrid, Volume3D

SEGMENT_MM = 0.2
NEGATIVE_FLOOR = -3.0
_K_NEAREST = 16


@dataclass
class Bifurcation:
    """Side branch leaving the main vessel.

    ``s`` is the take-off position as a fraction of the main centerline
    length; ``azimuth_deg`` is measured in the vessel's transported frame
    (0 along U, 90 along V); ``angle_deg`` is the angle to the tangent.
    """

    s: float
    azimuth_deg: float
    radius: float
    length: float = 5.0
    angle_deg: float = 60.0


@dataclass
class VesselSpec:
    kind: str = "random-smooth"
    length: float = 120.0
    base_radius: float = 1.6
    taper: float = 0.2
    perturb_amp: float = 0.08
    wall_thickness: float = 0.8
    wall_eccentricity: float = 0.35
    bifurcations: List[Bifurcation] = field(default_factory=list)
    bulges_per_cm: float = 2.0
    tortuosity: float = 3.0
    arc_radius: float = 60.0
    helix_radius: float = 8.0
    helix_pitch: float = 60.0
    spacing: float = 0.25
    tau: float = DEFAULT_TAU
    bounds: Optional[Tuple[Tuple[float, float, float], Tuple[float, float, float]]] = None
    seed: int = 0

    def __post_init__(self):
        self.bifurcations = [b if isinstance(b, Bifurcation) else Bifurcation(**b) for b in self.bifurcations]
        if self.kind not in ("line", "arc", "helix", "random-smooth"):
            raise DataError(f"unknown centerline kind {self.kind!r}")
        if self.base_radius <= 0 or self.wall_thickness <= 0 or self.length <= 0:
            raise DataError("radii, wall thickness and length must be > 0")
        if not 0 <= self.taper < 1:
            raise DataError("taper must lie in [0, 1)")
        if self.wall_eccentricity >= self.wall_thickness:
            raise DataError("wall eccentricity must be smaller than the wall thickness")
        for b in self.bifurcations:
            if not 0.05 < b.s < 0.95:
                raise DataError(f"bifurcation position s={b.s} outside (0.05, 0.95)")
            if b.radius <= 0 or b.length <= 0:
                raise DataError("branch radius and length must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MotionSpec:
    """Smooth random catheter distortions.

    ``stretch`` bounds the local longitudinal stretch rate (fraction);
    ``long_range`` is the peak-to-peak longitudinal displacement in frames;
    ``twist_deg`` bounds the twist relative to the first frame and
    ``transverse`` the catheter offset as a fraction of the local lumen
    radius.  ``smoothness`` is the number of control points of the
    generating splines.  ``speed_bump`` adds a smooth temporary
    longitudinal displacement of that many frames in the middle of the run:
    the catheter falls behind (or runs ahead) and then catches up, so both
    ends of the run keep their nominal spacing.
    """

    stretch: float = 0.2
    long_range: float = 9.0
    twist_deg: float = 45.0
    transverse: float = 0.3
    smoothness: int = 6
    speed_bump: float = 0.0
    start_frame: int = 12
    base_angle_deg: Optional[float] = None
    n_frames: int = 256
    seed: int = 0

    def __post_init__(self):
        for name in ("stretch", "long_range", "twist_deg", "transverse", "speed_bump"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be >= 0")
        if self.smoothness < 4:
            raise DataError("smoothness must be >= 4 control points")
        if self.transverse >= 1:
            raise DataError("non-physical motion: transverse offset must stay inside the lumen")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LandmarkSet:
    """Per-bifurcation frame index and azimuth (deg) in one pullback."""

    ids: List[int]
    frames: np.ndarray
    azimuth_deg: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.azimuth_deg = np.mod(np.asarray(self.azimuth_deg, dtype=np.float64), 360.0)
        if not (len(self.ids) == self.frames.size == self.azimuth_deg.size):
            raise ValueError("landmark fields differ in length")

    def __len__(self) -> int:
        return len(self.ids)

    def to_dict(self) -> dict:
        return {"ids": list(self.ids), "frames": self.frames.tolist(), "azimuth_deg": self.azimuth_deg.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LandmarkSet":
        return cls(list(d["ids"]), d["frames"], d["azimuth_deg"])


@dataclass
class Landmark3D:
    """Branch take-off point on the main centerline and branch direction."""

    id: int
    arclength: float
    point: np.ndarray
    direction: np.ndarray

    def to_dict(self) -> dict:
        return {"id": self.id, "arclength": self.arclength, "point": self.point.tolist(), "direction": self.direction.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Landmark3D":
        return cls(int(d["id"]), float(d["arclength"]), np.asarray(d["point"], float), np.asarray(d["direction"], float))


@numba.njit(cache=True)
def _chain_sdf(P, cand, A, B, ra, rb, out):
    # max over candidate segments of (radius - distance); radius is
    # interpolated at the projection of the point onto the segment
    nseg = A.shape[0]
    for i in range(P.shape[0]):
        best = -1e30
        for q in range(cand.shape[1]):
            j = cand[i, q]
            if j >= nseg:
                continue
            ex = B[j, 0] - A[j, 0]
            ey = B[j, 1] - A[j, 1]
            ez = B[j, 2] - A[j, 2]
            px = P[i, 0] - A[j, 0]
            py = P[i, 1] - A[j, 1]
            pz = P[i, 2] - A[j, 2]
            ee = ex * ex + ey * ey + ez * ez
            t = (px * ex + py * ey + pz * ez) / ee if ee > 0 else 0.0
            t = min(max(t, 0.0), 1.0)
            dx = px - t * ex
            dy = py - t * ey
            dz = pz - t * ez
            val = ra[j] + t * (rb[j] - ra[j]) - math.sqrt(dx * dx + dy * dy + dz * dz)
            if val > best:
                best = val
        out[i] = best


class CapsuleSet:
    """Union of (possibly tapered) capsules with a positive-inside SDF."""

    def __init__(self, A, B, ra, rb):
        self.A = np.ascontiguousarray(A, dtype=np.float64)
        self.B = np.ascontiguousarray(B, dtype=np.float64)
        self.ra = np.ascontiguousarray(ra, dtype=np.float64)
        self.rb = np.ascontiguousarray(rb, dtype=np.float64)
        self._tree = cKDTree(0.5 * (self.A + self.B))
        seg = np.linalg.norm(self.B - self.A, axis=1)
        self._reach = float(seg.max() / 2 + max(self.ra.max(), self.rb.max())) if len(seg) else 0.0

    def __len__(self) -> int:
        return self.A.shape[0]

    def sdf(self, points: np.ndarray, chunk: int = 400_000) -> np.ndarray:
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        out = np.full(pts.shape[0], -1e30)
        if len(self) == 0:
            return out
        k = min(_K_NEAREST, len(self))
        for lo in range(0, pts.shape[0], chunk):
            P = pts[lo:lo + chunk]
            _, cand = self._tree.query(P, k=k)
            cand = np.ascontiguousarray(np.asarray(cand, dtype=np.int64).reshape(P.shape[0], k))
            _chain_sdf(P, cand, self.A, self.B, self.ra, self.rb, out[lo:lo + chunk])
        return out


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


def _smooth_random(rng: np.random.Generator, u: np.ndarray, m: int) -> np.ndarray:
    """Cubic B-spline through ``m`` standard-normal control values."""
    B = bspline.build_basis(u, m)
    return bspline.apply(B, rng.normal(size=m))


def _centerline_points(spec: VesselSpec) -> np.ndarray:
    L = spec.length
    z = np.linspace(0.0, L, int(round(L / 0.5)) + 1)
    if spec.kind == "line":
        return np.c_[np.zeros_like(z), np.zeros_like(z), z]
    if spec.kind == "arc":
        phi = z / spec.arc_radius
        return np.c_[spec.arc_radius * (1 - np.cos(phi)), np.zeros_like(z), spec.arc_radius * np.sin(phi)]
    if spec.kind == "helix":
        turn_len = math.hypot(2 * math.pi * spec.helix_radius, spec.helix_pitch)
        phi = 2 * math.pi * z / turn_len
        return np.c_[spec.helix_radius * np.cos(phi), spec.helix_radius * np.sin(phi), spec.helix_pitch * phi / (2 * math.pi)]
    rng = _rng(spec.seed, 1)
    out = np.c_[np.zeros_like(z), np.zeros_like(z), z]
    for axis in (0, 1):
        for _ in range(3):
            wl = rng.uniform(40.0, 90.0)
            amp = spec.tortuosity * rng.uniform(0.4, 1.0) * (wl / 60.0) ** 2
            out[:, axis] += amp * (np.sin(2 * np.pi * z / wl + rng.uniform(0, 2 * np.pi)))
    out -= out[0]
    return out


def canonical_frames(c: Centerline, s, step_mm: float = 0.2) -> FrameSet:
    """Frames at ``s`` in the vessel's reference gauge.

    The gauge is fixed at s = 0 (least-aligned global axis, as for the CT
    catheter) and carried to every requested position by transport along a
    fine path, so it does not depend on how the positions are spaced.
    """
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    t0 = c.derivative(np.zeros(1))[0]
    t0 /= np.linalg.norm(t0)
    e = least_aligned_axis(t0)
    u0 = e - np.dot(e, t0) * t0
    u0 /= np.linalg.norm(u0)
    seed = Seed(c.evaluate(np.zeros(1))[0], t0, u0)
    ds = step_mm / c.total_length
    lead = np.arange(0.0, s[0], ds) if s[0] > 0 else np.zeros(0)
    path = np.concatenate([lead, s])
    # keep strictly increasing; requested positions are assumed ordered
    F = transport_frames(c, path, seed)
    return F.subset(lead.size, lead.size + s.size)


@dataclass
class Vessel:
    """A generated vessel: voxel SDFs, analytic SDFs and landmark geometry."""

    spec: VesselSpec
    centerline: Centerline
    lumen: Volume3D
    wall: Volume3D
    landmarks: List[Landmark3D]
    lumen_caps: CapsuleSet
    outer_caps: CapsuleSet
    radius_fn: Callable[[np.ndarray], np.ndarray]

    def lumen_sdf(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.lumen_caps.sdf(pts).reshape(pts.shape[:-1])

    def wall_sdf(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        outer = self.outer_caps.sdf(pts).reshape(pts.shape[:-1])
        return np.minimum(outer, -self.lumen_sdf(pts))

    def ct_centerline_points(self, step_mm: float = 1.0) -> np.ndarray:
        """Centerline resampled every ~``step_mm`` (what a CT pipeline would export)."""
        L = self.centerline.total_length
        k = max(4, int(round(L / step_mm)) + 1)
        return self.centerline.evaluate(np.linspace(0.0, 1.0, k))


def _branch_direction(F: FrameSet, i: int, b: Bifurcation) -> np.ndarray:
    az = math.radians(b.azimuth_deg)
    ang = math.radians(b.angle_deg)
    radial = math.cos(az) * F.U[i] + math.sin(az) * F.V[i]
    d = math.cos(ang) * F.T[i] + math.sin(ang) * radial
    return d / np.linalg.norm(d)


def generate_vessel(spec: VesselSpec) -> Vessel:
    """Build the vessel geometry and voxelise its lumen and wall SDFs.

    Both fields are positive inside, truncated at ``tau`` and floored at a
    small negative value outside a band around the vessel.
    """
    rng = _rng(spec.seed, 2)
    c = fit_centerline(_centerline_points(spec))
    L = c.total_length

    n_seg = max(8, int(math.ceil(L / SEGMENT_MM)))
    s_nodes = np.linspace(0.0, 1.0, n_seg + 1)
    nodes = c.evaluate(s_nodes)
    a = s_nodes * L

    comps = [(rng.uniform(4.0, 14.0), rng.uniform(0, 2 * np.pi), rng.uniform(0.5, 1.0)) for _ in range(4)]
    norm = sum(w for _, _, w in comps)

    def radius_fn(arc):
        arc = np.asarray(arc, dtype=np.float64)
        wobble = sum(w * np.sin(2 * np.pi * arc / wl + ph) for wl, ph, w in comps) / norm
        return spec.base_radius * (1 - spec.taper * arc / L) * (1 + spec.perturb_amp * wobble)

    r_nodes = radius_fn(a)
    F_nodes = canonical_frames(c, s_nodes)

    # lumen: main chain, branches, bulges
    A, B = [nodes[:-1]], [nodes[1:]]
    ra, rb = [r_nodes[:-1]], [r_nodes[1:]]
    landmarks = []
    for idx, b in enumerate(spec.bifurcations):
        i = int(round(b.s * n_seg))
        d = _branch_direction(F_nodes, i, b)
        p0 = nodes[i]
        n_b = max(1, int(math.ceil(b.length / 1.0)))
        pts = p0 + np.linspace(0.0, b.length, n_b + 1)[:, None] * d
        A.append(pts[:-1]); B.append(pts[1:])
        ra.append(np.full(n_b, b.radius)); rb.append(np.full(n_b, b.radius))
        landmarks.append(Landmark3D(idx, float(a[i]), p0.copy(), d))

    n_bulge = int(round(spec.bulges_per_cm * L / 10.0))
    bulge_s = np.sort(rng.uniform(0.03, 0.97, n_bulge))
    bulge_i = np.rint(bulge_s * n_seg).astype(int)
    bulge_az = rng.uniform(0, 2 * np.pi, n_bulge)
    bulge_r = rng.uniform(0.25, 0.45, n_bulge) * r_nodes[bulge_i]
    radial = np.cos(bulge_az)[:, None] * F_nodes.U[bulge_i] + np.sin(bulge_az)[:, None] * F_nodes.V[bulge_i]
    centres = nodes[bulge_i] + (r_nodes[bulge_i] - 0.5 * bulge_r)[:, None] * radial
    A.append(centres); B.append(centres + 1e-6 * F_nodes.T[bulge_i])
    ra.append(bulge_r); rb.append(bulge_r)
    lumen_caps = CapsuleSet(np.vstack(A), np.vstack(B), np.concatenate(ra), np.concatenate(rb))

    # outer wall: eccentric tube whose offset direction turns slowly
    psi = 2 * np.pi * a / rng.uniform(40.0, 80.0) + rng.uniform(0, 2 * np.pi)
    ecc = spec.wall_eccentricity * (np.cos(psi)[:, None] * F_nodes.U + np.sin(psi)[:, None] * F_nodes.V)
    onodes = nodes + ecc
    ro = r_nodes + spec.wall_thickness
    OA, OB = [onodes[:-1]], [onodes[1:]]
    ora, orb = [ro[:-1]], [ro[1:]]
    for b, lm in zip(spec.bifurcations, landmarks):
        pts = lm.point + np.linspace(0.0, b.length, 2)[:, None] * lm.direction
        rr = b.radius + 0.5 * spec.wall_thickness
        OA.append(pts[:-1]); OB.append(pts[1:]); ora.append([rr]); orb.append([rr])
    outer_caps = CapsuleSet(np.vstack(OA), np.vstack(OB), np.concatenate(ora), np.concatenate(orb))

    # voxel grid over the bounding box of everything plus a margin
    reach = float(ro.max()) + spec.wall_eccentricity + spec.tau + 1.0
    geo = np.vstack([lumen_caps.A, lumen_caps.B, outer_caps.A, outer_caps.B])
    lo, hi = geo.min(axis=0) - reach, geo.max(axis=0) + reach
    if spec.bounds is not None:
        blo, bhi = (np.asarray(v, dtype=np.float64) for v in spec.bounds)
        for b, lm in zip(spec.bifurcations, landmarks):
            tip = lm.point + b.length * lm.direction
            if np.any(tip - b.radius < blo) or np.any(tip + b.radius > bhi):
                raise DataError(f"branch {lm.id} exits the volume")
        lo, hi = blo, bhi
    sp = spec.spacing
    dims = np.floor((hi - lo) / sp).astype(int) + 1
    grid_axes = [lo[k] + sp * np.arange(dims[k]) for k in range(3)]

    # only evaluate voxels near some capsule; the rest get the floor value
    X = np.stack(np.meshgrid(*grid_axes, indexing="ij"), axis=-1).reshape(-1, 3)
    all_caps = np.vstack([0.5 * (lumen_caps.A + lumen_caps.B), 0.5 * (outer_caps.A + outer_caps.B)])
    near_d, _ = cKDTree(all_caps).query(X, k=1, distance_upper_bound=reach + 1.0)
    band = np.isfinite(near_d)
    lum = np.full(X.shape[0], NEGATIVE_FLOOR)
    wal = np.full(X.shape[0], NEGATIVE_FLOOR)
    Xb = X[band]
    lum_b = lumen_caps.sdf(Xb)
    out_b = outer_caps.sdf(Xb)
    lum[band] = lum_b
    wal[band] = np.minimum(out_b, -lum_b)
    lum = np.clip(lum, NEGATIVE_FLOOR, spec.tau).reshape(tuple(dims))
    wal = np.clip(wal, NEGATIVE_FLOOR, spec.tau).reshape(tuple(dims))
    origin = tuple(float(v) for v in lo)
    return Vessel(
        spec, c,
        Volume3D(lum, (sp, sp, sp), origin),
        Volume3D(wal, (sp, sp, sp), origin),
        landmarks, lumen_caps, outer_caps, radius_fn,
    )


def landmark_frames(F: FrameSet, landmarks: Sequence[Landmark3D], offset: int = 0) -> LandmarkSet:
    """Landmark frame and azimuth seen from catheter frames ``F``.

    The landmark frame is the last frame whose plane lies at or before the
    branch take-off point; the azimuth is the angle of the branch direction
    in that frame's (U, V) plane.  ``offset`` is added to the frame index.
    """
    ids, frames, az = [], [], []
    for lm in landmarks:
        ahead = np.einsum("ij,ij->i", F.T, lm.point[None, :] - F.R) >= 0
        idx = np.nonzero(ahead)[0]
        i = int(idx[-1]) if idx.size else 0
        ids.append(lm.id)
        frames.append(i + offset)
        az.append(math.degrees(math.atan2(float(lm.direction @ F.V[i]), float(lm.direction @ F.U[i]))))
    return LandmarkSet(ids, frames, az)


@dataclass
class DistortedPullback:
    lumen: PullbackGrid
    wall: PullbackGrid
    gt_frames: FrameSet
    gt_landmarks: LandmarkSet
    truth: dict


def _displacement_curve(motion: MotionSpec, rng, n: int) -> np.ndarray:
    u = np.linspace(0.0, 1.0, n)
    g = _smooth_random(rng, u, motion.smoothness)
    g -= g[0]
    span = g.max() - g.min()
    if motion.stretch == 0:
        return np.zeros(n)
    D = np.zeros(n) if span < 1e-12 else g * motion.long_range / span
    if motion.speed_bump > 0:
        # smoothstep ramps whose peak slope uses 80% of the stretch budget,
        # up and back down around a plateau of 1.5 ramp widths
        width = 1.5 * motion.speed_bump / (0.8 * motion.stretch)
        centre = rng.uniform(0.4, 0.6) * (n - 1)
        half = 1.25 * width
        i = np.arange(n)
        up = np.clip((i - (centre - half)) / width + 0.5, 0.0, 1.0)
        down = np.clip((i - (centre + half)) / width + 0.5, 0.0, 1.0)
        bump = up * up * (3 - 2 * up) - down * down * (3 - 2 * down)
        D += rng.choice([-1.0, 1.0]) * motion.speed_bump * bump
        D -= D[0]
    if not np.any(D):
        return D
    rate = np.abs(np.diff(D)).max()
    if rate > motion.stretch:
        D *= motion.stretch / rate
    return D


def _bounded_curve(motion: MotionSpec, rng, n: int, bound: float) -> np.ndarray:
    u = np.linspace(0.0, 1.0, n)
    g = _smooth_random(rng, u, motion.smoothness)
    peak = np.abs(g).max()
    return np.zeros(n) if peak < 1e-12 or bound == 0 else g * (bound / peak)


def generate_distorted_pullback(
    vessel: Vessel,
    motion: MotionSpec,
    grid: SamplingGridSpec = SamplingGridSpec(),
    frame_spacing: float = 0.4,
    warp: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> DistortedPullback:
    """Simulate a pullback through ``vessel`` with smooth catheter motion.

    Frame ``i`` sits at main-centerline arclength ``a_start + spacing * (i +
    D_i)``, with ``D_0 = 0``; ``warp`` (mapping [0, 1] onto [0, 1]) replaces
    the random longitudinal curve when given.  The frame is then twisted by
    ``theta_0 + T_i`` and displaced by ``(d_u, d_v)``.  Lumen and wall
    values come from the analytic SDFs.
    """
    rng = _rng(motion.seed, 3)
    n = motion.n_frames
    c = vessel.centerline
    L = c.total_length
    a_start = frame_spacing * motion.start_frame
    if warp is not None:
        u = np.linspace(0.0, 1.0, n)
        D = (n - 1) * np.asarray(warp(u), dtype=np.float64) - np.arange(n)
    else:
        D = _displacement_curve(motion, rng, n)
    arc = a_start + frame_spacing * (np.arange(n) + D)
    if np.any(np.diff(arc) <= 0):
        raise DataError("non-physical motion: catheter reverses direction")
    if arc[-1] > L - 1.0:
        raise DataError(f"non-physical motion: pullback runs past the vessel end ({arc[-1]:.1f} > {L - 1.0:.1f} mm)")

    if motion.base_angle_deg is None:
        theta0 = float(rng.uniform(0.0, 2 * np.pi))
    else:
        theta0 = math.radians(motion.base_angle_deg)
    T = _bounded_curve(motion, rng, n, math.radians(motion.twist_deg))
    T -= T[0]
    over = np.abs(T).max()
    if over > math.radians(motion.twist_deg) and over > 0:
        T *= math.radians(motion.twist_deg) / over
    radius = vessel.radius_fn(arc)
    du = _bounded_curve(motion, rng, n, 1.0) * motion.transverse * radius
    dv = _bounded_curve(motion, rng, n, 1.0) * motion.transverse * radius
    norm = np.hypot(du, dv)
    cap = motion.transverse * radius
    scale = np.where(norm > cap, cap / np.maximum(norm, 1e-300), 1.0)
    du, dv = du * scale, dv * scale

    F0 = canonical_frames(c, arc / L)
    F = phi_trans(phi_rot(F0, theta0 + T), du, dv)
    if np.any(vessel.lumen_sdf(F.R) <= 0):
        raise DataError("non-physical motion: catheter leaves the lumen")

    pts = sample_points(F, grid)
    tau = vessel.spec.tau
    lum = np.minimum(vessel.lumen_sdf(pts), tau)
    wal = np.minimum(vessel.wall_sdf(pts), tau)
    lumen = PullbackGrid(lum, grid.in_plane_spacing, frame_spacing)
    wall = PullbackGrid(wal, grid.in_plane_spacing, frame_spacing)
    gt = landmark_frames(F, vessel.landmarks)
    truth = {
        "start_frame": motion.start_frame,
        "frame_spacing": frame_spacing,
        "base_angle_rad": theta0,
        "arclength": arc.tolist(),
        "long_displacement_frames": D.tolist(),
        "twist_rad": T.tolist(),
        "d_u": du.tolist(),
        "d_v": dv.tolist(),
    }
    return DistortedPullback(lumen, wall, F, gt, truth)


def default_bifurcations(rng: np.random.Generator, count: int, s_lo: float, s_hi: float, base_radius: float) -> List[Bifurcation]:
    """``count`` branches spread evenly over ``(s_lo, s_hi)`` with jitter."""
    edges = np.linspace(s_lo, s_hi, count + 1)
    width = edges[1] - edges[0]
    out = []
    for k in range(count):
        s = edges[k] + width * rng.uniform(0.3, 0.7)
        out.append(Bifurcation(
            s=float(s),
            azimuth_deg=float(rng.uniform(0, 360)),
            radius=float(base_radius * rng.uniform(0.5, 0.7)),
            length=float(rng.uniform(4.0, 6.0)),
            angle_deg=float(rng.uniform(50, 70)),
        ))
    return out


def suite_phantom(seed: int, n_frames: int = 256, n_bifurcations: int = 6, frame_spacing: float = 0.4,
                  motion_overrides: Optional[dict] = None, vessel_overrides: Optional[dict] = None):
    """Vessel and motion specs for one phantom of the standard validation suite."""
    rng = _rng(seed, 4)
    start = int(rng.integers(8, 21))
    length = frame_spacing * (start + n_frames + 30)
    a0 = frame_spacing * (start + 10) / length
    a1 = frame_spacing * (start + n_frames - 10) / length
    vkw = dict(kind="random-smooth", length=length, seed=seed,
               base_radius=float(rng.uniform(1.4, 1.8)))
    vkw.update(vessel_overrides or {})
    vkw.setdefault("bifurcations", default_bifurcations(rng, n_bifurcations, a0, a1, vkw["base_radius"]))
    # mild background drift plus one mid-run lag that rigid alignment cannot absorb
    mkw = dict(seed=seed, n_frames=n_frames, start_frame=start, long_range=1.0, speed_bump=6.0)
    mkw.update(motion_overrides or {})
    return VesselSpec(**vkw), MotionSpec(**mkw)

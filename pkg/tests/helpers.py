"""Small registration problems built from generated phantoms."""

import numpy as np

from vcath.geometry import fit_centerline, init_frames
from vcath.nonrigid import NonrigidProblem, OptimizerConfig
from vcath.phantom import MotionSpec, VesselSpec, generate_distorted_pullback, generate_vessel
from vcath.rigid import CropIndices
from vcath.transforms import SamplingGridSpec

SMALL_GRID = SamplingGridSpec((24, 24), 0.08)


def small_problem(seed, n=32, m_s=8, m_theta=6, m_d=12, start=4, vessel=None, grid=SMALL_GRID, **motion):
    """Problem over a short distorted pullback with a known crop."""
    rng = np.random.default_rng(seed)
    if vessel is None:
        length = 0.4 * (start + n + 12)
        vessel = generate_vessel(VesselSpec(
            kind="random-smooth", length=length, seed=seed, base_radius=float(rng.uniform(1.4, 1.8)),
            bulges_per_cm=2.0,
        ))
    kw = dict(seed=seed, n_frames=n, start_frame=start, long_range=1.5, smoothness=4)
    kw.update(motion)
    pb = generate_distorted_pullback(vessel, MotionSpec(**kw), grid)
    c = fit_centerline(vessel.ct_centerline_points())
    F = init_frames(c, int(round(c.total_length / 0.4)) + 1)
    crop = CropIndices(start, start + n, 0, n)
    cfg = OptimizerConfig(m_s=m_s, m_theta=m_theta, m_d=m_d)
    prob = NonrigidProblem.from_crop(c, F, crop, vessel.lumen, pb.lumen, cfg, pb.truth["base_angle_rad"])
    return prob, vessel, pb


def fd_gradient(prob, params, h=1e-4, idx=None):
    x = params.flat()
    idx = range(x.size) if idx is None else idx
    out = []
    for k in idx:
        e = np.zeros_like(x)
        e[k] = h
        out.append((prob.value(params.with_flat(x + e)) - prob.value(params.with_flat(x - e))) / (2 * h))
    return np.array(out)


def relative_error(g, fd):
    scale = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-12)
    return np.abs(g - fd) / scale


def brute_force_sdf(mask, spacing):
    """Signed distance from each voxel centre to the nearest face separating
    the two classes, by enumerating every such face."""
    mask = np.asarray(mask, bool)
    sp = np.asarray(spacing, float)
    idx = np.stack(np.meshgrid(*[np.arange(n) for n in mask.shape], indexing="ij"), -1).reshape(-1, 3)
    centres = idx * sp
    faces = []  # (axis, centre of face)
    for a in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        diff = mask[tuple(lo)] != mask[tuple(hi)]
        for p in np.argwhere(diff):
            c = p * sp
            c[a] += 0.5 * sp[a]
            faces.append((a, c))
    out = np.empty(len(centres))
    for a in range(3):
        fc = np.array([c for ax, c in faces if ax == a])
        if fc.size == 0:
            continue
        for lo_i in range(0, len(centres), 2048):
            P = centres[lo_i:lo_i + 2048]
            d = np.abs(P[:, None, :] - fc[None, :, :])
            other = [b for b in range(3) if b != a]
            g = np.zeros(d.shape[:2])
            g += d[..., a] ** 2
            for b in other:
                g += np.maximum(d[..., b] - 0.5 * sp[b], 0) ** 2
            m = np.sqrt(g.min(axis=1))
            if a == 0:
                out[lo_i:lo_i + 2048] = m
            else:
                out[lo_i:lo_i + 2048] = np.minimum(out[lo_i:lo_i + 2048], m)
    sign = np.where(mask.reshape(-1), 1.0, -1.0)
    return (sign * out).reshape(mask.shape)


def corner_oracle(data, origin, spacing, p):
    f = (np.asarray(p) - origin) / spacing
    i0 = np.minimum(np.floor(f).astype(int), np.array(data.shape) - 2)
    t = f - i0
    total = 0.0
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                w = (t[0] if dx else 1 - t[0]) * (t[1] if dy else 1 - t[1]) * (t[2] if dz else 1 - t[2])
                total += w * float(data[i0[0] + dx, i0[1] + dy, i0[2] + dz])
    return total

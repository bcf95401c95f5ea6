"""Centerline splines and parallel-transported catheter frames."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numba
import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DataError

N_ARCLENGTH_SAMPLES = 2048

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


class Centerline:
    """Natural cubic spline through centerline points, parametrised by
    normalised arclength ``s`` in [0, 1].

    A centerline may be a *window* onto a longer one (see :meth:`sub`); ``s``
    then spans only the window.  Outside [0, 1] of the underlying curve the
    spline is extended linearly along the end tangents.
    """

    def __init__(self, points, spline, table_t, table_s, length, window=(0.0, 1.0)):
        self.points = points
        self._spline = spline
        self._d1 = spline.derivative(1)
        self._d2 = spline.derivative(2)
        self._table_t = table_t
        self._table_s = table_s
        self._slope = np.diff(table_t) / np.diff(table_s)
        self._length = length
        self.window = (float(window[0]), float(window[1]))

    @property
    def total_length(self) -> float:
        return self._length * (self.window[1] - self.window[0])

    @property
    def full_length(self) -> float:
        return self._length

    def sub(self, s0: float, s1: float) -> "Centerline":
        """Window onto the portion between local parameters ``s0`` and ``s1``."""
        w0, w1 = self.window
        span = w1 - w0
        return Centerline(
            self.points, self._spline, self._table_t, self._table_s, self._length,
            (w0 + s0 * span, w0 + s1 * span),
        )

    def to_global(self, s) -> np.ndarray:
        w0, w1 = self.window
        return w0 + np.asarray(s, dtype=np.float64) * (w1 - w0)

    def _eval_global(self, u: np.ndarray, order: int) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        out = np.empty(u.shape + (3,))
        below, above = u < 0.0, u > 1.0
        mid = ~(below | above)
        if mid.any():
            j = np.clip(np.searchsorted(self._table_s, u[mid], side="right") - 1, 0, len(self._slope) - 1)
            slope = self._slope[j]
            t = self._table_t[j] + (u[mid] - self._table_s[j]) * slope
            if order == 0:
                out[mid] = self._spline(t)
            elif order == 1:
                out[mid] = self._d1(t) * slope[:, None]
            else:
                out[mid] = self._d2(t) * (slope * slope)[:, None]
        for mask, end, k in ((below, 0.0, 0), (above, 1.0, -1)):
            if not mask.any():
                continue
            d_end = self._d1(end) * self._slope[k]
            if order == 0:
                out[mask] = self._spline(end) + (u[mask] - end)[:, None] * d_end
            elif order == 1:
                out[mask] = d_end
            else:
                out[mask] = 0.0
        return out

    def evaluate(self, s) -> np.ndarray:
        return self._eval_global(self.to_global(s), 0)

    def derivative(self, s) -> np.ndarray:
        """dR/ds with respect to the local parameter."""
        span = self.window[1] - self.window[0]
        return self._eval_global(self.to_global(s), 1) * span

    def second_derivative(self, s) -> np.ndarray:
        span = self.window[1] - self.window[0]
        return self._eval_global(self.to_global(s), 2) * span * span

    def __call__(self, s) -> np.ndarray:
        return self.evaluate(s)


def fit_centerline(points) -> Centerline:
    """Fit a natural cubic spline through ``points`` (n >= 4, mm).

    The spline is first parametrised by chord length, then reparametrised by
    arclength using a dense table (2048 samples plus the knots) and
    piecewise-linear inversion.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError("centerline points must have shape (n, 3)")
    if pts.shape[0] < 4:
        raise DataError("centerline needs at least 4 points")
    chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(chords <= 1e-12):
        raise DataError("duplicate consecutive centerline points")
    t_knots = np.concatenate([[0.0], np.cumsum(chords)]) / chords.sum()
    t_knots[-1] = 1.0
    spline = CubicSpline(t_knots, pts, bc_type="natural")

    table_t = np.union1d(np.linspace(0.0, 1.0, N_ARCLENGTH_SAMPLES + 1), t_knots)
    d1 = spline.derivative(1)
    a, b = table_t[:-1], table_t[1:]
    half = 0.5 * (b - a)
    nodes = (a + b)[:, None] * 0.5 + half[:, None] * _GL_NODES[None, :]
    speed = np.linalg.norm(d1(nodes.ravel()), axis=1).reshape(nodes.shape)
    seg = half * (speed @ _GL_WEIGHTS)
    arclen = np.concatenate([[0.0], np.cumsum(seg)])
    length = float(arclen[-1])
    table_s = arclen / length
    table_s[-1] = 1.0
    # a knot landing next to a table sample gives a zero-length step
    keep = np.r_[np.diff(table_s) > 0, True]
    return Centerline(pts, spline, table_t[keep], table_s[keep], length)


@dataclass
class FrameSet:
    """Catheter frames: positions ``R`` and orthonormal triads (T, U, V).

    ``s`` holds the arclength parameter of each frame on the centerline the
    frames were built from.
    """

    R: np.ndarray
    T: np.ndarray
    U: np.ndarray
    V: np.ndarray
    s: np.ndarray

    def __len__(self) -> int:
        return self.R.shape[0]

    def copy(self) -> "FrameSet":
        return FrameSet(self.R.copy(), self.T.copy(), self.U.copy(), self.V.copy(), self.s.copy())

    def subset(self, start: int, end: int) -> "FrameSet":
        return FrameSet(
            self.R[start:end].copy(), self.T[start:end].copy(),
            self.U[start:end].copy(), self.V[start:end].copy(), self.s[start:end].copy(),
        )

    def orthonormality_error(self) -> float:
        norms = [np.abs(np.linalg.norm(X, axis=1) - 1.0).max() for X in (self.T, self.U, self.V)]
        dots = [np.abs(np.einsum("ij,ij->i", X, Y)).max() for X, Y in ((self.T, self.U), (self.T, self.V), (self.U, self.V))]
        handed = np.abs(np.cross(self.T, self.U) - self.V).max()
        return float(max(norms + dots + [handed]))


@numba.njit(cache=True)
def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


@numba.njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@numba.njit(cache=True)
def _min_rotation(a, b, x):
    # rotation taking unit a onto unit b about a x b, applied to x:
    # x + v*x + v*(v*x)/(1+c) with v = a x b, c = a.b (no axis normalisation)
    v = _cross(a, b)
    w = _cross(v, x)
    return x + w + _cross(v, w) / (1.0 + _dot(a, b))


@numba.njit(cache=True)
def _min_rotation_vjp(a, b, x, gf):
    v = _cross(a, b)
    d = 1.0 + _dot(a, b)
    w = _cross(v, x)
    z = _cross(v, w)
    gz = gf / d
    gc = -_dot(gf, z) / (d * d)
    gw = gf + _cross(gz, v)
    gv = _cross(w, gz) + _cross(x, gw)
    gx = gf + _cross(gw, v)
    ga = _cross(b, gv) + gc * b
    gb = _cross(gv, a) + gc * a
    return ga, gb, gx


@numba.njit(cache=True)
def _reflect(v, x):
    return x - (2.0 * _dot(v, x) / _dot(v, v)) * v


@numba.njit(cache=True)
def _reflect_vjp_v(v, x, gy):
    # d/dv of x - 2 (v.x) v / (v.v), contracted with gy
    c = _dot(v, v)
    a = _dot(v, x)
    b = _dot(v, gy)
    return -(2.0 / c) * (b * x + a * gy) + (4.0 * a * b / (c * c)) * v


@numba.njit(cache=True)
def _double_reflection(r0, r1, t0, t1, u0):
    v1 = r1 - r0
    if _dot(v1, v1) == 0.0:
        return _min_rotation(t0, t1, u0)
    u_l = _reflect(v1, u0)
    t_l = _reflect(v1, t0)
    v2 = t1 - t_l
    if _dot(v2, v2) < 1e-300:
        return u_l
    return _reflect(v2, u_l)


@numba.njit(cache=True)
def _double_reflection_vjp(r0, r1, t0, t1, u0, g):
    v1 = r1 - r0
    if _dot(v1, v1) == 0.0:
        g_t0, g_t1, g_u0 = _min_rotation_vjp(t0, t1, u0, g)
        return np.zeros(3), g_t0, g_t1, g_u0
    u_l = _reflect(v1, u0)
    t_l = _reflect(v1, t0)
    v2 = t1 - t_l
    if _dot(v2, v2) < 1e-300:
        g_ul = g
        g_v2 = np.zeros(3)
    else:
        g_ul = _reflect(v2, g)
        g_v2 = _reflect_vjp_v(v2, u_l, g)
    g_t1 = g_v2
    g_tl = -g_v2
    g_t0 = _reflect(v1, g_tl)
    g_v1 = _reflect_vjp_v(v1, t0, g_tl) + _reflect_vjp_v(v1, u0, g_ul)
    g_u0 = _reflect(v1, g_ul)
    return g_v1, g_t0, g_t1, g_u0


@numba.njit(cache=True)
def _transport(R, T, seed_r, seed_t, seed_u):
    n = T.shape[0]
    U = np.empty((n, 3))
    U[0] = _double_reflection(seed_r, R[0], seed_t, T[0], seed_u)
    for i in range(1, n):
        U[i] = _double_reflection(R[i - 1], R[i], T[i - 1], T[i], U[i - 1])
    return U


@numba.njit(cache=True)
def _transport_vjp(R, T, seed_r, seed_t, seed_u, U, gU, gR, gT):
    n = T.shape[0]
    gU = gU.copy()
    gR = gR.copy()
    gT = gT.copy()
    for i in range(n - 1, 0, -1):
        g_v1, g_t0, g_t1, g_u0 = _double_reflection_vjp(R[i - 1], R[i], T[i - 1], T[i], U[i - 1], gU[i])
        gR[i] += g_v1
        gR[i - 1] -= g_v1
        gT[i - 1] += g_t0
        gT[i] += g_t1
        gU[i - 1] += g_u0
    g_v1, g_t0, g_t1, g_u0 = _double_reflection_vjp(seed_r, R[0], seed_t, T[0], seed_u, gU[0])
    gR[0] += g_v1
    gT[0] += g_t1
    return gR, gT


def _unit(v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(v, axis=-1)
    if np.any(norm < 1e-12):
        raise DataError("zero tangent on centerline")
    return v / norm[..., None], norm


@dataclass(frozen=True)
class Seed:
    """Pose the transport starts from: position, tangent and U."""

    r: np.ndarray
    t: np.ndarray
    u: np.ndarray

    @classmethod
    def from_frame(cls, F: "FrameSet", i: int = 0) -> "Seed":
        return cls(F.R[i].copy(), F.T[i].copy(), F.U[i].copy())


def transport_frames(c: Centerline, s, seed: Seed) -> FrameSet:
    """Frames at parameters ``s`` with U carried along from ``seed``.

    Orientation is propagated with the double-reflection rotation-minimising
    scheme (fourth-order accurate in the frame spacing).  When frame 0 sits
    exactly on the seed position the seed U is rotated minimally onto the
    new tangent instead.
    """
    s = np.asarray(s, dtype=np.float64)
    R = c.evaluate(s)
    T, _ = _unit(c.derivative(s))
    U = _transport(R, T, np.asarray(seed.r, float), np.asarray(seed.t, float), np.asarray(seed.u, float))
    V = np.cross(T, U)
    return FrameSet(R, T, U, V, s.copy())


def transport_frames_vjp(c: Centerline, frames: FrameSet, seed: Seed, gR, gU, gV) -> np.ndarray:
    """Pull gradients on (R, U, V) back to the arclength parameters ``s``."""
    s = frames.s
    R, T, U = frames.R, frames.T, frames.U
    gT = np.cross(U, gV)
    gU_total = gU + np.cross(gV, T)
    gR, gT = _transport_vjp(
        R, T, np.asarray(seed.r, float), np.asarray(seed.t, float), np.asarray(seed.u, float),
        U, gU_total, np.asarray(gR, float), gT,
    )
    D = c.derivative(s)
    norm = np.linalg.norm(D, axis=1)
    gD = (gT - np.einsum("ij,ij->i", gT, T)[:, None] * T) / norm[:, None]
    D2 = c.second_derivative(s)
    return np.einsum("ij,ij->i", gD, D2) + np.einsum("ij,ij->i", gR, D)


def least_aligned_axis(t: np.ndarray) -> np.ndarray:
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(t)))] = 1.0
    return axis


def init_frames(c: Centerline, n: int) -> FrameSet:
    """``n`` frames at uniform arclength with parallel-transported orientation.

    The first U is the global axis least aligned with the first tangent,
    projected onto the plane normal to it, which makes the gauge
    deterministic.
    """
    if n < 2:
        raise ValueError("need at least 2 frames")
    s = np.linspace(0.0, 1.0, n)
    t0, _ = _unit(c.derivative(s[:1]))
    t0 = t0[0]
    e = least_aligned_axis(t0)
    u0 = e - np.dot(e, t0) * t0
    u0 /= np.linalg.norm(u0)
    r0 = c.evaluate(s[:1])[0]
    return transport_frames(c, s, Seed(r0, t0, u0))


def resample_frames(c: Centerline, s, ref: FrameSet) -> FrameSet:
    """Frames at new parameters ``s``, transported from ``ref``'s first frame."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1 or s.size < 1:
        raise ValueError("s must be a 1D array")
    if s.size > 1 and np.any(np.diff(s) <= 0.0):
        raise DataError("catheter self-reversal: arclength parameters must be strictly increasing")
    return transport_frames(c, s, Seed.from_frame(ref))

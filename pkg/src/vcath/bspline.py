"""Cubic B-spline bases over frame index and cumulative control vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGREE = 3
ROLES = ("longitudinal", "rotational", "transverse-u", "transverse-v")


def open_uniform_knots(m: int, degree: int = DEGREE) -> np.ndarray:
    """Clamped knot vector on [0, 1] for ``m`` control points."""
    interior = np.linspace(0.0, 1.0, m - degree + 1)[1:-1]
    return np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])


def greville(knots: np.ndarray, degree: int = DEGREE) -> np.ndarray:
    """Greville abscissae: control values that reproduce the identity."""
    m = len(knots) - degree - 1
    return np.array([knots[j + 1:j + degree + 1].mean() for j in range(m)])


def _basis_matrix(u: np.ndarray, knots: np.ndarray, degree: int) -> np.ndarray:
    # Cox-de Boor recursion, vectorised over evaluation points
    m = len(knots) - degree - 1
    nspan = len(knots) - 1
    N = np.zeros((u.size, nspan))
    for j in range(nspan):
        if knots[j] < knots[j + 1]:
            N[:, j] = (u >= knots[j]) & (u < knots[j + 1])
    # right end belongs to the last non-empty span
    last = max(j for j in range(nspan) if knots[j] < knots[j + 1])
    N[u >= knots[last + 1], last] = 1.0
    for p in range(1, degree + 1):
        nxt = np.zeros((u.size, nspan - p))
        for j in range(nspan - p):
            left = knots[j + p] - knots[j]
            right = knots[j + p + 1] - knots[j + 1]
            if left > 0:
                nxt[:, j] += (u - knots[j]) / left * N[:, j]
            if right > 0:
                nxt[:, j] += (knots[j + p + 1] - u) / right * N[:, j + 1]
        N = nxt
    return N[:, :m]


@dataclass(frozen=True)
class BsplineBasis:
    """Dense ``n x m`` cubic basis matrix, fixed after construction."""

    matrix: np.ndarray
    knots: np.ndarray

    @property
    def m(self) -> int:
        return self.matrix.shape[1]

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def identity_controls(self) -> np.ndarray:
        """Control values whose spline is the identity map u -> u."""
        return greville(self.knots)


def build_basis(eval_params, m: int) -> BsplineBasis:
    """Cubic open-uniform basis evaluated at ``eval_params`` (in [0, 1])."""
    if m < DEGREE + 1:
        raise ValueError("need at least 4 control points for a cubic basis")
    u = np.asarray(eval_params, dtype=np.float64)
    if u.ndim != 1:
        raise ValueError("eval_params must be 1D")
    if u.size and (u.min() < 0.0 or u.max() > 1.0):
        raise ValueError("eval_params must lie in [0, 1]")
    if np.any(np.diff(u) < 0):
        raise ValueError("eval_params must be nondecreasing")
    knots = open_uniform_knots(m)
    matrix = _basis_matrix(u, knots, DEGREE)
    matrix.setflags(write=False)
    return BsplineBasis(matrix, knots)


@dataclass
class ControlVector:
    p: np.ndarray
    role: str = "longitudinal"

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.role not in ROLES:
            raise ValueError(f"unknown control role {self.role!r}")
        if self.role == "longitudinal" and np.any(np.diff(self.p) <= 0):
            raise ValueError("longitudinal control points must be strictly increasing")


def clamp_bands(p_init: np.ndarray, max_rel: float) -> np.ndarray:
    """Per-point displacement limits for a cumulative control vector.

    ``max_rel`` times the mean control spacing, further limited by the
    local gaps so neighbouring points can never cross.
    """
    p_init = np.asarray(p_init, dtype=np.float64)
    m = p_init.size
    h = (p_init[-1] - p_init[0]) / (m - 1)
    gaps = np.diff(p_init)
    local = np.full(m, h)
    local[1:] = np.minimum(local[1:], gaps)
    local[:-1] = np.minimum(local[:-1], gaps)
    return max_rel * local


def cumulative_offsets(x, p_init, max_rel=None, bound=None):
    """Clamped cumulative offsets and the mask of points inside their band.

    Returns ``(delta, active)`` with ``delta[0] == 0`` (the proximal point
    never moves) and ``delta[j] = clamp(x[0] + ... + x[j-1])``.
    """
    x = np.asarray(x, dtype=np.float64)
    p_init = np.asarray(p_init, dtype=np.float64)
    if x.size != p_init.size - 1:
        raise ValueError("x must have one entry fewer than p_init")
    raw = np.concatenate([[0.0], np.cumsum(x)])
    if bound is None and max_rel is not None:
        bound = clamp_bands(p_init, max_rel)
    if bound is None:
        return raw, np.ones(raw.size, dtype=bool)
    bound = np.broadcast_to(np.asarray(bound, dtype=np.float64), raw.shape)
    delta = np.clip(raw, -bound, bound)
    # a point sitting on its band edge (up to rounding in the running sum)
    # still passes gradient, so a projected optimizer can pull it back inside
    active = np.abs(raw) <= bound * (1 + 1e-12)
    delta[0] = 0.0
    active[0] = False
    return delta, active


def project_increments(x, bound) -> np.ndarray:
    """Increments whose running sums are clipped into ``bound[1:]``.

    Offsets already inside their band are unchanged; the rest land on the
    band edge.  ``cumulative_offsets`` gives the same ``delta`` before and
    after projection.
    """
    x = np.asarray(x, dtype=np.float64)
    bound = np.asarray(bound, dtype=np.float64)
    raw = np.clip(np.cumsum(x), -bound[1:], bound[1:])
    return np.diff(np.concatenate([[0.0], raw]))


def cumulative_offsets_vjp(g_delta: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Gradient with respect to ``x`` given the gradient on the offsets."""
    g = np.where(active, g_delta, 0.0)[1:]
    return np.cumsum(g[::-1])[::-1]


def cumulative_controls(x, p_init, max_rel=None, role="longitudinal", bound=None) -> ControlVector:
    """Control points displaced by the clamped running sum of ``x``."""
    delta, _ = cumulative_offsets(x, p_init, max_rel, bound)
    return ControlVector(np.asarray(p_init, dtype=np.float64) + delta, role)


def apply(B: BsplineBasis, p) -> np.ndarray:
    """Evaluate the spline: ``B @ p``.  Its derivative in ``p`` is ``B.T``."""
    vec = p.p if isinstance(p, ControlVector) else np.asarray(p, dtype=np.float64)
    if vec.shape != (B.m,):
        raise ValueError(f"expected {B.m} control values, got {vec.shape}")
    return B.matrix @ vec

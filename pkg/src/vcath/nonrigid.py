"""Non-rigid catheter registration: clamped-SDF loss, exact gradients and Adam.

The deformation is parametrised by four control vectors

* ``x_s``      relative longitudinal increments (cumulative, clamped),
* ``x_theta``  relative twist increments (cumulative, radians),
* ``p_u, p_v`` transverse displacements of the catheter in mm,

each mapped to per-frame curves through a fixed cubic B-spline basis over
the frame index.  Frames are rebuilt by parallel transport at every
evaluation and gradients flow through the transport chain exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numba
import numpy as np

from . import bspline
from .errors import ConfigError, DataError, NumericalError
from .geometry import Centerline, FrameSet, Seed, transport_frames, transport_frames_vjp
from .rigid import CropIndices
from .transforms import SamplingGridSpec, phi_rot, phi_trans, virtual_catheter_sample
from .volume import (
    DEFAULT_TAU,
    PullbackGrid,
    Volume3D,
    clamp_inside,
    gaussian_smooth_longitudinal,
    trilinear_at,
)

log = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    """Hyperparameters of the non-rigid stage."""

    lr_long: float = 0.001
    lr_rot: float = 0.01
    lr_trans: float = 0.01
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_rel: float = 0.35
    smooth_sigma: float = 1.0
    smooth_ksize: int = 3
    m_s: int = 30
    m_theta: int = 20
    m_d: int = 60
    tau: float = DEFAULT_TAU
    seed: int = 0

    def __post_init__(self):
        for name in ("lr_long", "lr_rot", "lr_trans", "tau", "eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not 0 < self.max_rel <= 0.5:
            raise ConfigError("max_rel must lie in (0, 0.5]")
        if min(self.m_s, self.m_theta, self.m_d) < 4:
            raise ConfigError("control point counts must be >= 4")
        if self.smooth_ksize < 1 or self.smooth_ksize % 2 == 0:
            raise ConfigError("smooth_ksize must be odd and >= 1")


@dataclass
class DeformationParams:
    """Optimisation variables plus the per-frame curves they generate."""

    x_s: np.ndarray
    x_theta: np.ndarray
    p_u: np.ndarray
    p_v: np.ndarray
    s: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    d_u: Optional[np.ndarray] = None
    d_v: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, m_s: int, m_theta: int, m_d: int) -> "DeformationParams":
        return cls(np.zeros(m_s - 1), np.zeros(m_theta - 1), np.zeros(m_d), np.zeros(m_d))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x_s, self.x_theta, self.p_u, self.p_v])

    def sizes(self):
        return (self.x_s.size, self.x_theta.size, self.p_u.size, self.p_v.size)

    def with_flat(self, v: np.ndarray) -> "DeformationParams":
        parts = np.split(np.asarray(v, dtype=np.float64), np.cumsum(self.sizes())[:-1])
        return DeformationParams(*[p.copy() for p in parts])

    def to_dict(self) -> dict:
        out = {k: getattr(self, k).tolist() for k in ("x_s", "x_theta", "p_u", "p_v")}
        for k in ("s", "theta", "d_u", "d_v"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v.tolist()
        return out


@dataclass
class RegistrationResult:
    """Output of one registration run.

    ``frames`` are the final (best-loss) catheter frames over the crop;
    ``rigid_frames`` the frames after the rigid stage alone.  ``params`` is
    None when the non-rigid stage was skipped.
    """

    crop: CropIndices
    rigid_angle: float
    frames: FrameSet
    rigid_frames: FrameSet
    rigid_loss: float
    params: Optional[DeformationParams] = None
    loss_history: List[float] = field(default_factory=list)
    s_min_gap: List[float] = field(default_factory=list)
    best_epoch: int = 0
    best_loss: Optional[float] = None

    def to_dict(self) -> dict:
        out = {
            "crop": self.crop.to_dict(),
            "rigid_angle_rad": self.rigid_angle,
            "rigid_angle_deg": float(np.degrees(self.rigid_angle)),
            "rigid_loss": self.rigid_loss,
            "n_frames": len(self.frames),
        }
        if self.params is not None:
            out.update(
                params=self.params.to_dict(),
                loss_history=list(self.loss_history),
                s_min_gap=list(self.s_min_gap),
                s_monotone=bool(all(g > 0 for g in self.s_min_gap)),
                best_epoch=self.best_epoch,
                best_loss=self.best_loss,
            )
        return out


def loss(ct_pull: PullbackGrid, oct_pull: PullbackGrid, tau: float = DEFAULT_TAU) -> float:
    """Mean squared difference of the clamped fields over frames valid in both."""
    if ct_pull.data.shape != oct_pull.data.shape:
        raise DataError(f"pullback shapes differ: {ct_pull.data.shape} vs {oct_pull.data.shape}")
    valid = ct_pull.valid_mask & oct_pull.valid_mask
    if not valid.any():
        raise DataError("no valid frames for the loss")
    a = clamp_inside(ct_pull.data[valid].astype(np.float64), tau)
    b = clamp_inside(oct_pull.data[valid].astype(np.float64), tau)
    return float(np.mean((a - b) ** 2))


@numba.njit(cache=True)
def _loss_kernel(data, origin, spacing, background, R, U, V, a, b, target, valid, tau, want_grad, S, A, Bv):
    # Sum of squared clamped residuals over valid frames.  With want_grad,
    # also per-frame sums of dSSE/dpoint (S), weighted by the column offset
    # along U (A) and by the row offset along V (Bv).
    n = R.shape[0]
    h = b.size
    w = a.size
    total = 0.0
    for i in range(n):
        if not valid[i]:
            continue
        frame_sum = 0.0
        s0 = s1 = s2 = 0.0
        a0 = a1 = a2 = 0.0
        b0 = b1 = b2 = 0.0
        for r in range(h):
            br = b[r]
            for c in range(w):
                ac = a[c]
                x = R[i, 0] + ac * U[i, 0] + br * V[i, 0]
                y = R[i, 1] + ac * U[i, 1] + br * V[i, 1]
                z = R[i, 2] + ac * U[i, 2] + br * V[i, 2]
                v, gx, gy, gz = trilinear_at(data, origin, spacing, x, y, z, background)
                cv = min(max(v, 0.0), tau)
                res = cv - target[i, r, c]
                frame_sum += res * res
                if want_grad and v > 0.0 and v < tau:
                    k = 2.0 * res
                    gx *= k
                    gy *= k
                    gz *= k
                    s0 += gx
                    s1 += gy
                    s2 += gz
                    a0 += ac * gx
                    a1 += ac * gy
                    a2 += ac * gz
                    b0 += br * gx
                    b1 += br * gy
                    b2 += br * gz
        total += frame_sum
        if want_grad:
            S[i, 0] = s0
            S[i, 1] = s1
            S[i, 2] = s2
            A[i, 0] = a0
            A[i, 1] = a1
            A[i, 2] = a2
            Bv[i, 0] = b0
            Bv[i, 1] = b1
            Bv[i, 2] = b2
    return total


def _rowdot(X, Y):
    return np.einsum("ij,ij->i", X, Y)


class NonrigidProblem:
    """Loss and gradient of the stretch/twist/bend deformation over a crop.

    Parameters
    ----------
    centerline : Centerline
        Centerline window covering the cropped CT frames; frame ``j`` of the
        undeformed catheter sits at ``s = j / (n - 1)``.
    seed : Seed
        Pose the parallel transport starts from (the first unrotated crop
        frame).
    vol : Volume3D
        CT-side lumen SDF.
    target : PullbackGrid
        Target (OCT-side) lumen SDF over the crop, already smoothed.
    rigid_angle : float
        Global rotation added to the twist curve.
    """

    def __init__(
        self,
        centerline: Centerline,
        seed: Seed,
        vol: Volume3D,
        target: PullbackGrid,
        cfg: OptimizerConfig,
        rigid_angle: float = 0.0,
        spec: Optional[SamplingGridSpec] = None,
    ):
        n = target.n_frames
        if n < 4:
            raise DataError("need at least 4 frames for the non-rigid stage")
        if not target.valid_mask.any():
            raise DataError("no valid target frames")
        self.c = centerline
        self.seed = seed
        self.vol = vol
        self.target = target
        self.cfg = cfg
        self.rigid_angle = float(rigid_angle)
        self.spec = spec if spec is not None else SamplingGridSpec.like(target)
        if tuple(self.spec.frame_shape) != tuple(target.frame_shape):
            raise DataError("sampling grid does not match the target frame shape")
        u = np.linspace(0.0, 1.0, n)
        self.B_s = bspline.build_basis(u, cfg.m_s)
        self.B_theta = bspline.build_basis(u, cfg.m_theta)
        self.B_d = bspline.build_basis(u, cfg.m_d)
        self.p_s_init = self.B_s.identity_controls()
        self.s_bound = bspline.clamp_bands(self.p_s_init, cfg.max_rel)
        self.p_theta_init = np.zeros(cfg.m_theta)
        self._target_c = np.ascontiguousarray(clamp_inside(target.data.astype(np.float64), cfg.tau))
        self._a, self._b = self.spec.offsets()
        self._n_pix = int(target.valid_mask.sum()) * target.frame_shape[0] * target.frame_shape[1]
        self._origin = np.asarray(vol.origin, dtype=np.float64)
        self._spacing = np.asarray(vol.spacing, dtype=np.float64)

    @classmethod
    def from_crop(
        cls,
        centerline: Centerline,
        frames: FrameSet,
        crop: CropIndices,
        vol: Volume3D,
        oct_lumen: PullbackGrid,
        cfg: OptimizerConfig,
        rigid_angle: float = 0.0,
    ) -> "NonrigidProblem":
        """Fold a rigid result in: restrict the centerline and target to the
        crop and smooth the target once."""
        s0, s1 = frames.s[crop.ct_start], frames.s[crop.ct_end - 1]
        c_crop = centerline.sub(s0, s1)
        seed = Seed.from_frame(frames, crop.ct_start)
        target = oct_lumen.crop(crop.oct_start, crop.oct_end)
        target = gaussian_smooth_longitudinal(target, cfg.smooth_sigma, cfg.smooth_ksize)
        return cls(c_crop, seed, vol, target, cfg, rigid_angle)

    @property
    def n(self) -> int:
        return self.target.n_frames

    def initial_params(self) -> DeformationParams:
        return DeformationParams.zeros(self.cfg.m_s, self.cfg.m_theta, self.cfg.m_d)

    def curves(self, params: DeformationParams):
        """Per-frame (s, theta, d_u, d_v) and the in-band mask of the stretch controls."""
        ds, active = bspline.cumulative_offsets(params.x_s, self.p_s_init, bound=self.s_bound)
        s = bspline.apply(self.B_s, self.p_s_init + ds)
        dth, _ = bspline.cumulative_offsets(params.x_theta, self.p_theta_init)
        theta = self.rigid_angle + bspline.apply(self.B_theta, dth)
        d_u = bspline.apply(self.B_d, params.p_u)
        d_v = bspline.apply(self.B_d, params.p_v)
        return s, theta, d_u, d_v, active

    def _check_monotone(self, s: np.ndarray) -> float:
        gap = float(np.min(np.diff(s)))
        if not gap > 0:
            raise NumericalError(f"arclength parameters lost strict monotonicity (min gap {gap:.3e})")
        return gap

    def frames(self, params: DeformationParams):
        s, theta, d_u, d_v, active = self.curves(params)
        self._check_monotone(s)
        F_s = transport_frames(self.c, s, self.seed)
        F_theta = phi_rot(F_s, theta)
        F_phi = phi_trans(F_theta, d_u, d_v)
        params.s, params.theta, params.d_u, params.d_v = s, theta, d_u, d_v
        return F_s, F_theta, F_phi, active

    def _run_kernel(self, F_phi: FrameSet, want_grad: bool):
        n = len(F_phi)
        S = np.zeros((n, 3))
        A = np.zeros((n, 3))
        Bv = np.zeros((n, 3))
        sse = _loss_kernel(
            self.vol.data, self._origin, self._spacing, 0.0,
            np.ascontiguousarray(F_phi.R), np.ascontiguousarray(F_phi.U), np.ascontiguousarray(F_phi.V),
            self._a, self._b, self._target_c, self.target.valid_mask, float(self.cfg.tau), want_grad,
            S, A, Bv,
        )
        return sse / self._n_pix, S / self._n_pix, A / self._n_pix, Bv / self._n_pix

    def value(self, params: DeformationParams) -> float:
        _, _, F_phi, _ = self.frames(params)
        return self._run_kernel(F_phi, False)[0]

    def forward(self, params: DeformationParams):
        """Deformed frames and loss."""
        _, _, F_phi, _ = self.frames(params)
        return F_phi, self._run_kernel(F_phi, False)[0]

    def value_and_grad(self, params: DeformationParams):
        """Loss and its gradient as a flat vector ordered like ``params.flat()``."""
        F_s, F_theta, F_phi, active = self.frames(params)
        L, S, A, Bv = self._run_kernel(F_phi, True)
        U, V = F_theta.U, F_theta.V
        d_u, d_v, theta = params.d_u, params.d_v, params.theta
        g_du = _rowdot(S, U)
        g_dv = _rowdot(S, V)
        gU = A + d_u[:, None] * S
        gV = Bv + d_v[:, None] * S
        g_theta = _rowdot(gU, V) - _rowdot(gV, U)
        cos, sin = np.cos(theta)[:, None], np.sin(theta)[:, None]
        gU_s = cos * gU - sin * gV
        gV_s = sin * gU + cos * gV
        g_s = transport_frames_vjp(self.c, F_s, self.seed, S, gU_s, gV_s)
        g_xs = bspline.cumulative_offsets_vjp(self.B_s.matrix.T @ g_s, active)
        g_xt = bspline.cumulative_offsets_vjp(self.B_theta.matrix.T @ g_theta, np.ones(self.cfg.m_theta, bool))
        g_pu = self.B_d.matrix.T @ g_du
        g_pv = self.B_d.matrix.T @ g_dv
        return L, np.concatenate([g_xs, g_xt, g_pu, g_pv])

    def saturated(self, params: DeformationParams) -> np.ndarray:
        """Flat mask of coordinates whose gradient is cut by the stretch clamp."""
        _, active = bspline.cumulative_offsets(params.x_s, self.p_s_init, bound=self.s_bound)
        # x_s[k] feeds offsets k+1..m-1; it is dead when all of them are clamped
        dead = np.array([not active[k + 1:].any() for k in range(params.x_s.size)])
        rest = np.zeros(params.x_theta.size + params.p_u.size + params.p_v.size, dtype=bool)
        return np.concatenate([dead, rest])

    def project(self, params: DeformationParams) -> DeformationParams:
        """Pull stretch increments back so every cumulative offset lies in its band."""
        return DeformationParams(bspline.project_increments(params.x_s, self.s_bound),
                                 params.x_theta.copy(), params.p_u.copy(), params.p_v.copy())

    def learning_rates(self, params: DeformationParams) -> np.ndarray:
        n_s, n_t, n_u, n_v = params.sizes()
        cfg = self.cfg
        return np.concatenate([
            np.full(n_s, cfg.lr_long), np.full(n_t, cfg.lr_rot), np.full(n_u + n_v, cfg.lr_trans),
        ])

    def sample(self, F: FrameSet) -> PullbackGrid:
        grid = virtual_catheter_sample(F, self.vol, self.spec, self.target.frame_spacing)
        grid.valid_mask = self.target.valid_mask.copy()
        return grid


class Adam:
    """Adam with a per-coordinate learning rate vector."""

    def __init__(self, lr: np.ndarray, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = np.asarray(lr, dtype=np.float64)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros_like(self.lr)
        self.v = np.zeros_like(self.lr)
        self.t = 0

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _snapshot(v: np.ndarray) -> str:
    return np.array2string(v[:8], precision=4) + (" ..." if v.size > 8 else "")


def optimize(
    problem: NonrigidProblem,
    epochs: Optional[int] = None,
    callback: Optional[Callable[[int, float], None]] = None,
):
    """Run Adam on ``problem`` and return the best iterate.

    Returns ``(best_params, best_loss, best_epoch, initial_loss, history,
    s_min_gap)`` where ``history[t]`` is the loss after step ``t + 1`` and
    ``best_epoch`` counts steps (0 = the starting point).
    """
    cfg = problem.cfg
    epochs = cfg.epochs if epochs is None else epochs
    params = problem.initial_params()
    L, g = problem.value_and_grad(params)
    if not np.isfinite(L) or not np.all(np.isfinite(g)):
        raise NumericalError(f"non-finite loss or gradient at iteration 0; params {_snapshot(params.flat())}")
    initial = L
    best = (L, 0, params)
    opt = Adam(problem.learning_rates(params), cfg.beta1, cfg.beta2, cfg.eps)
    x = params.flat()
    history, gaps = [], []
    for it in range(1, epochs + 1):
        params = problem.project(params.with_flat(opt.step(x, g)))
        x = params.flat()
        L, g = problem.value_and_grad(params)
        if not np.isfinite(L) or not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite loss at iteration {it}; params {_snapshot(x)}")
        gaps.append(problem._check_monotone(params.s))
        history.append(float(L))
        if L < best[0]:
            best = (L, it, params)
        if callback is not None:
            callback(it, float(L))
    L_best, epoch_best, p_best = best
    if L_best > initial:
        log.warning("best loss %.6g exceeds initial loss %.6g", L_best, initial)
    return p_best, float(L_best), epoch_best, float(initial), history, gaps

"""Single-stroke rendering: hard reference path and differentiable soft path.

The soft path turns a smooth signed-distance-like field into an alpha matte
with a sigmoid of slope ``sharpness`` (pixels^-1). Rectangles use the product
of four half-plane sigmoids, curves use a log-sum-exp over disks stamped
along the Bezier trajectory. :func:`rasterize_vjp` returns the exact
vector-Jacobian product of :func:`soft_rasterize`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _accel
from . import _kernels_numpy as _knp
from .stroke_model import MIN_SIZE_PX, BrushType, StrokeParams, bezier_weights, floor_size

# sigmoid(-36) ~ 2e-16: pixels farther than CUTOFF / sharpness outside a
# stroke are left at exactly zero.
CUTOFF = 36.0
TEXTURE_SEED = 20201


@dataclass(frozen=True)
class SoftnessConfig:
    sharpness: float = 50.0
    samples_per_curve: int = 64

    def __post_init__(self):
        if not self.sharpness > 0:
            raise ValueError("sharpness must be positive")
        if self.samples_per_curve < 16:
            raise ValueError("samples_per_curve must be >= 16")

    def rescaled(self, from_resolution: int, to_resolution: int) -> "SoftnessConfig":
        """Same edge width in canvas units at a different pixel resolution."""
        return SoftnessConfig(self.sharpness * from_resolution / to_resolution, self.samples_per_curve)


@dataclass(frozen=True)
class RenderOut:
    foreground: np.ndarray
    alpha: np.ndarray


@lru_cache(maxsize=8)
def texture_params(seed: int = TEXTURE_SEED):
    """Procedural bristle-streak pattern used by the oil brush."""
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(1.0, 4.0, 6)
    phases = rng.uniform(0.0, 2.0 * np.pi, 6)
    amps = rng.uniform(0.5, 1.0, 6)
    along = np.array([1.0, rng.uniform(0.0, 2.0 * np.pi), 1.0])
    for a in (freqs, phases, amps, along):
        a.flags.writeable = False
    return freqs, phases, amps, along


def _kernels():
    if _accel.backend() == "numba":
        from . import _kernels_numba

        return _kernels_numba
    return _knp


def _clip_box(x_lo, x_hi, y_lo, y_hi, R):
    i0 = min(max(int(math.floor(y_lo)), 0), R)
    i1 = min(max(int(math.ceil(y_hi)) + 1, 0), R)
    j0 = min(max(int(math.floor(x_lo)), 0), R)
    j1 = min(max(int(math.ceil(x_hi)) + 1, 0), R)
    return np.array([i0, max(i1, i0), j0, max(j1, j0)], dtype=np.int64)


# --- rectangles (oil, tape) -------------------------------------------------


def _rect_setup(p: StrokeParams, R: int):
    v = p.values
    h_px, dh = floor_size(v[2] * R)
    w_px, dw = floor_size(v[3] * R)
    geom = np.array([v[0] * R, v[1] * R, h_px / 2.0, w_px / 2.0, v[4] * np.pi])
    if p.brush is BrushType.OIL:
        c0, c2 = v[5:8].copy(), v[8:11].copy()
    else:
        c0 = v[5:8].copy()
        c2 = c0.copy()
    return geom, c0, c2, p.brush is BrushType.OIL, (dh, dw)


def _rect_box(geom, kappa, R):
    cx, cy, hh, hw, theta = geom
    m = CUTOFF / kappa
    c, s = abs(math.cos(theta)), abs(math.sin(theta))
    ex = c * (hw + m) + s * (hh + m)
    ey = s * (hw + m) + c * (hh + m)
    return _clip_box(cx - ex, cx + ex, cy - ey, cy + ey, R)


def _rect_call(kern, name, R, geom, c0, c2, textured, kappa, box, *extra):
    tex = texture_params()
    if kern is _knp:
        return getattr(kern, name)(R, geom, c0, c2, textured, kappa, tex, box, *extra)
    return getattr(kern, name)(R, geom, c0, c2, textured, kappa, *tex, box, *extra)


# --- curves (marker, watercolor) ---------------------------------------------


def _curve_setup(p: StrokeParams, R: int, samples: int):
    v = p.values
    ts = np.linspace(0.0, 1.0, samples)
    B = bezier_weights(ts)
    ctrl = v[0:6].reshape(3, 2) * R
    bx = B @ ctrl[:, 0]
    by = B @ ctrl[:, 1]
    if p.brush is BrushType.MARKER:
        d_px, dd = floor_size(v[6] * R)
        radii = np.full(samples, d_px / 2.0)
        c0 = v[7:10].copy()
        c2 = c0.copy()
        A = float(v[10])
        floors = (dd,)
    else:
        r0, d0 = floor_size(v[6] * R)
        r2, d2 = floor_size(v[7] * R)
        radii = (1.0 - ts) * r0 + ts * r2
        c0, c2 = v[8:11].copy(), v[11:14].copy()
        A = float(v[14])
        floors = (d0, d2)
    return ts, B, bx, by, radii, c0, c2, A, floors


def _curve_box(bx, by, radii, kappa, eps, R):
    m = CUTOFF / kappa + radii.max() + eps
    return _clip_box(bx.min() - m, bx.max() + m, by.min() - m, by.max() + m, R)


def _smooth_eps(kappa):
    # Rounds the distance cone at each disk center; shrinks with the edge width.
    return 0.5 / kappa


# --- public API ---------------------------------------------------------------


def soft_rasterize(p: StrokeParams, resolution: int, cfg: SoftnessConfig = SoftnessConfig()) -> RenderOut:
    R = int(resolution)
    kern = _kernels()
    kappa = float(cfg.sharpness)
    if p.brush.is_curve:
        ts, _, bx, by, radii, c0, c2, A, _ = _curve_setup(p, R, cfg.samples_per_curve)
        eps = _smooth_eps(kappa)
        box = _curve_box(bx, by, radii, kappa, eps, R)
        fg, alpha = kern.curve_forward(R, bx, by, radii, ts, c0, c2, A, kappa, eps, box)
    else:
        geom, c0, c2, textured, _ = _rect_setup(p, R)
        box = _rect_box(geom, kappa, R)
        fg, alpha = _rect_call(kern, "rect_forward", R, geom, c0, c2, textured, kappa, box)
    return RenderOut(fg, alpha)


def rasterize_vjp(
    p: StrokeParams,
    resolution: int,
    cfg: SoftnessConfig,
    upstream_fg: np.ndarray,
    upstream_alpha: np.ndarray,
) -> np.ndarray:
    """Sum over pixels of upstream * d(soft render)/d(p.values)."""
    R = int(resolution)
    upstream_fg = np.ascontiguousarray(upstream_fg, dtype=np.float64)
    upstream_alpha = np.ascontiguousarray(upstream_alpha, dtype=np.float64)
    if upstream_fg.shape != (R, R, 3) or upstream_alpha.shape != (R, R):
        raise ValueError("upstream shapes must be (R, R, 3) and (R, R)")
    kern = _kernels()
    kappa = float(cfg.sharpness)
    grad = np.zeros(p.brush.n_params)
    if p.brush.is_curve:
        ts, B, bx, by, radii, c0, c2, A, floors = _curve_setup(p, R, cfg.samples_per_curve)
        eps = _smooth_eps(kappa)
        box = _curve_box(bx, by, radii, kappa, eps, R)
        g_bx, g_by, g_r, g_c0, g_c2, g_A = kern.curve_vjp(
            R, bx, by, radii, ts, c0, c2, A, kappa, eps, box, upstream_fg, upstream_alpha
        )
        grad[0:6:2] = R * (B.T @ g_bx)
        grad[1:6:2] = R * (B.T @ g_by)
        if p.brush is BrushType.MARKER:
            grad[6] = 0.5 * R * floors[0] * g_r.sum()
            grad[7:10] = g_c0 + g_c2
            grad[10] = g_A
        else:
            grad[6] = R * floors[0] * ((1.0 - ts) @ g_r)
            grad[7] = R * floors[1] * (ts @ g_r)
            grad[8:11] = g_c0
            grad[11:14] = g_c2
            grad[14] = g_A
        return grad
    geom, c0, c2, textured, (dh, dw) = _rect_setup(p, R)
    box = _rect_box(geom, kappa, R)
    g = _rect_call(kern, "rect_vjp", R, geom, c0, c2, textured, kappa, box, upstream_fg, upstream_alpha)
    grad[0] = R * g[0]
    grad[1] = R * g[1]
    grad[2] = 0.5 * R * dh * g[2]
    grad[3] = 0.5 * R * dw * g[3]
    grad[4] = np.pi * g[4]
    if textured:
        grad[5:8] = g[5:8]
        grad[8:11] = g[8:11]
    else:
        grad[5:8] = g[5:8] + g[8:11]
    return grad


def hard_rasterize(p: StrokeParams, resolution: int, cfg: SoftnessConfig = SoftnessConfig()) -> RenderOut:
    """Binary-edged rendering at pixel centers; the reference vector engine."""
    R = int(resolution)
    jj, ii = np.meshgrid(np.arange(R) + 0.5, np.arange(R) + 0.5)
    px, py = jj.ravel(), ii.ravel()
    if p.brush.is_curve:
        ts, _, bx, by, radii, c0, c2, A, _ = _curve_setup(p, R, cfg.samples_per_curve)
        dist = np.hypot(px[:, None] - bx[None, :], py[:, None] - by[None, :])
        val = radii[None, :] - dist
        k = val.argmax(axis=1)
        inside = val[np.arange(px.size), k] >= 0.0
        t = ts[k]
        col = c0[None, :] + t[:, None] * (c2 - c0)[None, :]
        fg = np.where(inside[:, None], col, 0.0)
        alpha = np.where(inside, A, 0.0)
    else:
        geom, c0, c2, textured, _ = _rect_setup(p, R)
        cx, cy, hh, hw, theta = geom
        c, s = math.cos(theta), math.sin(theta)
        dx, dy = px - cx, py - cy
        u = c * dx + s * dy
        v = -s * dx + c * dy
        inside = (np.abs(u) <= hw) & (np.abs(v) <= hh)
        if textured:
            t = np.clip((u + hw) / (2.0 * hw), 0.0, 1.0)
            tb = np.clip((v + hh) / (2.0 * hh), 0.0, 1.0)
            tex = np.ones_like(u)
            tex[inside], _, _ = _knp._texture(t[inside], tb[inside], texture_params())
        else:
            t = np.zeros_like(u)
            tex = np.ones_like(u)
        col = (c0[None, :] + t[:, None] * (c2 - c0)[None, :]) * tex[:, None]
        fg = np.where(inside[:, None], col, 0.0)
        alpha = inside.astype(np.float64)
    return RenderOut(fg.reshape(R, R, 3), alpha.reshape(R, R))


__all__ = [
    "MIN_SIZE_PX",
    "RenderOut",
    "SoftnessConfig",
    "hard_rasterize",
    "rasterize_vjp",
    "soft_rasterize",
    "texture_params",
]

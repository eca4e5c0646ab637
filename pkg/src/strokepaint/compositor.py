"""Soft blending of strokes onto a canvas, forward and backward."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .rasterizer import RenderOut, SoftnessConfig, hard_rasterize, rasterize_vjp, soft_rasterize
from .stroke_model import StrokeParams

BACKGROUNDS = {"white": (1.0, 1.0, 1.0), "black": (0.0, 0.0, 0.0), "gray": (0.5, 0.5, 0.5)}


def blank_canvas(resolution: int, color="white") -> np.ndarray:
    if isinstance(color, str):
        color = BACKGROUNDS[color]
    canvas = np.empty((resolution, resolution, 3))
    canvas[:] = np.asarray(color, dtype=np.float64)
    return canvas


def blend(h: np.ndarray, r: RenderOut) -> np.ndarray:
    """h' = alpha * s + (1 - alpha) * h, per channel."""
    if h.shape != r.foreground.shape or h.shape[:2] != r.alpha.shape:
        raise ValueError(f"shape mismatch: canvas {h.shape}, stroke {r.foreground.shape}/{r.alpha.shape}")
    a = r.alpha[..., None]
    return a * r.foreground + (1.0 - a) * h


def _rasterize(mode: str):
    if mode == "soft":
        return soft_rasterize
    if mode == "hard":
        return lambda p, res, cfg: hard_rasterize(p, res, cfg)
    raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")


def render_sequence(
    strokes: Sequence[StrokeParams],
    h0: np.ndarray,
    resolution: int,
    cfg: SoftnessConfig = SoftnessConfig(),
    mode: str = "soft",
) -> np.ndarray:
    raster = _rasterize(mode)
    h = np.array(h0, dtype=np.float64, copy=True)
    for p in strokes:
        h = blend(h, raster(p, resolution, cfg))
    return h


def render_with_tape(strokes, h0, resolution, cfg):
    """Soft forward pass keeping what :func:`sequence_vjp_from_tape` needs.

    The tape holds each stroke's render plus the canvas it was blended
    onto; memory grows with the number of strokes in the active set only.
    """
    h = np.array(h0, dtype=np.float64, copy=True)
    tape = []
    for p in strokes:
        r = soft_rasterize(p, resolution, cfg)
        tape.append((r, h))
        h = blend(h, r)
    return h, tape


def sequence_vjp_from_tape(strokes, tape, resolution, cfg, upstream: np.ndarray) -> list[np.ndarray]:
    grads: list[np.ndarray] = [None] * len(strokes)  # type: ignore[list-item]
    g = np.array(upstream, dtype=np.float64, copy=True)
    for t in range(len(strokes) - 1, -1, -1):
        r, h_prev = tape[t]
        a = r.alpha[..., None]
        g_fg = a * g
        g_alpha = ((r.foreground - h_prev) * g).sum(axis=2)
        grads[t] = rasterize_vjp(strokes[t], resolution, cfg, g_fg, g_alpha)
        g *= 1.0 - a
    return grads


def sequence_vjp(
    strokes: Sequence[StrokeParams],
    h0: np.ndarray,
    resolution: int,
    cfg: SoftnessConfig,
    upstream: np.ndarray,
) -> list[np.ndarray]:
    """Gradients of <upstream, h_T> w.r.t. every stroke's parameters (soft path)."""
    if upstream.shape != (resolution, resolution, 3):
        raise ValueError("upstream must have the canvas shape")
    _, tape = render_with_tape(strokes, h0, resolution, cfg)
    return sequence_vjp_from_tape(strokes, tape, resolution, cfg, upstream)

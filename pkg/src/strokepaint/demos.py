"""Pixel loss vs transport loss on a single square stroke.

A 20 x 20 px tape square slides horizontally away from an identical target
square on a 128 px canvas. Once the two are disjoint the pixel loss is flat
while the transport loss keeps growing with the distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compositor import blank_canvas, blend, sequence_vjp
from .losses import LossWeights, SinkhornConfig, l1_loss, ot_loss
from .painter import ActiveSet, PaintConfig, alpha_iou, optimize_active_set
from .rasterizer import SoftnessConfig, hard_rasterize, soft_rasterize
from .stroke_model import StrokeParams

RESOLUTION = 128
SQUARE_PX = 20.0
TARGET_CENTER_PX = (14.0, 64.0)
DEFAULT_DISTANCES = tuple(float(d) for d in range(0, 101, 5))


def square(center_px: tuple[float, float], resolution: int = RESOLUTION) -> StrokeParams:
    cx, cy = center_px
    side = SQUARE_PX / resolution
    return StrokeParams("tape", [cx / resolution, cy / resolution, side, side, 0.0, 0.0, 0.0, 0.0])


def target_canvas(resolution: int = RESOLUTION) -> np.ndarray:
    return blend(blank_canvas(resolution), hard_rasterize(square(TARGET_CENTER_PX, resolution), resolution))


@dataclass(frozen=True)
class SweepRow:
    distance_px: float
    l1: float
    l1_grad: float  # |d l1 / d x0|, normalized units
    ot: float


def zero_gradient_sweep(
    distances=DEFAULT_DISTANCES,
    softness: SoftnessConfig = SoftnessConfig(),
    sinkhorn: SinkhornConfig = SinkhornConfig(),
) -> list[SweepRow]:
    """Losses of the sliding square against the target at each distance.

    The default edge is crisp (under a pixel). A painting-soft edge reaches
    36 / sharpness px past the square and would be clipped by the canvas
    border at the far end of the sweep, which changes the pixel loss.
    """
    R = RESOLUTION
    ref = target_canvas(R)
    h0 = blank_canvas(R)
    rows = []
    for d in distances:
        p = square((TARGET_CENTER_PX[0] + d, TARGET_CENTER_PX[1]), R)
        canvas = blend(h0, soft_rasterize(p, R, softness))
        l1, g_l1 = l1_loss(canvas, ref)
        ot, _ = ot_loss(canvas, ref, sinkhorn)
        grad = sequence_vjp([p], h0, R, softness, g_l1)[0]
        rows.append(SweepRow(float(d), l1, abs(float(grad[0])), ot))
    return rows


@dataclass(frozen=True)
class ConvergenceRun:
    beta_ot: float
    iou: list[float]
    final_iou: float
    final: StrokeParams


def convergence_run(beta_ot: float, steps: int = 500, config: PaintConfig | None = None) -> ConvergenceRun:
    """Optimize one tape square started 58 px right of and 40 px below its target."""
    R = RESOLUTION
    config = config or PaintConfig(brush="tape")
    config = PaintConfig(
        brush="tape",
        learning_rate=config.learning_rate,
        weights=LossWeights(config.weights.beta_l1, beta_ot),
        sinkhorn=config.sinkhorn,
        softness=config.softness,
        working_resolution=R,
        seed=config.seed,
    )
    target = square(TARGET_CENTER_PX, R)
    target_alpha = hard_rasterize(target, R).alpha
    ref = target_canvas(R)
    start = square((TARGET_CENTER_PX[0] + 58.0, TARGET_CENTER_PX[1] + 40.0), R)
    ious: list[float] = []

    def record(step, strokes, report):
        ious.append(alpha_iou(soft_rasterize(strokes[0], R, config.softness).alpha, target_alpha))

    res = optimize_active_set(ActiveSet([0], [start], blank_canvas(R)), ref, config, steps, record)
    final = res.strokes[0]
    final_iou = alpha_iou(soft_rasterize(final, R, config.softness).alpha, target_alpha)
    return ConvergenceRun(beta_ot, ious, final_iou, final)

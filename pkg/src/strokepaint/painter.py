"""Stroke parameter search: RMSprop over growing active sets, scheduled
coarse to fine over overlapping m x m blocks of the canvas.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .compositor import blank_canvas, blend, render_with_tape, sequence_vjp_from_tape
from .document import PaintingDocument
from .losses import LossReport, LossWeights, SinkhornConfig, total_loss
from .rasterizer import SoftnessConfig, soft_rasterize
from .stroke_model import BrushType, StrokeParams, bezier_point

# Edge slope (px^-1) used while painting at 128 px: about one pixel of soft edge.
# Sharp edges leave the transport gradient almost nothing to act on.
PAINT_SHARPNESS = 2.0


@dataclass(frozen=True)
class PaintConfig:
    brush: BrushType = BrushType.OIL
    total_strokes: int = 300
    scales: tuple[int, ...] = (1, 2, 3, 4)
    overlap_fraction: float = 0.2
    steps_per_stroke: int = 20
    working_resolution: int = 128
    learning_rate: float = 0.01
    weights: LossWeights = LossWeights()
    sinkhorn: SinkhornConfig = SinkhornConfig()
    softness: SoftnessConfig = SoftnessConfig(PAINT_SHARPNESS)
    seed: int = 0
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "brush", BrushType.parse(self.brush))
        object.__setattr__(self, "scales", tuple(int(m) for m in self.scales))
        if self.total_strokes < 1:
            raise ValueError("total_strokes must be >= 1")
        if not self.scales or any(m < 1 for m in self.scales):
            raise ValueError("scales must be a nonempty list of positive integers")
        if any(b < a for a, b in zip(self.scales, self.scales[1:])):
            raise ValueError("scales must be nondecreasing")
        if not 0.0 <= self.overlap_fraction < 0.5:
            raise ValueError("overlap_fraction must be in [0, 0.5)")
        if self.steps_per_stroke < 1:
            raise ValueError("steps_per_stroke must be >= 1")
        if self.working_resolution < 8:
            raise ValueError("working_resolution must be >= 8")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class OptimState:
    v: np.ndarray
    gamma: float = 0.9
    delta: float = 1e-8
    step: int = 0

    @classmethod
    def zeros(cls, shape, gamma=0.9, delta=1e-8) -> "OptimState":
        return cls(np.zeros(shape), gamma, delta)


def rmsprop_step(params: np.ndarray, grads: np.ndarray, state: OptimState, mu: float):
    """One RMSprop update followed by projection onto [0, 1]."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.v.shape:
        raise ValueError("params, grads and optimizer state must share a shape")
    v = state.gamma * state.v + (1.0 - state.gamma) * grads * grads
    new = np.clip(params - mu * grads / (np.sqrt(v) + state.delta), 0.0, 1.0)
    return new, OptimState(v, state.gamma, state.delta, state.step + 1)


# --- blocks -------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    """Axis-aligned rectangle in normalized canvas coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


def blocks_for_scale(m: int, overlap_fraction: float) -> list[Block]:
    """m*m blocks in row-major scan order, each grown by overlap * side."""
    side = 1.0 / m
    pad = overlap_fraction * side
    out = []
    for r in range(m):
        for c in range(m):
            out.append(
                Block(
                    max(0.0, c * side - pad),
                    max(0.0, r * side - pad),
                    min(1.0, (c + 1) * side + pad),
                    min(1.0, (r + 1) * side + pad),
                )
            )
    return out


def stroke_budget(total: int, scales: Sequence[int]) -> list[list[int]]:
    """Strokes per block, per scale. Every block gets total // sum(m^2);
    the remainder goes one stroke each to the earliest blocks."""
    n_blocks = sum(m * m for m in scales)
    base, extra = divmod(total, n_blocks)
    if base == 0 and extra == 0:
        raise ValueError("zero stroke budget")
    flat = [base + (1 if k < extra else 0) for k in range(n_blocks)]
    out, k = [], 0
    for m in scales:
        out.append(flat[k : k + m * m])
        k += m * m
    return out


def group_sizes(n: int) -> list[int]:
    """Active-set growth schedule: groups of max(1, n // 4) strokes."""
    g = max(1, n // 4)
    sizes = [g] * (n // g)
    if n % g:
        sizes.append(n % g)
    return sizes


# --- initialization -----------------------------------------------------------


def _sample_color(ref: np.ndarray, x: float, y: float) -> np.ndarray:
    R = ref.shape[0]
    i = min(max(int(y * R), 0), R - 1)
    j = min(max(int(x * R), 0), ref.shape[1] - 1)
    return ref[i, j].astype(np.float64)


def init_strokes_for_block(
    block: Block,
    ref: np.ndarray,
    n: int,
    seed,
    brush: BrushType | str = BrushType.OIL,
) -> list[StrokeParams]:
    """Random strokes centered in ``block``, colored from ``ref`` at their center."""
    if n < 1:
        raise ValueError("n must be >= 1")
    brush = BrushType.parse(brush)
    rng = np.random.default_rng(seed)
    side = 0.5 * (block.width + block.height)
    out = []
    for _ in range(n):
        cx = rng.uniform(block.x0, block.x1)
        cy = rng.uniform(block.y0, block.y1)
        if brush.is_curve:
            # control points inside a random square around the center, kept
            # inside the block so the curve midpoint stays there too
            half = 0.5 * side * rng.uniform(0.1, 0.5)
            lo = np.array([max(block.x0, cx - half), max(block.y0, cy - half)])
            hi = np.array([min(block.x1, cx + half), min(block.y1, cy + half)])
            ctrl = rng.uniform(lo, hi, size=(3, 2))
            mid = bezier_point(ctrl[0], ctrl[1], ctrl[2], 0.5)
            color = _sample_color(ref, mid[0], mid[1])
            if brush is BrushType.MARKER:
                d = side * rng.uniform(0.1, 0.5)
                v = np.concatenate([ctrl.ravel(), [d], color, [0.8]])
            else:
                # radii, so half the sampled size
                r = 0.5 * side * rng.uniform(0.1, 0.5, size=2)
                v = np.concatenate([ctrl.ravel(), r, color, color, [0.8]])
        else:
            h, w = side * rng.uniform(0.1, 0.5, size=2)
            theta = rng.uniform()
            color = _sample_color(ref, cx, cy)
            if brush is BrushType.OIL:
                v = np.concatenate([[cx, cy, h, w, theta], color, color])
            else:
                v = np.concatenate([[cx, cy, h, w, theta], color])
        out.append(StrokeParams(brush, np.clip(v, 0.0, 1.0)))
    return out


# --- optimization -------------------------------------------------------------


@dataclass
class ActiveSet:
    """Strokes under optimization over a fixed, pre-rendered background."""

    indices: list[int]
    strokes: list[StrokeParams]
    background: np.ndarray
    state: OptimState | None = None

    def add(self, start_index: int, new: Sequence[StrokeParams]) -> None:
        self.indices.extend(range(start_index, start_index + len(new)))
        self.strokes.extend(new)
        if self.state is not None and len(new):
            pad = np.zeros((len(new), self.state.v.shape[1]))
            self.state = OptimState(np.vstack([self.state.v, pad]), self.state.gamma, self.state.delta, self.state.step)


@dataclass
class OptimResult:
    strokes: list[StrokeParams]
    trace: list[LossReport]
    best: LossReport
    state: OptimState


def optimize_active_set(
    active: ActiveSet,
    ref: np.ndarray,
    config: PaintConfig,
    steps: int,
    on_step: Callable[[int, list[StrokeParams], LossReport], None] | None = None,
) -> OptimResult:
    """Run ``steps`` RMSprop iterations on every active stroke jointly.

    Returns the parameters with the lowest total loss among all evaluated
    iterates (each step evaluates before it updates). ``on_step`` sees the
    strokes each loss was evaluated at.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not active.strokes:
        raise ValueError("active set is empty")
    R = config.working_resolution
    brush = active.strokes[0].brush
    params = np.stack([p.values for p in active.strokes])
    state = active.state if active.state is not None else OptimState.zeros(params.shape)
    trace: list[LossReport] = []
    best, best_params = None, params
    for _ in range(steps):
        strokes = [StrokeParams(brush, row) for row in params]
        canvas, tape = render_with_tape(strokes, active.background, R, config.softness)
        report, g_canvas = total_loss(canvas, ref, config.weights, config.sinkhorn)
        trace.append(report)
        if on_step is not None:
            on_step(len(trace) - 1, strokes, report)
        if best is None or report.total < best.total:
            best, best_params = report, params
        grads = np.stack(sequence_vjp_from_tape(strokes, tape, R, config.softness, g_canvas))
        params, state = rmsprop_step(params, grads, state, config.learning_rate)
    return OptimResult([StrokeParams(brush, row) for row in best_params], trace, best, state)


# --- full pipeline -----------------------------------------------------------


@dataclass
class BlockTelemetry:
    scale: int
    block_index: int
    block: Block
    n_strokes: int
    baseline: LossReport  # frozen canvas before the block
    trace: list[LossReport]
    best: LossReport  # loss of the strokes that were frozen


def provenance(config: PaintConfig) -> dict:
    return {
        "seed": config.seed,
        "scales": list(config.scales),
        "total_strokes": config.total_strokes,
        "overlap_fraction": config.overlap_fraction,
        "steps_per_stroke": config.steps_per_stroke,
        "learning_rate": config.learning_rate,
        "weights": asdict(config.weights),
        "sinkhorn": asdict(config.sinkhorn),
        "sharpness": config.softness.sharpness,
        "samples_per_curve": config.softness.samples_per_curve,
        "working_resolution": config.working_resolution,
    }


def _freeze(canvas: np.ndarray, strokes: Sequence[StrokeParams], config: PaintConfig) -> np.ndarray:
    for p in strokes:
        canvas = blend(canvas, soft_rasterize(p, config.working_resolution, config.softness))
    return canvas


def paint(
    ref: np.ndarray,
    config: PaintConfig = PaintConfig(),
    progress: Callable[[BlockTelemetry], None] | None = None,
) -> tuple[PaintingDocument, list[BlockTelemetry]]:
    """Paint ``ref`` (already at the working resolution) stroke by stroke."""
    R = config.working_resolution
    ref = np.asarray(ref, dtype=np.float64)
    if ref.shape != (R, R, 3):
        raise ValueError(f"reference must be ({R}, {R}, 3), got {ref.shape}")
    budget = stroke_budget(config.total_strokes, config.scales)
    canvas = blank_canvas(R, config.background)
    painted: list[StrokeParams] = []
    telemetry: list[BlockTelemetry] = []
    for s_idx, (m, per_block) in enumerate(zip(config.scales, budget)):
        for b_idx, block in enumerate(blocks_for_scale(m, config.overlap_fraction)):
            n = per_block[b_idx]
            if n == 0:
                continue
            baseline, _ = total_loss(canvas, ref, config.weights, config.sinkhorn)
            active = ActiveSet([], [], canvas)
            trace: list[LossReport] = []
            result = None
            for g_idx, size in enumerate(group_sizes(n)):
                seed = np.random.SeedSequence([config.seed, s_idx, b_idx, g_idx])
                active.add(len(painted) + len(active.strokes), init_strokes_for_block(block, ref, size, seed, config.brush))
                result = optimize_active_set(active, ref, config, config.steps_per_stroke * size)
                active.strokes = list(result.strokes)
                active.state = result.state
                trace.extend(result.trace)
            canvas = _freeze(canvas, active.strokes, config)
            painted.extend(active.strokes)
            tel = BlockTelemetry(m, b_idx, block, n, baseline, trace, result.best)
            telemetry.append(tel)
            if progress is not None:
                progress(tel)
    doc = PaintingDocument(
        brush=config.brush,
        strokes=tuple(painted),
        background=config.background,
        provenance=provenance(config),
    )
    return doc, telemetry


def alpha_iou(a: np.ndarray, b: np.ndarray, threshold: float = 0.5) -> float:
    """Intersection over union of two alpha mattes thresholded at ``threshold``."""
    ma, mb = a >= threshold, b >= threshold
    union = np.logical_or(ma, mb).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(ma, mb).sum() / union)


__all__ = [
    "ActiveSet",
    "Block",
    "BlockTelemetry",
    "OptimResult",
    "OptimState",
    "PAINT_SHARPNESS",
    "PaintConfig",
    "alpha_iou",
    "blocks_for_scale",
    "group_sizes",
    "init_strokes_for_block",
    "optimize_active_set",
    "paint",
    "rmsprop_step",
    "stroke_budget",
]

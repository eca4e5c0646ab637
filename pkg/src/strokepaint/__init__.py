"""Stroke-based painting by gradient search over brush parameters."""

from .compositor import blank_canvas, blend, render_sequence, sequence_vjp
from .document import PaintingDocument, export_document, import_document, render_document
from .losses import LossReport, LossWeights, SinkhornConfig, l1_loss, ot_loss, sinkhorn_plan, total_loss
from .painter import PaintConfig, paint
from .rasterizer import RenderOut, SoftnessConfig, hard_rasterize, rasterize_vjp, soft_rasterize
from .stroke_model import BrushType, StrokeParams

__version__ = "0.1.0"

__all__ = [
    "BrushType",
    "LossReport",
    "LossWeights",
    "PaintConfig",
    "PaintingDocument",
    "RenderOut",
    "SinkhornConfig",
    "SoftnessConfig",
    "StrokeParams",
    "blank_canvas",
    "blend",
    "export_document",
    "hard_rasterize",
    "import_document",
    "l1_loss",
    "ot_loss",
    "paint",
    "rasterize_vjp",
    "render_document",
    "render_sequence",
    "sequence_vjp",
    "sinkhorn_plan",
    "soft_rasterize",
    "total_loss",
]

"""Vector painting documents: JSON serialization and re-rendering."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .compositor import blank_canvas, render_sequence
from .rasterizer import SoftnessConfig
from .stroke_model import BrushType, StrokeParams

FORMAT_VERSION = "1.0"
SUPPORTED_VERSIONS = (FORMAT_VERSION,)
FIELDS = ("format_version", "brush", "background", "canvas_aspect", "strokes", "provenance")
MIN_RENDER_RESOLUTION = 8


class DocumentError(ValueError):
    """Malformed, unsupported or out-of-range document content."""


@dataclass(frozen=True)
class PaintingDocument:
    brush: BrushType
    strokes: tuple[StrokeParams, ...] = ()
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)
    canvas_aspect: tuple[int, int] = (1, 1)
    provenance: dict[str, Any] = field(default_factory=dict)
    format_version: str = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "brush", BrushType.parse(self.brush))
        object.__setattr__(self, "strokes", tuple(self.strokes))
        object.__setattr__(self, "background", tuple(float(c) for c in self.background))
        for p in self.strokes:
            if p.brush is not self.brush:
                raise DocumentError(f"stroke brush {p.brush.value} differs from document brush {self.brush.value}")

    def __eq__(self, other):
        if not isinstance(other, PaintingDocument):
            return NotImplemented
        return (
            self.format_version == other.format_version
            and self.brush is other.brush
            and self.background == other.background
            and tuple(self.canvas_aspect) == tuple(other.canvas_aspect)
            and self.strokes == other.strokes
            and self.provenance == other.provenance
        )

    __hash__ = None  # provenance is a mutable mapping

    def softness(self) -> tuple[SoftnessConfig, int]:
        """Edge softness the strokes were optimized with, and its resolution."""
        prov = self.provenance
        cfg = SoftnessConfig(
            float(prov.get("sharpness", SoftnessConfig.sharpness)),
            int(prov.get("samples_per_curve", SoftnessConfig.samples_per_curve)),
        )
        return cfg, int(prov.get("working_resolution", 128))


def _in_unit(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) and 0.0 <= x <= 1.0


def _validate_values(values, brush: BrushType, where: str):
    if not isinstance(values, list) or len(values) != brush.n_params:
        raise DocumentError(f"{where}: expected {brush.n_params} values for {brush.value}")
    for name, x in zip(brush.param_names, values):
        if not _in_unit(x):
            raise DocumentError(f"{where}: parameter {name}={x!r} outside [0, 1]")


def to_dict(doc: PaintingDocument) -> dict:
    return {
        "format_version": doc.format_version,
        "brush": doc.brush.value,
        "background": list(doc.background),
        "canvas_aspect": list(doc.canvas_aspect),
        "strokes": [p.values.tolist() for p in doc.strokes],
        "provenance": doc.provenance,
    }


def from_dict(data: Any) -> PaintingDocument:
    if not isinstance(data, dict):
        raise DocumentError("document root must be an object")
    missing = [k for k in FIELDS if k not in data]
    extra = sorted(set(data) - set(FIELDS))
    if missing or extra:
        raise DocumentError(f"bad fields: missing {missing}, unknown {extra}")
    if data["format_version"] not in SUPPORTED_VERSIONS:
        raise DocumentError(f"unsupported format_version {data['format_version']!r}")
    try:
        brush = BrushType.parse(data["brush"])
    except ValueError as exc:
        raise DocumentError(str(exc)) from None
    bg = data["background"]
    if not isinstance(bg, list) or len(bg) != 3 or not all(_in_unit(c) for c in bg):
        raise DocumentError("background must be three values in [0, 1]")
    aspect = data["canvas_aspect"]
    if (
        not isinstance(aspect, list)
        or len(aspect) != 2
        or not all(isinstance(a, int) and not isinstance(a, bool) and a > 0 for a in aspect)
    ):
        raise DocumentError("canvas_aspect must be two positive integers")
    if not isinstance(data["strokes"], list):
        raise DocumentError("strokes must be a list")
    if not isinstance(data["provenance"], dict):
        raise DocumentError("provenance must be an object")
    strokes = []
    for k, values in enumerate(data["strokes"]):
        _validate_values(values, brush, f"stroke {k}")
        strokes.append(StrokeParams(brush, np.array(values, dtype=np.float64)))
    return PaintingDocument(
        brush=brush,
        strokes=tuple(strokes),
        background=tuple(bg),
        canvas_aspect=tuple(aspect),
        provenance=data["provenance"],
        format_version=data["format_version"],
    )


def export_document(doc: PaintingDocument) -> bytes:
    # json writes floats with repr(), which round-trips float64 exactly.
    return (json.dumps(to_dict(doc), indent=1, allow_nan=False) + "\n").encode("utf-8")


def import_document(data: bytes | str) -> PaintingDocument:
    try:
        parsed = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DocumentError(f"malformed document: {exc}") from None
    return from_dict(parsed)


def render_document(doc: PaintingDocument, resolution: int, mode: str = "soft") -> np.ndarray:
    """Render at any resolution; soft edges keep their width in canvas units."""
    if resolution < MIN_RENDER_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RENDER_RESOLUTION}")
    cfg, work_res = doc.softness()
    cfg = cfg.rescaled(work_res, resolution)
    return render_sequence(doc.strokes, blank_canvas(resolution, doc.background), resolution, cfg, mode)

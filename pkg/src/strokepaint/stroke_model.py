"""Brush parameterizations and stroke geometry.

Every stroke is stored as a vector of normalized parameters in [0, 1].
Positions and sizes are fractions of the canvas side, the rotation angle
is a fraction of 180 degrees, colors and transparency are used as-is.
Pixel geometry is only produced at render time by :func:`denormalize`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

MIN_SIZE_PX = 2.0
FLOOR_SLOPE = 4.0


class BrushType(str, enum.Enum):
    OIL = "oil"
    MARKER = "marker"
    WATERCOLOR = "watercolor"
    TAPE = "tape"

    @property
    def param_names(self) -> tuple[str, ...]:
        return PARAM_NAMES[self]

    @property
    def n_params(self) -> int:
        return len(PARAM_NAMES[self])

    @property
    def is_curve(self) -> bool:
        return self in (BrushType.MARKER, BrushType.WATERCOLOR)

    @classmethod
    def parse(cls, value: "str | BrushType") -> "BrushType":
        if isinstance(value, BrushType):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown brush type {value!r}") from None


# Controller order for each family; this is also the on-disk order.
PARAM_NAMES: dict[BrushType, tuple[str, ...]] = {
    BrushType.OIL: ("x0", "y0", "h", "w", "theta", "R0", "G0", "B0", "R2", "G2", "B2"),
    BrushType.MARKER: ("x0", "y0", "x1", "y1", "x2", "y2", "d", "R", "G", "B", "A"),
    BrushType.WATERCOLOR: (
        "x0", "y0", "x1", "y1", "x2", "y2", "r0", "r2",
        "R0", "G0", "B0", "R2", "G2", "B2", "A",
    ),
    BrushType.TAPE: ("x0", "y0", "h", "w", "theta", "R", "G", "B"),
}

SHAPE_COUNT = {BrushType.OIL: 5, BrushType.MARKER: 7, BrushType.WATERCOLOR: 8, BrushType.TAPE: 5}


def param_index(brush: BrushType, name: str) -> int:
    return PARAM_NAMES[brush].index(name)


def color_slice(brush: BrushType) -> slice:
    """Slice of the color (and transparency) controllers."""
    return slice(SHAPE_COUNT[brush], brush.n_params)


@dataclass(frozen=True)
class StrokeParams:
    brush: BrushType
    values: np.ndarray

    def __post_init__(self):
        brush = BrushType.parse(self.brush)
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.shape[0] != brush.n_params:
            raise ValueError(
                f"{brush.value} strokes have {brush.n_params} parameters, got {values.shape[0]}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "brush", brush)
        object.__setattr__(self, "values", values)

    def __getitem__(self, name: str) -> float:
        return float(self.values[param_index(self.brush, name)])

    def replace(self, **updates: float) -> "StrokeParams":
        values = self.values.copy()
        for name, value in updates.items():
            values[param_index(self.brush, name)] = value
        return StrokeParams(self.brush, values)

    def __eq__(self, other):
        if not isinstance(other, StrokeParams):
            return NotImplemented
        return self.brush == other.brush and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.brush, self.values.tobytes()))


@dataclass(frozen=True)
class RectGeometry:
    """Rotated rectangle (oil paint and color tape), pixel units."""

    center: tuple[float, float]
    height: float
    width: float
    theta: float  # radians
    head_color: np.ndarray
    tail_color: np.ndarray


@dataclass(frozen=True)
class CurveGeometry:
    """Quadratic Bezier stroke (marker pen and watercolor), pixel units."""

    control_points: np.ndarray  # (3, 2) rows P0, P1, P2 as (x, y)
    radius0: float
    radius2: float
    head_color: np.ndarray
    tail_color: np.ndarray
    alpha: float


StrokeGeometry = RectGeometry | CurveGeometry


def sample_random_stroke(brush: BrushType | str, seed=None) -> StrokeParams:
    brush = BrushType.parse(brush)
    rng = np.random.default_rng(seed)
    return StrokeParams(brush, rng.random(brush.n_params))


def clamp_params(p: StrokeParams) -> StrokeParams:
    return StrokeParams(p.brush, np.clip(p.values, 0.0, 1.0))


def bezier_point(p0, p1, p2, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"Bezier parameter t={t} outside [0, 1]")
    p0, p1, p2 = (np.asarray(p, dtype=np.float64) for p in (p0, p1, p2))
    s = 1.0 - t
    return s * s * p0 + 2.0 * s * t * p1 + t * t * p2


def bezier_weights(ts: np.ndarray) -> np.ndarray:
    """Bernstein weights, shape (len(ts), 3)."""
    ts = np.asarray(ts, dtype=np.float64)
    s = 1.0 - ts
    return np.stack([s * s, 2.0 * s * ts, ts * ts], axis=1)


def floor_size(size_px: float) -> tuple[float, float]:
    """Smooth minimum-size floor. Returns (size, d size / d raw).

    2 + softplus(k (raw - 2)) / k with k = 4 px^-1: equals 2.0001 px at
    raw = 0, is within 0.005 px of raw above 3 px, and keeps a nonzero
    derivative so a collapsed stroke can still grow back.
    """
    z = FLOOR_SLOPE * (size_px - MIN_SIZE_PX)
    soft = max(z, 0.0) + math.log1p(math.exp(-abs(z)))
    deriv = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    return MIN_SIZE_PX + soft / FLOOR_SLOPE, deriv


def denormalize(p: StrokeParams, resolution: int) -> StrokeGeometry:
    if resolution < 8:
        raise ValueError(f"resolution must be >= 8, got {resolution}")
    v = p.values
    R = float(resolution)
    if p.brush in (BrushType.OIL, BrushType.TAPE):
        h, _ = floor_size(v[2] * R)
        w, _ = floor_size(v[3] * R)
        if p.brush is BrushType.OIL:
            c0, c2 = v[5:8].copy(), v[8:11].copy()
        else:
            c0 = c2 = v[5:8].copy()
        return RectGeometry((v[0] * R, v[1] * R), h, w, v[4] * np.pi, c0, c2)
    ctrl = v[0:6].reshape(3, 2) * R
    if p.brush is BrushType.MARKER:
        d, _ = floor_size(v[6] * R)
        c = v[7:10].copy()
        return CurveGeometry(ctrl, d / 2.0, d / 2.0, c, c, float(v[10]))
    r0, _ = floor_size(v[6] * R)
    r2, _ = floor_size(v[7] * R)
    return CurveGeometry(ctrl, r0, r2, v[8:11].copy(), v[11:14].copy(), float(v[14]))


def stroke_center(p: StrokeParams) -> tuple[float, float]:
    """Normalized (x, y) center: rectangle center or curve midpoint."""
    v = p.values
    if p.brush.is_curve:
        c = bezier_point(v[0:2], v[2:4], v[4:6], 0.5)
        return float(c[0]), float(c[1])
    return float(v[0]), float(v[1])

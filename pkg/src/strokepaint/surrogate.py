"""Small neural stroke renderer with separate shape and shading pathways.

Two dense networks at 32 x 32: G_r maps shape parameters to a silhouette,
G_s maps all parameters to a color map. Their product is the foreground
and the silhouette scaled by the stroke transparency is the alpha matte.
The single-pathway variants exist for the ablation table.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _accel
from . import _kernels_numpy as _knp
from .rasterizer import RenderOut, SoftnessConfig, hard_rasterize
from .stroke_model import SHAPE_COUNT, BrushType, StrokeParams

RESOLUTION = 32
VALIDATION_SIZE = 512
VALIDATION_SEED = 90210
PSNR_CAP = 100.0
CHECKPOINT_MAGIC = b"SPSURR"
CHECKPOINT_VERSION = 1


class Variant(str, enum.Enum):
    RASTER_ONLY = "rasterization-only"
    SHADING_ONLY = "shading-only"
    DUAL = "dual"


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


# --- dense network -------------------------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class DenseNet:
    """Fully connected ReLU network with a sigmoid output layer."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need matching, nonempty weight and bias lists")
        for k, (W, b) in enumerate(zip(weights, biases)):
            if b.shape != (W.shape[1],):
                raise ValueError(f"layer {k}: bias shape {b.shape} does not match {W.shape}")
            if k and weights[k - 1].shape[1] != W.shape[0]:
                raise ValueError(f"layer {k}: input {W.shape[0]} != previous output {weights[k - 1].shape[1]}")
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, sizes: list[int], rng: np.random.Generator) -> "DenseNet":
        weights, biases = [], []
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = k == len(sizes) - 2
            scale = np.sqrt((1.0 if last else 2.0) / n_in)
            weights.append(rng.standard_normal((n_in, n_out)) * scale)
            biases.append(np.zeros(n_out))
        return cls(weights, biases)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def params(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def forward(self, x: np.ndarray):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = _sigmoid(z) if k == last else np.maximum(z, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, acts, g_out: np.ndarray) -> list[np.ndarray]:
        """Gradients in :meth:`params` order, given d loss / d output."""
        grads: list[np.ndarray] = []
        y = acts[-1]
        g = g_out * y * (1.0 - y)
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = acts[k]
            grads.append(g.sum(axis=0))
            grads.append(h_in.T @ g)
            if k:
                g = (g @ self.weights[k].T) * (h_in > 0.0)
        grads.reverse()  # now W0, b0, W1, b1, ...
        return grads


class Adam:
    def __init__(self, params: list[np.ndarray], lr=2e-4, betas=(0.9, 0.999), eps=1e-8):
        for p in params:
            if not p.flags.c_contiguous:
                raise ValueError("Adam updates parameters in place; they must be C-contiguous")
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros(p.size) for p in params]
        self.v = [np.zeros(p.size) for p in params]
        self._tmp = [np.empty(p.size) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        use_numba = _accel.backend() == "numba"
        if use_numba:
            from ._kernels_numba import adam_update
        for p, g, m, v, tmp in zip(self.params, grads, self.m, self.v, self._tmp):
            flat_p = p.reshape(-1)
            flat_g = np.ascontiguousarray(g, dtype=np.float64).reshape(-1)
            args = (flat_p, flat_g, m, v, self.b1, self.b2, self.lr / c1, 1.0 / np.sqrt(c2), self.eps)
            if use_numba:
                adam_update(*args)
            else:
                _knp.adam_update(*args, tmp=tmp)


# --- model ----------------------------------------------------------------------


@dataclass
class SurrogateModel:
    variant: Variant
    brush: BrushType
    g_s: DenseNet | None = None
    g_r: DenseNet | None = None
    resolution: int = RESOLUTION

    def __post_init__(self):
        self.variant = Variant(self.variant)
        self.brush = BrushType.parse(self.brush)
        need_s = self.variant in (Variant.DUAL, Variant.SHADING_ONLY)
        need_r = self.variant in (Variant.DUAL, Variant.RASTER_ONLY)
        if need_s != (self.g_s is not None) or need_r != (self.g_r is not None):
            raise ValueError(f"{self.variant.value} model has the wrong set of networks")

    def networks(self) -> dict[str, DenseNet]:
        return {k: n for k, n in (("g_s", self.g_s), ("g_r", self.g_r)) if n is not None}

    def params(self) -> list[np.ndarray]:
        return [p for net in self.networks().values() for p in net.params()]


def build_model(
    variant: Variant | str,
    brush: BrushType | str,
    seed=0,
    hidden_s=(512, 512, 512, 512),
    hidden_r=(256, 256, 256, 256),
    resolution: int = RESOLUTION,
) -> SurrogateModel:
    variant, brush = Variant(variant), BrushType.parse(brush)
    rng = np.random.default_rng(seed)
    pix = resolution * resolution
    g_s = g_r = None
    if variant in (Variant.DUAL, Variant.SHADING_ONLY):
        g_s = DenseNet.init([brush.n_params, *hidden_s, 3 * pix], rng)
    if variant in (Variant.DUAL, Variant.RASTER_ONLY):
        g_r = DenseNet.init([SHAPE_COUNT[brush], *hidden_r, pix], rng)
    return SurrogateModel(variant, brush, g_s, g_r, resolution)


def _transparency(brush: BrushType, P: np.ndarray) -> np.ndarray:
    if brush in (BrushType.MARKER, BrushType.WATERCOLOR):
        return P[:, -1]
    return np.ones(P.shape[0])


def forward_batch(model: SurrogateModel, P: np.ndarray):
    """Foreground (B, H, W, 3), alpha (B, H, W) and a cache for the backward pass."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    B, R = P.shape[0], model.resolution
    A = _transparency(model.brush, P)[:, None, None]
    cache: dict = {"A": A}
    if model.g_r is not None:
        sil, cache["acts_r"] = model.g_r.forward(P[:, : SHAPE_COUNT[model.brush]])
        sil = sil.reshape(B, R, R)
        cache["sil"] = sil
    if model.g_s is not None:
        col, cache["acts_s"] = model.g_s.forward(P)
        col = col.reshape(B, R, R, 3)
        cache["col"] = col
    if model.variant is Variant.DUAL:
        fg = col * sil[..., None]
        alpha = A * sil
    elif model.variant is Variant.RASTER_ONLY:
        fg = np.repeat(sil[..., None], 3, axis=3)
        alpha = A * sil
    else:
        fg = col
        alpha = col.mean(axis=3)
    return fg, alpha, cache


def forward(model: SurrogateModel, p: StrokeParams) -> RenderOut:
    if p.brush is not model.brush:
        raise ValueError(f"model renders {model.brush.value} strokes, got {p.brush.value}")
    fg, alpha, _ = forward_batch(model, p.values[None, :])
    return RenderOut(fg[0], alpha[0])


def loss_and_grads(model: SurrogateModel, P, fg_t, alpha_t) -> tuple[float, list[np.ndarray]]:
    """Squared-error loss on foreground plus alpha (per-pixel means) and its
    gradients in :meth:`SurrogateModel.params` order."""
    fg, alpha, c = forward_batch(model, P)
    d_fg = fg - fg_t
    d_a = alpha - alpha_t
    loss = float(np.mean(d_fg**2) + np.mean(d_a**2))
    g_fg = 2.0 * d_fg / d_fg.size
    g_a = 2.0 * d_a / d_a.size
    B = fg.shape[0]
    g_col = g_sil = None
    if model.variant is Variant.DUAL:
        g_col = g_fg * c["sil"][..., None]
        g_sil = (g_fg * c["col"]).sum(axis=3) + c["A"] * g_a
    elif model.variant is Variant.RASTER_ONLY:
        g_sil = g_fg.sum(axis=3) + c["A"] * g_a
    else:
        g_col = g_fg + g_a[..., None] / 3.0
    grads: list[np.ndarray] = []
    if model.g_s is not None:
        grads += model.g_s.backward(c["acts_s"], g_col.reshape(B, -1))
    if model.g_r is not None:
        grads += model.g_r.backward(c["acts_r"], g_sil.reshape(B, -1))
    return loss, grads


# --- data -----------------------------------------------------------------------


def render_targets(brush: BrushType, P: np.ndarray, resolution: int = RESOLUTION):
    cfg = SoftnessConfig()
    fg = np.empty((len(P), resolution, resolution, 3))
    alpha = np.empty((len(P), resolution, resolution))
    for k, row in enumerate(P):
        r = hard_rasterize(StrokeParams(brush, row), resolution, cfg)
        fg[k], alpha[k] = r.foreground, r.alpha
    return fg, alpha


def validation_set(brush: BrushType | str, n: int = VALIDATION_SIZE, resolution: int = RESOLUTION):
    """Held-out strokes, identical for every call with the same brush."""
    brush = BrushType.parse(brush)
    index = list(BrushType).index(brush)
    P = np.random.default_rng([VALIDATION_SEED, index]).random((n, brush.n_params))
    return (P, *render_targets(brush, P, resolution))


def evaluate(model: SurrogateModel, P, fg_t, alpha_t, batch: int = 128) -> float:
    """Mean over strokes of the average of foreground and alpha PSNR."""
    scores = []
    for k in range(0, len(P), batch):
        fg, alpha, _ = forward_batch(model, P[k : k + batch])
        for j in range(fg.shape[0]):
            scores.append(0.5 * (psnr(fg[j], fg_t[k + j]) + psnr(alpha[j], alpha_t[k + j])))
    return float(np.mean(scores))


# --- training -------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    brush: BrushType = BrushType.OIL
    epochs: int = 40
    strokes_per_epoch: int = 2048
    batch_size: int = 64
    learning_rate: float = 2e-4
    lr_decay: float = 1.0  # multiplicative, per epoch
    betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    hidden_s: tuple[int, ...] = (512, 512, 512, 512)
    hidden_r: tuple[int, ...] = (256, 256, 256, 256)
    validation_size: int = VALIDATION_SIZE

    def __post_init__(self):
        object.__setattr__(self, "brush", BrushType.parse(self.brush))
        for name in ("epochs", "strokes_per_epoch", "batch_size", "validation_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("learning rate must be positive and lr_decay in (0, 1]")


@dataclass
class TrainResult:
    model: SurrogateModel
    psnr_curve: list[float]
    loss_trace: list[float] = field(default_factory=list)


def train(
    variant: Variant | str,
    cfg: TrainConfig = TrainConfig(),
    validation=None,
    progress: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Fit one variant to hard-rasterized strokes; fresh strokes every epoch."""
    variant = Variant(variant)
    model = build_model(variant, cfg.brush, [cfg.seed, 0], cfg.hidden_s, cfg.hidden_r)
    val = validation if validation is not None else validation_set(cfg.brush, cfg.validation_size)
    opt = Adam(model.params(), cfg.learning_rate, cfg.betas)
    curve, trace = [], []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, 1, epoch])
        P = rng.random((cfg.strokes_per_epoch, cfg.brush.n_params))
        fg_t, a_t = render_targets(cfg.brush, P)
        order = rng.permutation(len(P))
        for k in range(0, len(P), cfg.batch_size):
            idx = order[k : k + cfg.batch_size]
            loss, grads = loss_and_grads(model, P[idx], fg_t[idx], a_t[idx])
            opt.step(grads)
            trace.append(loss)
        opt.lr *= cfg.lr_decay
        curve.append(evaluate(model, *val))
        if progress is not None:
            progress(epoch, curve[-1])
    return TrainResult(model, curve, trace)


ABLATION_ORDER = (Variant.RASTER_ONLY, Variant.SHADING_ONLY, Variant.DUAL)


def ablate(cfg: TrainConfig = TrainConfig(), progress=None) -> list[tuple[str, float]]:
    """Train every variant under ``cfg``; (variant label, held-out mean PSNR) rows."""
    val = validation_set(cfg.brush, cfg.validation_size)
    rows = []
    for variant in ABLATION_ORDER:
        res = train(variant, cfg, val)
        rows.append((variant.value, res.psnr_curve[-1]))
        if progress is not None:
            progress(variant, res.psnr_curve[-1])
    return rows


# --- checkpoints ----------------------------------------------------------------


def save_checkpoint(model: SurrogateModel, path: str | Path) -> None:
    """Magic, header length, JSON header (shapes), then little-endian float64
    arrays in row-major order: every network's W0, b0, W1, b1, ..."""
    nets = model.networks()
    header = {
        "version": CHECKPOINT_VERSION,
        "variant": model.variant.value,
        "brush": model.brush.value,
        "resolution": model.resolution,
        "networks": {k: net.sizes for k, net in nets.items()},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for net in nets.values():
            for p in net.params():
                fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> SurrogateModel:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError("not a surrogate checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    header = json.loads(data[off : off + n])
    off += n
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')!r}")
    nets = {}
    for key in ("g_s", "g_r"):
        if key not in header["networks"]:
            continue
        sizes = header["networks"][key]
        weights, biases = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            for shape in ((n_in, n_out), (n_out,)):
                count = int(np.prod(shape))
                arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).copy()
                off += 8 * count
                (weights if len(shape) == 2 else biases).append(arr)
        nets[key] = DenseNet(weights, biases)
    if off != len(data):
        raise ValueError("checkpoint has trailing or missing bytes")
    return SurrogateModel(header["variant"], header["brush"], nets.get("g_s"), nets.get("g_r"), header["resolution"])

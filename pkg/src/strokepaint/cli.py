"""Command-line entry points.

Every subcommand writes into the directory given by ``--out``. Exit codes:
0 success, 2 invalid flags, 3 unreadable input, 4 unwritable output,
5 invalid document.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from pathlib import Path

from . import _accel
from .compositor import blank_canvas, render_sequence
from .demos import DEFAULT_DISTANCES, convergence_run, zero_gradient_sweep
from .document import DocumentError, export_document, import_document, render_document
from .imageio import prepare_reference, read_image, write_png
from .losses import LossWeights, SinkhornConfig
from .painter import PAINT_SHARPNESS, PaintConfig, paint
from .rasterizer import SoftnessConfig
from .stroke_model import BrushType
from .surrogate import TrainConfig, Variant, ablate, save_checkpoint, train

EXIT_FLAGS = 2
EXIT_INPUT = 3
EXIT_OUTPUT = 4
EXIT_DOCUMENT = 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# --- flag types -----------------------------------------------------------------


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return v


def _scales(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"scales must be comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals) or any(b < a for a, b in zip(vals, vals[1:])):
        raise argparse.ArgumentTypeError("scales must be positive and nondecreasing")
    return tuple(vals)


def _resolution(minimum):
    def parse(text):
        v = int(text)
        if v < minimum:
            raise argparse.ArgumentTypeError(f"resolution must be >= {minimum}, got {v}")
        return v

    return parse


# --- parser ---------------------------------------------------------------------


def _common(p, lr_default):
    p.add_argument("--brush", choices=[b.value for b in BrushType], default="oil")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--lr", type=_positive_float, default=lr_default)
    p.add_argument("--out", type=Path, required=True, help="output directory")


def _loss_flags(p):
    p.add_argument("--beta-l1", type=_nonneg_float, default=1.0)
    p.add_argument("--beta-ot", type=_nonneg_float, default=0.1)
    p.add_argument("--ot-res", type=_resolution(4), default=48)
    p.add_argument("--epsilon", type=_positive_float, default=0.01)
    p.add_argument("--sinkhorn-iters", type=_positive_int, default=5)
    p.add_argument("--sharpness", type=_positive_float, default=PAINT_SHARPNESS,
                   help="soft edge slope in px^-1 at the working resolution")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strokepaint", description="Stroke-based painting by parameter search.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("paint", help="paint an image with brush strokes")
    p.add_argument("input", type=Path)
    _common(p, 0.01)
    _loss_flags(p)
    p.add_argument("--strokes", type=_positive_int, default=300)
    p.add_argument("--scales", type=_scales, default=(1, 2, 3, 4))
    p.add_argument("--resolution", type=_resolution(8), default=128, help="working resolution")
    p.add_argument("--frames", action="store_true", help="also write one frame per stroke")
    p.add_argument("--letterbox", action="store_true", help="pad non-square inputs instead of cropping")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("render", help="render a .paint.json document")
    p.add_argument("document", type=Path)
    p.add_argument("--resolution", type=_resolution(8), default=1024)
    p.add_argument("--mode", choices=("soft", "hard"), default="soft")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("demo-zero-grad", help="pixel vs transport loss on one sliding stroke")
    _common(p, 0.01)
    _loss_flags(p)
    p.add_argument("--steps", type=_positive_int, default=500)
    p.epilog = "--sharpness applies to the convergence runs; the distance sweep uses crisp edges."

    for name, help_text in (
        ("train-surrogate", "train one neural renderer variant"),
        ("ablate-surrogate", "train all three variants and tabulate PSNR"),
    ):
        p = sub.add_parser(name, help=help_text)
        _common(p, 2e-4)
        p.add_argument("--epochs", type=_positive_int, default=TrainConfig.epochs)
        p.add_argument("--strokes-per-epoch", type=_positive_int, default=TrainConfig.strokes_per_epoch)
        p.add_argument("--batch-size", type=_positive_int, default=TrainConfig.batch_size)
        if name == "train-surrogate":
            p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.DUAL.value)
    return parser


# --- helpers --------------------------------------------------------------------


def _prepare_out(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise CliError(EXIT_OUTPUT, f"cannot write to {path}: {exc}") from None
    return path


def _write(path: Path, data: bytes) -> None:
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise CliError(EXIT_OUTPUT, f"cannot write {path}: {exc}") from None


def _write_png(path: Path, img) -> None:
    try:
        write_png(path, img)
    except OSError as exc:
        raise CliError(EXIT_OUTPUT, f"cannot write {path}: {exc}") from None


def _csv(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue().encode("utf-8")


def _loss_configs(args):
    return (
        LossWeights(args.beta_l1, args.beta_ot),
        SinkhornConfig(args.ot_res, args.epsilon, args.sinkhorn_iters),
        SoftnessConfig(args.sharpness),
    )


def _log(args, msg):
    if not getattr(args, "quiet", False):
        print(msg, file=sys.stderr, flush=True)


# --- commands -------------------------------------------------------------------


def cmd_paint(args) -> int:
    try:
        img = read_image(args.input)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"cannot read image {args.input}: {exc}") from None
    out = _prepare_out(args.out)
    weights, sinkhorn, softness = _loss_configs(args)
    config = PaintConfig(
        brush=args.brush,
        total_strokes=args.strokes,
        scales=args.scales,
        working_resolution=args.resolution,
        learning_rate=args.lr,
        weights=weights,
        sinkhorn=sinkhorn,
        softness=softness,
        seed=args.seed,
    )
    ref = prepare_reference(img, args.resolution, args.letterbox)
    start = time.perf_counter()

    def progress(tel):
        _log(args, f"scale {tel.scale} block {tel.block_index}: total {tel.best.total:.5f} "
                   f"l1 {tel.best.l1:.5f} ({time.perf_counter() - start:.0f}s)")

    doc, telemetry = paint(ref, config, progress)
    rows = []
    step = 0
    for tel in telemetry:
        for r in tel.trace:
            rows.append((step, tel.scale, tel.block_index, r.l1, r.ot, r.total))
            step += 1
    _write(out / "painting.paint.json", export_document(doc))
    _write(out / "loss_trace.csv", _csv(("step", "scale", "block", "l1", "ot", "total"), rows))
    _write_png(out / "preview.png", render_document(doc, args.resolution))
    if args.frames:
        frames = out / "frames"
        frames.mkdir(exist_ok=True)
        canvas = blank_canvas(args.resolution, doc.background)
        for k, p in enumerate(doc.strokes, start=1):
            canvas = render_sequence([p], canvas, args.resolution, softness)
            _write_png(frames / f"frame_{k:04d}.png", canvas)
    return 0


def cmd_render(args) -> int:
    try:
        data = args.document.read_bytes()
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read document {args.document}: {exc}") from None
    try:
        doc = import_document(data)
    except DocumentError as exc:
        raise CliError(EXIT_DOCUMENT, f"invalid document {args.document}: {exc}") from None
    out = _prepare_out(args.out)
    img = render_document(doc, args.resolution, args.mode)
    _write_png(out / f"render_{args.resolution}.png", img)
    return 0


def cmd_demo_zero_grad(args) -> int:
    out = _prepare_out(args.out)
    weights, sinkhorn, softness = _loss_configs(args)
    rows = zero_gradient_sweep(DEFAULT_DISTANCES, SoftnessConfig(), sinkhorn)
    _write(
        out / "zero_grad.csv",
        _csv(("distance_px", "l1", "l1_grad", "ot"), [(r.distance_px, r.l1, r.l1_grad, r.ot) for r in rows]),
    )
    config = PaintConfig(brush="tape", learning_rate=args.lr, weights=weights, sinkhorn=sinkhorn,
                         softness=softness, seed=args.seed)
    with_ot = convergence_run(args.beta_ot, args.steps, config)
    l1_only = convergence_run(0.0, args.steps, config)
    _write(
        out / "convergence.csv",
        _csv(("step", "iou_l1", "iou_l1_ot"), [(k, a, b) for k, (a, b) in enumerate(zip(l1_only.iou, with_ot.iou))]),
    )
    print(f"final IoU: l1 only {l1_only.final_iou:.3f}, l1+ot {with_ot.final_iou:.3f}")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        brush=args.brush,
        epochs=args.epochs,
        strokes_per_epoch=args.strokes_per_epoch,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
    )


def cmd_train_surrogate(args) -> int:
    out = _prepare_out(args.out)
    res = train(args.variant, _train_config(args), progress=lambda e, v: _log(args, f"epoch {e}: PSNR {v:.3f} dB"))
    try:
        save_checkpoint(res.model, out / f"surrogate_{args.variant}.ckpt")
    except OSError as exc:
        raise CliError(EXIT_OUTPUT, str(exc)) from None
    _write(out / "psnr_curve.csv", _csv(("epoch", "psnr_db"), list(enumerate(res.psnr_curve, start=1))))
    return 0


def cmd_ablate_surrogate(args) -> int:
    out = _prepare_out(args.out)
    rows = ablate(_train_config(args), progress=lambda v, x: _log(args, f"{v.value}: PSNR {x:.3f} dB"))
    _write(out / "ablation.csv", _csv(("variant", "psnr_db"), rows))
    return 0


COMMANDS = {
    "paint": cmd_paint,
    "render": cmd_render,
    "demo-zero-grad": cmd_demo_zero_grad,
    "train-surrogate": cmd_train_surrogate,
    "ablate-surrogate": cmd_ablate_surrogate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _accel.set_threads(args.threads)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"strokepaint: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

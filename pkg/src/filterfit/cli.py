"""Command-line interface.

Subcommands:
    fit       fit a filter stack to an (input, target) PNG pair
    apply     apply a saved stack to an image
    heatmap   render a stack's adjustment field as a grayscale PNG
    eval-dir  fit or apply over a directory of image pairs, emit CSV

Exit codes: 0 success, 2 I/O / format / stack-file / empty-directory
errors, 3 dimension mismatch, 4 non-finite abort.
"""

import argparse
import concurrent.futures
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import (
    DimensionMismatchError,
    FormatError,
    ImageTooSmallError,
    NonFiniteError,
    StackFileError,
)
from .filters import elliptical_field, graduated_field
from .fit import FitConfig, fit
from .image import load_image, quantize_roundtrip, resize_long_edge, save_image
from .metrics import LossWeights, lab_msssim_loss, psnr, ssim
from .pipeline import pipeline_forward, scaling_map
from .stackio import read_stack, write_stack

CSV_HEADER = ["id", "psnr", "ssim", "loss", "steps", "seconds", "error"]


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--variant", choices=["cubic10", "cubic20"],
                   default="cubic20")
    p.add_argument("--n-graduated", type=int, default=3)
    p.add_argument("--n-elliptical", type=int, default=3)
    p.add_argument("--w-lab", type=float, default=1.0)
    p.add_argument("--w-msssim", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true",
                   help="byte-reproducible outputs (wall times reported as 0)")
    p.add_argument("--restarts", type=int, default=1,
                   help="run N seeded fits, keep the best")
    p.add_argument("--resize-long-edge", type=int, default=0, metavar="N",
                   help="resize inputs so the long edge is N pixels (0 = off)")


def _fit_config(args, seed: int) -> FitConfig:
    return FitConfig(
        steps=args.steps,
        learning_rate=args.lr,
        weights=LossWeights(args.w_lab, args.w_msssim),
        variant=args.variant,
        n_graduated=args.n_graduated,
        n_elliptical=args.n_elliptical,
        seed=seed,
        deterministic=args.deterministic,
    )


def _load_pair(input_path, target_path, resize: int):
    img = load_image(input_path)
    target = load_image(target_path)
    if resize:
        img = resize_long_edge(img, resize)
        target = resize_long_edge(target, resize)
    if img.shape != target.shape:
        raise DimensionMismatchError(
            f"input {img.shape[1]}x{img.shape[0]} vs "
            f"target {target.shape[1]}x{target.shape[0]}"
        )
    return img, target


def _best_of_restarts(img, target, args):
    best_report, best_cfg = None, None
    for r in range(max(1, args.restarts)):
        cfg = _fit_config(args, args.seed + r)
        report = fit(img, target, cfg)
        if report.aborted and not math.isfinite(report.best_loss):
            raise NonFiniteError("fit aborted on a non-finite loss/gradient")
        if best_report is None or report.best_loss < best_report.best_loss:
            best_report, best_cfg = report, cfg
    return best_report, best_cfg


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def cmd_fit(args) -> int:
    img, target = _load_pair(args.input, args.target, args.resize_long_edge)
    report, cfg = _best_of_restarts(img, target, args)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stack = cfg.stack_of(report.best_params)
    best_out = pipeline_forward(stack, img).y_final
    save_image(best_out, out_dir / "output.png")
    write_stack(stack, out_dir / "stack.json")

    # reported quality is measured on the emitted 8-bit image, so replaying
    # the stack with `apply` reproduces it exactly
    quant = quantize_roundtrip(best_out)
    doc = {
        "steps": len(report.loss_trace),
        "seconds": 0.0 if args.deterministic else report.seconds,
        "seed": cfg.seed,
        "restarts": max(1, args.restarts),
        "best_step": report.best_step,
        "best_loss": report.best_loss,
        "initial": {"psnr": _json_safe(report.initial_psnr),
                    "ssim": report.initial_ssim},
        "final": {"psnr": _json_safe(report.final_psnr),
                  "ssim": report.final_ssim},
        "best": {"psnr": _json_safe(psnr(quant, target)),
                 "ssim": ssim(quant, target)},
        "aborted": report.aborted,
        "loss_trace": report.loss_trace,
    }
    with open(out_dir / "report.json", "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return 4 if report.aborted else 0


def cmd_apply(args) -> int:
    stack = read_stack(args.stack)
    img = load_image(args.input)
    out = pipeline_forward(stack, img).y_final
    save_image(out, args.out)
    return 0


def cmd_heatmap(args) -> int:
    stack = read_stack(args.stack)
    w, h = args.width, args.height
    if w < 1 or h < 1:
        raise StackFileError("heatmap dimensions must be positive")
    channel = "rgb".index(args.channel)
    if args.which == "combined":
        field = scaling_map(stack, w, h)[..., channel]
    else:
        instances = getattr(stack, args.which)
        make = graduated_field if args.which == "graduated" else elliptical_field
        field = np.zeros((h, w))
        if instances:
            field = make(instances[0], w, h, channel)
            for inst in instances[1:]:
                field = field * make(inst, w, h, channel)

    fmin, fmax = float(field.min()), float(field.max())
    if fmax > fmin:
        pixels = np.floor((field - fmin) / (fmax - fmin) * 255.0 + 0.5)
    else:
        pixels = np.full((h, w), 128.0)
    PILImage.fromarray(pixels.astype(np.uint8), mode="L").save(
        args.out, format="PNG"
    )
    sidecar = {
        "min": fmin, "max": fmax, "which": args.which,
        "channel": args.channel, "width": w, "height": h,
    }
    with open(str(args.out) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return 0


def _eval_one(job: dict) -> dict:
    """Evaluate a single pair; returns a CSV row dict."""
    row = {k: "" for k in CSV_HEADER}
    row["id"] = job["id"]
    started = time.perf_counter()
    try:
        args = argparse.Namespace(**job["args"])
        img, target = _load_pair(job["input"], job["target"],
                                 args.resize_long_edge)
        if job["stack_path"]:
            stack = read_stack(job["stack_path"])
            out = pipeline_forward(stack, img).y_final
            loss = lab_msssim_loss(out, target,
                                   LossWeights(args.w_lab, args.w_msssim))
            steps = 0
        else:
            report, cfg = _best_of_restarts(img, target, args)
            out = pipeline_forward(
                cfg.stack_of(report.best_params), img
            ).y_final
            loss = report.best_loss
            steps = len(report.loss_trace)
        quant = quantize_roundtrip(out)
        row["psnr"] = str(psnr(quant, target))
        row["ssim"] = str(ssim(quant, target))
        row["loss"] = str(loss)
        row["steps"] = str(steps)
        seconds = 0.0 if args.deterministic else time.perf_counter() - started
        row["seconds"] = str(seconds)
    except Exception as exc:  # per-pair failures become rows, run continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_eval_dir(args) -> int:
    root = Path(args.pairs_dir)
    pairs = []
    for input_path in sorted(root.glob("*_input.png")):
        pair_id = input_path.name[: -len("_input.png")]
        target_path = root / f"{pair_id}_target.png"
        if target_path.exists():
            pairs.append((pair_id, input_path, target_path))
    if not pairs:
        print(f"error: no <id>_input.png / <id>_target.png pairs in {root}",
              file=sys.stderr)
        return 2

    arg_fields = dict(
        steps=args.steps, lr=args.lr, variant=args.variant,
        n_graduated=args.n_graduated, n_elliptical=args.n_elliptical,
        w_lab=args.w_lab, w_msssim=args.w_msssim, seed=args.seed,
        deterministic=args.deterministic, restarts=args.restarts,
        resize_long_edge=args.resize_long_edge,
    )
    jobs = [
        {"id": pid, "input": str(ip), "target": str(tp),
         "stack_path": args.stack, "args": arg_fields}
        for pid, ip, tp in pairs
    ]

    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_eval_one, jobs))
    else:
        rows = [_eval_one(job) for job in jobs]

    ok = [r for r in rows if not r["error"]]
    summary = {k: "" for k in CSV_HEADER}
    summary["id"] = "mean"
    if ok:
        for col in ("psnr", "ssim", "loss", "steps", "seconds"):
            summary[col] = str(float(np.mean([float(r[col]) for r in ok])))

    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        writer.writerow(summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="filterfit",
        description="Fit and apply local parametric image filters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a stack to an (input, target) pair")
    p.add_argument("input")
    p.add_argument("target")
    p.add_argument("-o", "--out", required=True,
                   help="output directory for stack.json/report.json/output.png")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("apply", help="apply a saved stack to an image")
    p.add_argument("stack")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True, help="output PNG path")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("heatmap", help="render an adjustment field")
    p.add_argument("stack")
    p.add_argument("-o", "--out", required=True, help="output PNG path")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--which", choices=["graduated", "elliptical", "combined"],
                   default="combined")
    p.add_argument("--channel", choices=["r", "g", "b"], default="r")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("eval-dir", help="evaluate a directory of pairs")
    p.add_argument("pairs_dir")
    p.add_argument("-o", "--out", required=True, help="output CSV path")
    p.add_argument("--stack", default=None,
                   help="apply this stack instead of fitting")
    p.add_argument("--jobs", type=int, default=1)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_eval_dir)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, FormatError, StackFileError, ImageTooSmallError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DimensionMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

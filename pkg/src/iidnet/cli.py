"""Command-line interface.

Subcommands:
    synthesize      render illumination-varied views of one linear image
    make-synthetic  generate the procedural Lambertian dataset
    train           run the training loop from a JSON config
    decompose       decompose one image with a trained checkpoint
    evaluate        consistency tables over an image directory
    lmse-eval       benchmark score against ground-truth triples
    selftest        quick gradient checks and metric oracles
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import autodiff as ad
from . import metrics as met
from .errors import ConfigError
from .fileio import read_linear_image, write_pfm, write_png16
from .illumination import evaluation_grid, generate_views
from .image import GrayMap, LinearImage
from .network import load
from .synthetic import generate_benchmark, generate_dataset
from .training import (TrainConfig, decompose_padded, evaluate_dir, ground_truth_decomposer,
                       lmse_evaluate, network_decomposer, train)


def _cmd_synthesize(args) -> int:
    img = read_linear_image(args.input)
    os.makedirs(args.outdir, exist_ok=True)
    if args.grid:
        views = evaluation_grid(img)
    else:
        rng = np.random.default_rng(args.seed)
        views = generate_views(img, rng, args.random)
    sidecar = []
    for i, (view, cond) in enumerate(views, start=1):
        path = os.path.join(args.outdir, f"view_{i:02d}.pfm")
        write_pfm(path, view)
        if args.png:
            write_png16(os.path.join(args.outdir, f"view_{i:02d}.png"), view)
        sidecar.append({"file": os.path.basename(path), **cond.to_json()})
    with open(os.path.join(args.outdir, "conditions.json"), "w") as f:
        json.dump(sidecar, f, indent=2)
    print(f"wrote {len(views)} views + conditions.json to {args.outdir}")
    return 0


def _cmd_make_synthetic(args) -> int:
    if args.benchmark:
        names = generate_benchmark(args.outdir, args.count, args.size, args.seed)
        print(f"wrote {len(names)} ground-truth triples to {args.outdir}")
    else:
        paths = generate_dataset(args.outdir, args.count, args.size, args.seed)
        print(f"wrote {len(paths)} images to {args.outdir}")
    return 0


def _cmd_train(args) -> int:
    cfg = TrainConfig.from_json_file(args.config)
    result = train(cfg, resume_from=args.resume, progress=True)
    print(f"final checkpoint: {result.final_checkpoint}")
    print(f"training log:     {result.log_path}")
    bad = [(p, s) for p, s in result.index.entries if s != "ok"]
    for path, status in bad:
        print(f"skipped unreadable input {path}: {status}", file=sys.stderr)
    return 0


def _cmd_decompose(args) -> int:
    net, _ = load(args.ckpt)
    img = read_linear_image(args.input)
    d = decompose_padded(net, img)
    write_pfm(args.out_reflectance, d.reflectance)
    write_pfm(args.out_shading, d.gray_shading)
    if args.out_illum:
        with open(args.out_illum, "w") as f:
            json.dump({"c": [d.illuminant.r, d.illuminant.g, d.illuminant.b]}, f, indent=2)
    if args.png:
        write_png16(os.path.splitext(args.out_reflectance)[0] + ".png", d.reflectance)
        write_png16(os.path.splitext(args.out_shading)[0] + ".png", d.gray_shading)
    print(f"illuminant estimate: ({d.illuminant.r:.4f}, {d.illuminant.g:.4f}, {d.illuminant.b:.4f})")
    return 0


def _cmd_evaluate(args) -> int:
    net, _ = load(args.ckpt)
    result = evaluate_dir(net, args.images)
    for report in (result.reflectance, result.reconstruction, result.input_baseline):
        print(met.render_text(report))
        print()
    print(f"mean estimated-reflectance luminance: {result.mean_reflectance_luminance:.4f}")
    print(f"illuminant-estimate mean abs error:   {result.illum_mae:.4f}")
    for name, reason in result.skipped:
        print(f"skipped {name}: {reason}", file=sys.stderr)
    if args.out_csv:
        with open(args.out_csv, "w") as f:
            f.write(met.render_csv(result.reflectance))
    if args.out_json:
        with open(args.out_json, "w") as f:
            json.dump({
                "reflectance": result.reflectance.to_json(),
                "reconstruction": result.reconstruction.to_json(),
                "input_baseline": result.input_baseline.to_json(),
                "mean_reflectance_luminance": result.mean_reflectance_luminance,
                "illum_mae": result.illum_mae,
            }, f, indent=2)
    return 0


def _cmd_lmse_eval(args) -> int:
    if args.ground_truth:
        fn = ground_truth_decomposer(args.data)
    else:
        if not args.ckpt:
            raise ConfigError("lmse-eval: --ckpt is required unless --ground-truth is given")
        net, _ = load(args.ckpt)
        fn = network_decomposer(net)
    table = lmse_evaluate(fn, args.data)
    print(table.render_text())
    if args.out_json:
        with open(args.out_json, "w") as f:
            json.dump(table.to_json(), f, indent=2)
    return 0


def _cmd_selftest(args) -> int:
    failures = 0

    def check(name: str, ok: bool, detail: str = ""):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        failures += 0 if ok else 1

    rng = np.random.default_rng(0)
    x = ad.Tensor(rng.normal(size=(1, 2, 5, 5)), requires_grad=True, dtype=np.float64)
    w = ad.Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True, dtype=np.float64)
    b = ad.Tensor(rng.normal(size=3), requires_grad=True, dtype=np.float64)
    rep = ad.grad_check(lambda x, w, b: ad.tmean(ad.mul(ad.conv2d(x, w, b), ad.conv2d(x, w, b))),
                        [x, w, b])
    check("conv2d gradient vs finite differences", rep.max_rel_err < 1e-6, str(rep))

    wt = ad.Tensor(rng.normal(size=(2, 3, 4, 4)), requires_grad=True, dtype=np.float64)
    xt = ad.Tensor(rng.normal(size=(1, 2, 3, 3)), requires_grad=True, dtype=np.float64)
    rep = ad.grad_check(lambda x, w: ad.tmean(ad.mul(ad.conv_transpose2d(x, w),
                                                     ad.conv_transpose2d(x, w))), [xt, wt])
    check("transposed conv gradient vs finite differences", rep.max_rel_err < 1e-6, str(rep))

    gt = rng.random((64, 64))
    check("local MSE zero on scaled copy", met.lmse(2.0 * gt, gt) == 0.0)
    check("psnr of mse 0.01 is 20 dB", met.psnr_from_mse(0.01) == 20.0)
    check("dssim of identical images is 0", met.dssim(gt, gt) == 0.0)

    from .illumination import WbParams, inverse_wb_matrix, wb_matrix
    p = WbParams(1.7, 0.9, 1.2, basis=rng.normal(size=(3, 3)) + 2 * np.eye(3))
    err = float(np.abs(wb_matrix(p) @ inverse_wb_matrix(p) - np.eye(3)).max())
    check("white-balance round trip", err < 1e-10, f"max err {err:.2e}")

    print("selftest:", "all passed" if failures == 0 else f"{failures} FAILED")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iidnet",
                                     description="Self-supervised intrinsic image decomposition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="render illumination-varied views of one image")
    p.add_argument("--input", required=True, help="input PFM (linear RGB)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--grid", action="store_true", help="the deterministic 9-condition grid")
    group.add_argument("--random", type=int, metavar="N", help="N random conditions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.add_argument("--png", action="store_true", help="also write 16-bit PNG previews")
    p.set_defaults(fn=_cmd_synthesize)

    p = sub.add_parser("make-synthetic", help="generate the procedural Lambertian dataset")
    p.add_argument("--outdir", required=True)
    p.add_argument("--count", type=int, default=32)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--benchmark", action="store_true",
                   help="write ground-truth triples instead of bare images")
    p.set_defaults(fn=_cmd_make_synthetic)

    p = sub.add_parser("train", help="train from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("decompose", help="decompose one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out-reflectance", required=True)
    p.add_argument("--out-shading", required=True)
    p.add_argument("--out-illum", default=None, help="JSON file for the illuminant estimate")
    p.add_argument("--png", action="store_true", help="also write 16-bit PNG previews")
    p.set_defaults(fn=_cmd_decompose)

    p = sub.add_parser("evaluate", help="consistency tables over an image directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--out-json", default=None)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("lmse-eval", help="benchmark score against ground-truth triples")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--data", required=True, help="directory of *_original/_reflectance/_shading files")
    p.add_argument("--ground-truth", action="store_true",
                   help="feed the stored ground truth as the estimate (plumbing check)")
    p.add_argument("--out-json", default=None)
    p.set_defaults(fn=_cmd_lmse_eval)

    p = sub.add_parser("selftest", help="quick gradient checks and metric oracles")
    p.set_defaults(fn=_cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: synth / match / eval / viz / register.

Exit codes: 0 success, 2 input or spec error, 3 degraded output (the match
pipeline fell back to matching-only disparity because registration failed;
the fallback PFM is still written).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .config import PipelineConfig
from .errors import StereoFuseError
from .global_fusion import (
    LocalRegistrationConfig,
    RegistrationConfig,
    apply_registration,
    register_global,
    register_local,
)
from .grid import ImageBuffer, ScalarField, bilinear_resize
from .loss import sequence_loss
from .metrics import EvalReport, RegionMask, aggregate, epe, evaluate, standard_masks
from .pipeline import per_iteration_epe, run_pipeline
from .synth import SceneSpec, generate_scene
from .viz import render_field

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_DEGRADED = 3


def _read_image_file(path: Path) -> ImageBuffer:
    data = path.read_bytes()
    fmt = path.suffix.lower().lstrip(".")
    if fmt not in ("png", "pgm"):
        raise StereoFuseError(f"unsupported image extension '{path.suffix}' for {path}")
    return fileio.read_image(data, fmt)


def _read_field_file(path: Path) -> ScalarField:
    return fileio.read_pfm(path.read_bytes())


def _invert_depth(field: ScalarField) -> ScalarField:
    data = field.data.astype(np.float64)
    ok = field.valid & (np.abs(data) > 1e-12)
    out = np.zeros_like(data, dtype=np.float32)
    out[ok] = (1.0 / data[ok]).astype(np.float32)
    return ScalarField(out, ok)


def cmd_synth(args) -> int:
    if args.spec:
        doc = json.loads(Path(args.spec).read_text())
        spec = SceneSpec.from_dict(doc)
    else:
        spec = SceneSpec()
    spec.validate()
    scene = generate_scene(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "left.png").write_bytes(fileio.write_png(scene.left))
    (out / "right.png").write_bytes(fileio.write_png(scene.right))
    (out / "gt_disp_left.pfm").write_bytes(fileio.write_pfm(scene.gt_disp_left))
    (out / "gt_disp_right.pfm").write_bytes(fileio.write_pfm(scene.gt_disp_right))
    (out / "mono_depth.pfm").write_bytes(fileio.write_pfm(scene.mono_depth))
    doc = {
        "spec": spec.to_dict(),
        "layers": [list(layer) for layer in scene.layers],
        "occluded_fraction": float(scene.occlusion.mask.mean()),
        "textureless_fraction": float(scene.region_masks["textureless"].mask.mean()),
    }
    (out / "scene.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_match(args) -> int:
    config = PipelineConfig.load(Path(args.config).read_text()) if args.config else PipelineConfig()
    overrides = list(args.set or []) + list(args.ablate or [])
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    config = config.apply_overrides(overrides)
    left = _read_image_file(Path(args.left))
    right = _read_image_file(Path(args.right))
    mono = None
    if args.mono:
        mono = _read_field_file(Path(args.mono))
        if args.mono_depth_like:
            mono = _invert_depth(mono)
    result = run_pipeline(left, right, mono, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "disparity.pfm").write_bytes(fileio.write_pfm(result.disparity))
    (out / "config.ini").write_text(config.dump())

    extra = {
        "runtime_s": result.runtime_s,
        "mode": "fusion" if result.fusion is not None else "matching_only",
        "degraded": result.degraded,
        "threads": config.effective_threads(),
    }
    if result.degraded:
        extra["degraded_reason"] = result.degraded_reason
    if result.registration is not None:
        extra["registration"] = {
            "mode": result.registration.mode,
            "a": result.registration.global_a,
            "b": result.registration.global_b,
        }
    metrics = {}
    counts = {}
    if args.gt:
        gt = _read_field_file(Path(args.gt))
        all_mask = RegionMask("all", np.ones(gt.shape, dtype=bool))
        report = evaluate(result.disparity, gt, {"all": all_mask})
        metrics = report.metrics
        counts = report.counts
        extra["per_iteration_epe"] = per_iteration_epe(result, gt)
        extra["matching_only_epe"] = epe(result.matching_disparity, gt, all_mask)
        if result.fusion is not None:
            h, w = gt.shape
            iterates = [bilinear_resize(f, w, h, scale_values=True)
                        for f in result.trace.disparities]
            registered = bilinear_resize(result.fusion.registered_mono, w, h,
                                         scale_values=True)
            breakdown = sequence_loss(iterates, registered, result.disparity, gt,
                                      gamma=config.gamma,
                                      exponent_mode=config.loss_exponent)
            extra["loss"] = breakdown.to_dict()
    report = EvalReport(metrics=metrics, counts=counts, extra=extra)
    (out / "report.json").write_bytes(fileio.write_report(report))
    if args.dump_trace:
        trace_dir = out / "trace"
        trace_dir.mkdir(exist_ok=True)
        for i, field in enumerate(result.trace.disparities, start=1):
            (trace_dir / f"iter_{i:02d}.pfm").write_bytes(fileio.write_pfm(field))
    return EXIT_DEGRADED if result.degraded else EXIT_OK


def cmd_eval(args) -> int:
    gt = _read_field_file(Path(args.gt))
    masks = {"all": RegionMask("all", np.ones(gt.shape, dtype=bool))}
    if args.gt_right:
        gt_right = _read_field_file(Path(args.gt_right))
        masks.update(standard_masks(gt, gt_right, tol=args.occ_tol))
    for pair in args.mask or []:
        name, _, path = pair.partition("=")
        if not path:
            raise StereoFuseError(f"--mask needs name=path, got '{pair}'")
        img = _read_image_file(Path(path)).to_gray()
        masks[name] = RegionMask(name, img.data[:, :, 0] > 0.5)
    thresholds = tuple(float(x) for x in args.bad.split(","))
    reports = []
    for pred_path in args.pred:
        pred = _read_field_file(Path(pred_path))
        reports.append(evaluate(pred, gt, masks, thresholds))
    report = reports[0] if len(reports) == 1 else aggregate(reports)
    payload = fileio.write_report(report)
    if args.out:
        Path(args.out).write_bytes(payload)
    else:
        sys.stdout.write(payload.decode("ascii"))
    return EXIT_OK


def cmd_viz(args) -> int:
    field = _read_field_file(Path(args.field))
    vmin = vmax = None
    if args.range:
        vmin, vmax = (float(v) for v in args.range.split(","))
    image = render_field(field, cmap=args.cmap, vmin=vmin, vmax=vmax)
    Path(args.out).write_bytes(fileio.write_png(image))
    return EXIT_OK


def cmd_register(args) -> int:
    mono = _read_field_file(Path(args.mono))
    if args.mono_depth_like:
        mono = _invert_depth(mono)
    disp = _read_field_file(Path(args.disp))
    reg_config = RegistrationConfig(irls_iters=args.irls_iters, min_inliers=args.min_inliers)
    if args.mode == "local":
        reg = register_local(mono, disp, reg_config,
                             LocalRegistrationConfig(tile=args.tile, lambda_reg=args.lambda_reg))
    else:
        reg = register_global(mono, disp, reg_config)
    registered = apply_registration(mono, reg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "registered.pfm").write_bytes(fileio.write_pfm(registered))
    doc = {"mode": reg.mode, "a": reg.global_a, "b": reg.global_b}
    (out / "registration.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    if reg.mode == "local":
        a_field = ScalarField(reg.a.astype(np.float32), np.ones(mono.shape, dtype=bool))
        b_field = ScalarField(reg.b.astype(np.float32), np.ones(mono.shape, dtype=bool))
        (out / "scale.pfm").write_bytes(fileio.write_pfm(a_field))
        (out / "shift.pfm").write_bytes(fileio.write_pfm(b_field))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stereofuse",
        description="Stereo matching with monocular-prior fusion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--spec", help="scene spec JSON file (defaults used when absent)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("match", help="run the disparity pipeline")
    p.add_argument("left", help="left image (png/pgm)")
    p.add_argument("right", help="right image (png/pgm)")
    p.add_argument("--mono", help="monocular depth PFM (absent: matching-only baseline)")
    p.add_argument("--mono-depth-like", action="store_true",
                   help="invert the mono input (larger = farther) before use")
    p.add_argument("--gt", help="ground-truth disparity PFM for per-run metrics")
    p.add_argument("--config", help="pipeline config INI")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="config override (repeatable)")
    p.add_argument("--ablate", action="append", metavar="KEY=VALUE",
                   help="ablation override, e.g. ilf=off, gf=off, use_sigmoid=off")
    p.add_argument("--threads", type=int, help="worker count (results are identical)")
    p.add_argument("--seed", type=int, help="RNG seed for sampling mode")
    p.add_argument("--dump-trace", action="store_true", help="write per-iteration PFMs")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="evaluate disparity predictions")
    p.add_argument("pred", nargs="+", help="prediction PFMs (several: mean±std)")
    p.add_argument("--gt", required=True, help="ground-truth disparity PFM")
    p.add_argument("--gt-right", help="right-view GT PFM for the occ/nonocc split")
    p.add_argument("--occ-tol", type=float, default=1.0, help="LR consistency tolerance")
    p.add_argument("--mask", action="append", metavar="NAME=PATH",
                   help="custom region mask image (nonzero = in mask)")
    p.add_argument("--bad", default="1,2,3,5", help="bad-x thresholds")
    p.add_argument("--out", help="report path (stdout when absent)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("viz", help="render a field to a colormapped PNG")
    p.add_argument("field", help="field PFM")
    p.add_argument("--cmap", default="turbo", choices=("turbo", "gray"))
    p.add_argument("--range", help="fixed normalization range 'lo,hi'")
    p.add_argument("--out", required=True, help="output PNG path")
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("register", help="register mono depth to a disparity map")
    p.add_argument("--mono", required=True)
    p.add_argument("--mono-depth-like", action="store_true")
    p.add_argument("--disp", required=True)
    p.add_argument("--mode", default="global", choices=("global", "local"))
    p.add_argument("--irls-iters", type=int, default=20)
    p.add_argument("--min-inliers", type=int, default=100)
    p.add_argument("--tile", type=int, default=32)
    p.add_argument("--lambda-reg", type=float, default=0.1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_register)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (StereoFuseError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()

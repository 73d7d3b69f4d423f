"""Command-line entry points.

Subcommands: build-masks (persist mask artifacts for a scene), simulate (run
the gated loop), verify (self-check suites), degrade (HR -> LR chain), and
ingest (build a scene file from a detector/captioner client).  Exit code 0
means every requested operation succeeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .attention import BlockWeights
from .clients import ClientError, HttpConfig, HttpSceneClient, MockSceneClient, build_scene_from_clients
from .degrade import DegradeConfig, degrade, load_image, psnr, save_image, upsample_nearest
from .loop import LoopConfig, build_all, run_loop, write_json
from .prep import PrepConfig
from .rng import derive
from .scene import ImageRef, SceneValidationError, load_scene, save_scene
from .verify import run_suites

log = logging.getLogger("regionattn")


def _levels(raw: str) -> tuple[int, ...]:
    try:
        levels = tuple(int(part) for part in raw.split(",") if part)
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated ints: {raw!r}")
    if not levels or any(side < 1 for side in levels):
        raise argparse.ArgumentTypeError(f"levels must be positive: {raw!r}")
    return levels


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regionattn")
    sub = parser.add_subparsers(dest="command", required=True)

    masks = sub.add_parser("build-masks", help="rasterize a scene and dump mask artifacts")
    masks.add_argument("scene", type=Path)
    masks.add_argument("--levels", type=_levels, default=(64, 32, 16, 8))
    masks.add_argument("--rule", choices=("center", "overlap"), default="center")
    masks.add_argument("--out", type=Path, required=True)
    masks.add_argument("--threshold", type=float, default=0.4)
    masks.add_argument("--max-regions", type=int, default=5)

    sim = sub.add_parser("simulate", help="run the gated denoising loop")
    sim.add_argument("scene", type=Path)
    sim.add_argument("--steps", type=int, default=50)
    sim.add_argument("--inject", type=int, default=50)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--levels", type=_levels, default=(64, 32, 16, 8))
    sim.add_argument("--rule", choices=("center", "overlap"), default="center")
    sim.add_argument("--model-dim", type=int, default=16)
    sim.add_argument("--heads", type=int, default=2)
    sim.add_argument("--no-regional", action="store_true")
    sim.add_argument("--out", type=Path, required=True)

    ver = sub.add_parser("verify", help="run the self-check suites")
    ver.add_argument("--suite", choices=("all", "masks", "grad", "prep", "gate"), default="all")
    ver.add_argument("--scenes", type=int, default=200)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--grad-instances", type=int, default=100)
    ver.add_argument("--out", type=Path)

    deg = sub.add_parser("degrade", help="degrade an HR image to LR")
    deg.add_argument("image", type=Path)
    deg.add_argument("--scale", type=int, default=4)
    deg.add_argument("--seed", type=int, default=0)
    deg.add_argument("--blur-sigma", type=float, default=1.2)
    deg.add_argument("--noise-sigma", type=float, default=0.02)
    deg.add_argument("--no-quantize", action="store_true")
    deg.add_argument("--out", type=Path)
    deg.add_argument("--report-psnr", action="store_true",
                     help="print PSNR of the HR input vs the nearest-upsampled LR output")

    ing = sub.add_parser("ingest", help="build a scene file from detector/captioner clients")
    ing.add_argument("--source-id", required=True)
    ing.add_argument("--width", type=int, required=True)
    ing.add_argument("--height", type=int, required=True)
    ing.add_argument("--span-tokens", type=int, default=8)
    ing.add_argument("--out", type=Path, required=True)
    ing.add_argument("--mock-dir", type=Path)
    ing.add_argument("--http-endpoint")
    ing.add_argument("--http-timeout", type=float, default=10.0)
    ing.add_argument("--token-env", help="env var holding the bearer token")
    return parser


def _cmd_build_masks(args: argparse.Namespace) -> int:
    cfg = LoopConfig(
        levels=args.levels,
        rule=args.rule,
        prep=PrepConfig(confidence_threshold=args.threshold, max_regions=args.max_regions),
    )
    report = build_all(args.scene, cfg, args.out)
    log.info("wrote masks for %s levels", len(report["levels"]))
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    scene = load_scene(args.scene)
    cfg = LoopConfig(
        total_steps=args.steps,
        inject_steps=args.inject,
        levels=args.levels,
        seed=args.seed,
        regional_enabled=not args.no_regional,
        rule=args.rule,
    )
    weights = BlockWeights.seeded(args.model_dim, args.heads, seed=derive(args.seed, "weights"))
    trace, latent = run_loop(scene, cfg, weights)
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(
        {
            "source_id": scene.source_id,
            "config": {
                "total_steps": cfg.total_steps,
                "inject_steps": cfg.inject_steps,
                "levels": list(cfg.levels),
                "seed": cfg.seed,
                "regional_enabled": cfg.regional_enabled,
                "model_dim": args.model_dim,
                "heads": args.heads,
            },
            "steps": trace.to_dicts(),
        },
        args.out / "trace.json",
    )
    np.save(args.out / "final_latent.npy", latent)
    log.info("simulated %s steps (%s injected)", cfg.total_steps, trace.applied_count())
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    report = run_suites(
        selector=args.suite,
        scenes=args.scenes,
        seed=args.seed,
        grad_instances=args.grad_instances,
    )
    payload = json.dumps(report, indent=2, sort_keys=True)
    print(payload)
    if args.out:
        args.out.write_text(payload + "\n", encoding="utf-8")
    return 0 if report["passed"] else 1


def _cmd_degrade(args: argparse.Namespace) -> int:
    hr = load_image(args.image)
    cfg = DegradeConfig(
        scale=args.scale,
        blur_sigma=args.blur_sigma,
        noise_sigma=args.noise_sigma,
        quantize=not args.no_quantize,
        seed=args.seed,
    )
    lr = degrade(hr, cfg)
    suffix = ".pgm" if lr.channels == 1 else ".ppm"
    out = args.out or args.image.with_name(f"{args.image.stem}_x{args.scale}{suffix}")
    save_image(lr, out)
    if args.report_psnr:
        restored = upsample_nearest(lr, args.scale)
        if (restored.width, restored.height) == (hr.width, hr.height):
            print(f"psnr_db={psnr(hr, restored):.4f}")
        else:
            log.warning("skipping PSNR: %sx upsample does not restore the HR dims", args.scale)
    log.info("wrote %s", out)
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    if args.mock_dir is None and args.http_endpoint is None:
        raise ClientError("ingest needs --mock-dir or --http-endpoint")
    if args.mock_dir is not None:
        client = MockSceneClient(args.mock_dir)
    else:
        client = HttpSceneClient(
            HttpConfig(endpoint=args.http_endpoint, timeout=args.http_timeout, token_env=args.token_env)
        )
    image = ImageRef(source_id=args.source_id, width=args.width, height=args.height)
    scene = build_scene_from_clients(image, client, client, span_tokens=args.span_tokens)
    save_scene(scene, args.out)
    log.info("wrote %s with %s candidate regions", args.out, len(scene.regions))
    return 0


_COMMANDS = {
    "build-masks": _cmd_build_masks,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "degrade": _cmd_degrade,
    "ingest": _cmd_ingest,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (SceneValidationError, ClientError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())

"""Command-line entry point: ``iristraverse <verb> [flags]``.

Exit codes: 0 success, 2 usage or config error, 3 divergence (a traversal,
inversion or matrix cell did not terminate cleanly), 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import attributes as attrs
from . import config as config_mod
from . import geometry as geo
from .harness import (HarnessIOError, make_decoder, run_matrix, run_single, run_space_compare,
                      decoder_entry, start_code)
from .imageio import read_image, write_image
from .traversal import DIVERGED, InversionDiverged, TraversalConfig, invert

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--out", help="output directory (overrides [output].directory)")
    common.add_argument("--workers", type=int, help="concurrent matrix cells")
    common.add_argument("--resolution", metavar="WxH", help="image size, e.g. 160x120")
    common.add_argument("--seed", type=int, help="latent seed (first seed of a plan)")
    p = argparse.ArgumentParser(prog="iristraverse", description="Latent-space traversal of iris image decoders.")
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("generate", parents=[common], help="render the image of a latent seed")
    sub.add_parser("invert", parents=[common], help="find a latent code reproducing an image")
    sub.add_parser("traverse", parents=[common], help="run one attribute traversal")
    sub.add_parser("matrix", parents=[common], help="run the identity-preservation matrix")
    sub.add_parser("space-compare", parents=[common], help="run matched Z and W traversals")
    return p


def _load(args):
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    return cfg.with_overrides(out=args.out, workers=args.workers, resolution=args.resolution, seed=args.seed)


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_generate(cfg):
    out = cfg.output.directory
    os.makedirs(out, exist_ok=True)
    decoder = make_decoder(cfg.decoder)
    z = start_code(decoder, cfg.latent.seed, cfg.latent.space)
    x = decoder_entry(decoder, cfg.latent.space)(z).detach()
    stem = os.path.join(out, f"seed_{cfg.latent.seed}")
    write_image(x.data, f"{stem}.{cfg.output.format}")
    m = geo.soft_mask(x)
    geo.save_mask_pgm(m, f"{stem}_mask.pgm")
    info = {"seed": cfg.latent.seed, "space": cfg.latent.space, "latent": list(map(float, z.values)),
            "image": f"{stem}.{cfg.output.format}"}
    if hasattr(decoder, "params"):
        p = decoder.params(z)
        info["params"] = {k: v for k, v in vars(p).items() if k != "texture_amplitudes"}
    try:
        info["measured"] = {k: attrs.measure(x, k) for k in ("pupil_radius", "iris_radius", "pupil_iris_ratio", "sharpness")}
    except geo.DegenerateSegmentation as exc:
        info["measured"] = str(exc)
    with open(f"{stem}.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(info, indent=2, sort_keys=True) + "\n")
    _print({k: info[k] for k in ("image", "seed")})
    return EXIT_OK


def cmd_invert(cfg):
    out = cfg.output.directory
    os.makedirs(out, exist_ok=True)
    decoder = make_decoder(cfg.decoder)
    inv = cfg.invert
    if inv.image:
        target = read_image(inv.image)
    else:
        zt = start_code(decoder, inv.target_seed, cfg.latent.space)
        target = decoder_entry(decoder, cfg.latent.space)(zt).data
    fmt = cfg.output.format
    write_image(target, os.path.join(out, f"target.{fmt}"))
    tcfg = TraversalConfig(**{**vars(cfg.traversal), "space": cfg.latent.space,
                              "optimizer": "adam" if cfg.traversal.optimizer == "auto" else cfg.traversal.optimizer})
    try:
        z, record = invert(target, decoder, tcfg, seed=cfg.latent.seed, tolerance=inv.tolerance,
                           max_iterations=inv.max_iterations)
    except InversionDiverged as exc:
        exc.record.save(os.path.join(out, "trajectory.jsonl"))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    x = decoder_entry(decoder, cfg.latent.space)(z).detach()
    write_image(x.data, os.path.join(out, f"reconstruction.{fmt}"))
    record.save(os.path.join(out, "trajectory.jsonl"))
    summary = {"status": record.status, "iterations": record.iterations, "mse": record.best_loss,
               "space": z.space, "latent": list(map(float, z.values))}
    with open(os.path.join(out, "latent.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _print({k: summary[k] for k in ("status", "iterations", "mse")})
    return EXIT_OK


def cmd_traverse(cfg):
    res = run_single(cfg)
    _print({k: res.summary[k] for k in ("status", "iterations", "final_values", "targets", "hd")})
    return EXIT_DIVERGED if res.status == DIVERGED else EXIT_OK


def _report_plan(res):
    _print({k: v for k, v in res.summary.items() if k != "plan"} | {"csv": res.csv_path})
    return EXIT_OK if res.ok else EXIT_DIVERGED


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.verb == "generate":
            return cmd_generate(cfg)
        if args.verb == "invert":
            return cmd_invert(cfg)
        if args.verb == "traverse":
            return cmd_traverse(cfg)
        if args.verb == "matrix":
            return _report_plan(run_matrix(cfg))
        return _report_plan(run_space_compare(cfg))
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HarnessIOError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

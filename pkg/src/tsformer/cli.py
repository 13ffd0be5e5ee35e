"""``tsformer`` command line: restore, train-toy, bench, ablate, grad-check.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal-consistency
failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import gradcheck
from .checkpoint import CheckpointError, checkpoint_load
from .metrics import psnr, ssim
from .model import model_forward
from .pipeline.ablate import run_ablation
from .pipeline.bench import run_bench
from .pipeline.config import ConfigError, RunConfig, load_config
from .pipeline.imageio import ImageFormatError, load_image, save_image
from .pipeline.report import write_csv
from .pipeline.tiling import tile_inference
from .pipeline.train import DataError, train_toy

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tsformer", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, out_help):
        sp.add_argument("--config", type=Path, help="key = value run configuration")
        sp.add_argument("--seed", type=_u64, help="overrides the config seed")
        sp.add_argument("--out", type=Path, help=out_help)

    r = sub.add_parser("restore", help="restore one image with a checkpoint")
    common(r, "output image (.png or .ppm)")
    r.add_argument("--input", help="overrides config key 'input'")
    r.add_argument("--checkpoint", help="overrides config key 'checkpoint'")
    r.add_argument("--ground-truth", help="overrides config key 'ground_truth'")
    common(sub.add_parser("train-toy", help="train on synthetic degradations"), "output directory")
    common(sub.add_parser("bench", help="dense vs sparse FLOPs and wall time"), "output directory")
    a = sub.add_parser("ablate", help="compare sampling strategies")
    common(a, "output directory")
    a.add_argument("--support-only", action="store_true", help="skip the toy restoration part")
    common(sub.add_parser("grad-check", help="finite-difference gradient suite"), "optional CSV report path")
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def cmd_restore(cfg: RunConfig, args) -> int:
    src = args.input or cfg.input
    ckpt = args.checkpoint or cfg.checkpoint
    gt = args.ground_truth or cfg.ground_truth
    if not src or not ckpt or args.out is None:
        raise UsageError("restore needs an input, a checkpoint and --out")
    if not Path(ckpt).exists():
        raise DataError(f"checkpoint {ckpt} not found")
    model = checkpoint_load(ckpt, expected_config=cfg.model_config())
    img = load_image(src)
    if cfg.tile:
        out = tile_inference(img, model, cfg.tile, cfg.overlap)
    else:
        out = model_forward(img, model)
    save_image(out, args.out)
    if gt:
        truth = load_image(gt).data
        restored = np.clip(out.data, 0.0, 1.0)
        print(f"psnr {psnr(restored, truth):.4f} ssim {ssim(restored[0], truth[0]):.6f}")
    return EXIT_OK


def cmd_train_toy(cfg: RunConfig, args) -> int:
    out = args.out or Path("train_out")
    for line in cfg.echo():
        print(f"config {line}")
    res = train_toy(cfg, out)
    print(f"initial_eval_l1 {res.initial_l1:.6f}")
    print(f"final_eval_l1 {res.final_l1:.6f}")
    print(f"loss_csv {res.loss_csv}")
    print(f"checkpoint {res.checkpoint}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig, args) -> int:
    res = run_bench(cfg, args.out)
    print("\n".join(res.lines()))
    masked_ok = abs(res.reduction["attention"] - res.masked_fraction) < 1e-12
    return EXIT_OK if masked_ok else EXIT_INTERNAL


def cmd_ablate(cfg: RunConfig, args) -> int:
    res = run_ablation(cfg, args.out or Path("ablate_out"), with_restoration=not args.support_only)
    for s, v in res.support.items():
        line = f"{s} precision {v['precision']:.4f} recall {v['recall']:.4f} f1 {v['f1']:.4f}"
        if res.restore:
            line += f" psnr {res.restore[s]['psnr']:.3f} ssim {res.restore[s]['ssim']:.4f}"
        print(line)
    print(f"table {res.table}")
    print(f"histogram {res.histogram}")
    return EXIT_OK


def cmd_grad_check(cfg: RunConfig, args) -> int:
    seeds = range(cfg.seed, cfg.seed + 5)
    results = gradcheck.run_suite(seeds)
    table = gradcheck.summarize(results)
    for op, (err, ok) in table.items():
        print(f"{op:28s} max_rel_error {err:.3e} {'PASS' if ok else 'FAIL'}")
    if args.out is not None:
        write_csv(args.out, ["op", "max_rel_error", "passed"],
                  [(op, err, ok) for op, (err, ok) in table.items()], cfg.echo())
    failed = [op for op, (_, ok) in table.items() if not ok]
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_INTERNAL
    return EXIT_OK


COMMANDS = {
    "restore": cmd_restore,
    "train-toy": cmd_train_toy,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
    "grad-check": cmd_grad_check,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ImageFormatError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

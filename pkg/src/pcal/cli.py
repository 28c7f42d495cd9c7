"""Command line entry points: pretrain, experiment, serve, gen-dataset."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .datasets import FAMILIES, generate_dataset, save_dataset
from .errors import PcalError
from .experiment import DEFAULT_CONFIG, load_config, run_experiment
from .nnet import save_checkpoint
from .trainer import TrainConfig, pretrain


def _cmd_gen_dataset(args):
    items = generate_dataset(args.family, args.count, args.part_count,
                             rng_seed=args.seed, points_n=args.points,
                             noise_sigma=args.noise_sigma)
    manifest = save_dataset(args.out_dir, items)
    print(f"wrote {len(items)} shapes, manifest at {manifest}")
    return 0


def _cmd_pretrain(args):
    dataset = []
    for fi, fam in enumerate(args.family):
        dataset.extend(generate_dataset(fam, args.count, args.part_count,
                                        rng_seed=args.seed + fi * 1000,
                                        points_n=args.points))
    config = TrainConfig(pretrain_epochs=args.epochs, rng_seed=args.seed)
    params, acc = pretrain(dataset, config)
    Path(args.out).write_bytes(save_checkpoint(params))
    print(f"pretrained on {len(dataset)} clouds, final training accuracy "
          f"{acc:.4f}; checkpoint at {args.out}")
    return 0


def _cmd_experiment(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = {k: dict(v) for k, v in DEFAULT_CONFIG.items()}
    if args.seed is not None:
        cfg["experiment"]["seeds"] = [args.seed]
    summary = run_experiment(cfg, args.out_dir)
    print(f"experiment complete; summary in {Path(args.out_dir) / 'summary.md'}")
    for arm, e in sorted(summary["arms"].items()):
        print(f"  {arm}: {e['mean_clicks']:.2f} clicks/cloud "
              f"({e['click_ratio_vs_manual']:.3f} of manual)")
    return 0


def _cmd_serve(args):
    import uvicorn
    from .server import create_app
    port = args.port or int(os.environ.get("PCAL_PORT", "8000"))
    uvicorn.run(create_app(), host=args.host, port=port)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pcal",
                                     description="Point-cloud part annotation workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="generate a synthetic labeled dataset")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--part-count", type=int, default=3)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("pretrain", help="pretrain the base network on synthetic shapes")
    p.add_argument("--family", choices=FAMILIES, nargs="+", default=["table", "lamp"])
    p.add_argument("--count", type=int, default=4, help="clouds per family")
    p.add_argument("--part-count", type=int, default=3)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("experiment", help="run the simulated-annotator experiment")
    p.add_argument("--config", help="TOML config file (defaults used if omitted)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, help="override: run a single RNG seed")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("serve", help="start the annotation HTTP server")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_cmd_serve)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PcalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

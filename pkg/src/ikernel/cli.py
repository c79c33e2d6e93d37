"""Command-line entry point: ``ikernel --config run.toml --out results/``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import EXPERIMENTS, load_config
from .errors import IKernelError

log = logging.getLogger("ikernel")


def build_parser():
    p = argparse.ArgumentParser(
        prog="ikernel",
        description="Seeded experiments for learning radial interaction kernels.")
    p.add_argument("--config", required=True, metavar="PATH", help="TOML experiment file")
    p.add_argument("--seed", type=int, default=None, metavar="U64",
                   help="override the seed in the config")
    p.add_argument("--out", default="results", metavar="DIR", help="output directory")
    p.add_argument("--threads", type=int, default=1, metavar="K",
                   help="worker threads (never changes results)")
    p.add_argument("--experiment", choices=EXPERIMENTS, default=None, metavar="NAME",
                   help="override the experiment kind: " + ", ".join(EXPERIMENTS))
    p.add_argument("--dataset", default=None, metavar="PATH",
                   help="dataset file for the estimate experiment")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _summary(kind, result):
    if kind == "rate_sweep":
        return {"slope": result.slope, "r2": result.r2, "reference": result.reference,
                "failed": result.failed, "notice": result.notice}
    if kind == "simulate":
        return {"M": result.M, "N": result.N, "d": result.d}
    if kind == "estimate":
        return {"gated": result.gated, "n": result.n, "lambda_min": result.lambda_min}
    if kind == "tail_sweep":
        return {"cells": len(result)}
    if kind == "lowerbound":
        return [{k: r.get(k) for k in ("K_bar", "error_rate", "fano_floor", "failed")}
                for r in result]
    return result


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("ikernel: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.experiment is not None:
            cfg = cfg.with_kind(args.experiment)
        from .experiments import run
        kwargs = {"dataset": args.dataset} if cfg.kind == "estimate" else {}
        log.info("running %s with seed %d", cfg.kind, cfg.seed)
        result = run(cfg, args.out, args.threads, **kwargs)
    except (IKernelError, OSError) as exc:
        print(f"ikernel: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_summary(cfg.kind, result), indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())

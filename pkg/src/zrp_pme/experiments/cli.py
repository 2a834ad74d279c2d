"""zrp-pme <subcommand> --config FILE [--seed S] [--out DIR] [--threads T]"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config, resolve_seed
from .runners import RUNNERS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zrp-pme", description="Zero-range process / porous medium experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="experiment config file")
        s.add_argument("--seed", type=int, default=None, help="master seed (overrides env and config)")
        s.add_argument("--out", default=None, help="output directory")
        s.add_argument("--threads", type=int, default=None, help="replica worker threads")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = load_config(args.config)
    seed = resolve_seed(cfg, args.seed)
    threads = args.threads or cfg.threads
    out = args.out or cfg.out
    result = RUNNERS[args.command](cfg, seed=seed, threads=threads)
    files = result.write(out, cfg, seed, threads)
    for f in files:
        print(f)
    for k, v in result.summary.items():
        if isinstance(v, (int, float, bool, str)):
            print(f"{k} = {v}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: simulate | preprocess | invert | full."""

import argparse
import logging
import os
import sys


def _apply_thread_limit():
    threads = os.environ.get("WAVECIP_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wavecip",
        description="Reconstruct dielectric constants from backscattered wave data",
    )
    parser.add_argument("command", choices=["simulate", "preprocess", "invert", "full"])
    parser.add_argument("--config", help="YAML run configuration (defaults used if omitted)")
    parser.add_argument("--out", required=True, help="run directory for artifacts")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--mode", choices=["test1", "test2"],
                        help="override the inversion mode")
    parser.add_argument("--verbose", "-v", action="store_true")
    return parser


def main(argv=None):
    _apply_thread_limit()
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    from .pipeline import load_config, run_pipeline

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mode is not None:
        overrides.setdefault("inversion", {})["mode"] = args.mode
    cfg = load_config(args.config, overrides)
    try:
        run_pipeline(args.command, cfg, args.out, mode=args.mode)
    except Exception as exc:  # nonzero exit with partial outputs retained
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

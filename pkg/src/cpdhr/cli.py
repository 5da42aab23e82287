"""Command line entry point.

Subcommands mirror the pipeline stages; modes and indices are 1-based on
the command line. Exit codes: 0 on success, 1 for validation problems,
2 when the solver did not converge (artifacts are still written).
"""

import argparse
import sys

from . import formats, pipeline
from .solvers import ALGORITHMS, MISSING_STRATEGIES


def _parse_seed_range(text):
    """'a..b' inclusive, or a single integer."""
    if ".." in text:
        lo, _, hi = text.partition("..")
        try:
            lo, hi = int(lo), int(hi)
        except ValueError:
            raise ValueError(f"bad seed range {text!r}, expected 'a..b'") from None
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    try:
        return [int(text)]
    except ValueError:
        raise ValueError(f"bad seed value {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cpdhr",
        description="Array-scene simulation, CPD source separation, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="build scene tensors from a config file")
    p.add_argument("config")
    p.add_argument("out_dir")

    p = sub.add_parser("decompose", help="run the CPD solver on a tensor file")
    p.add_argument("tensor")
    p.add_argument("out_dir")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="gauss_newton_als_warmstart")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--missing-data-strategy", choices=MISSING_STRATEGIES,
                   default="expectation_imputation")

    p = sub.add_parser("evaluate", help="compare estimated factors against the truth")
    p.add_argument("truth_dir")
    p.add_argument("estimate_dir")
    p.add_argument("out_report")

    p = sub.add_parser("slices", help="export one tensor slice as CSV of magnitudes")
    p.add_argument("tensor")
    p.add_argument("out_csv")
    p.add_argument("--mode", type=int, required=True, help="1-based mode")
    p.add_argument("--index", type=int, required=True, help="1-based slice index")

    p = sub.add_parser("plot", help="overlay signal CSVs as an SVG line chart")
    p.add_argument("signals", nargs="+")
    p.add_argument("out_svg")

    p = sub.add_parser("pipeline", help="simulate, decompose, evaluate in one go")
    p.add_argument("config")
    p.add_argument("out_dir")
    p.add_argument("--seeds", help="inclusive sweep 'a..b' overriding the config seed")
    return parser


def run(argv):
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        pipeline.simulate(args.config, args.out_dir)
        return 0
    if args.command == "decompose":
        _, diag = pipeline.decompose(
            args.tensor, args.rank, args.algorithm, args.seed, args.out_dir,
            missing_data_strategy=args.missing_data_strategy,
        )
        return 0 if diag.converged else 2
    if args.command == "evaluate":
        pipeline.evaluate(args.truth_dir, args.estimate_dir, args.out_report)
        return 0
    if args.command == "slices":
        t = formats.load_tensor(args.tensor)
        with open(args.out_csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(formats.slice_csv(t, mode=args.mode - 1, index=args.index - 1))
        return 0
    if args.command == "plot":
        pipeline.plot_overlay(args.signals, args.out_svg)
        return 0
    if args.command == "pipeline":
        seeds = _parse_seed_range(args.seeds) if args.seeds else None
        _, converged = pipeline.run_pipeline(args.config, args.out_dir, seeds=seeds)
        return 0 if converged else 2
    raise AssertionError(f"unhandled command {args.command!r}")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for solver
        # non-convergence, so fold usage problems into the validation code
        return 0 if not exc.code else 1


if __name__ == "__main__":
    sys.exit(main())

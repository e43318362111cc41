# src/stainreg/commands/benchmark.py
import argparse
import logging
import sys

from stainreg.bench import BENCH_KINDS, format_bench, run_bench
from stainreg.commands import echo_config, prepare_output, with_flags
from stainreg.config import Settings
from stainreg.data.atomic import atomic_write_text
from stainreg.synthgen.benchmark import make_benchmarks
from stainreg.synthgen.settings import WARP_KINDS

_log = logging.getLogger(__name__)


def synth(args: argparse.Namespace, settings: Settings) -> int:
    width, height = args.size if args.size else (None, None)
    settings = with_flags(settings, "synth", seed=args.seed, warp_kind=args.warp, width=width, height=height)
    bundles = make_benchmarks(settings.synth, args.out, args.cases, settings.runtime.workers)
    echo_config(settings, args.out, directory=True)
    for bundle in bundles:
        print(bundle)
    _log.info("Wrote %d bundle(s) under %s", len(bundles), args.out)
    return 0


def bench(args: argparse.Namespace, settings: Settings) -> int:
    report = run_bench(
        args.warp, args.seeds, settings.registration(), args.first_seed, args.size, settings.runtime.workers
    )
    text = format_bench(report)
    sys.stdout.write(text)
    if args.out:
        atomic_write_text(prepare_output(args.out), text)
        echo_config(settings, args.out)
    return 0


def setup(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("synth", help="Generate synthetic benchmark bundles with known ground truth")
    parser.add_argument("--out", required=True, help="Directory receiving one case_<seed> bundle per case")
    parser.add_argument("--seed", type=int, help="Seed of the first case (synth.seed)")
    parser.add_argument("--cases", type=int, default=1, help="Number of consecutive seeds to generate")
    parser.add_argument("--warp", choices=WARP_KINDS, help="Warp family (synth.warp_kind)")
    parser.add_argument("--size", type=int, nargs=2, metavar=("W", "H"), help="Image size in pixels")
    parser.set_defaults(handler=synth)

    parser = subparsers.add_parser("bench", help="Run a recovery sweep over synthetic cases")
    parser.add_argument("--warp", choices=BENCH_KINDS, required=True)
    parser.add_argument("--seeds", type=int, default=100, help="Number of cases")
    parser.add_argument("--first-seed", type=int, default=0)
    parser.add_argument("--size", type=int, default=512, help="Square image size in pixels")
    parser.add_argument("--out", help="Optional CSV receiving the per-seed table")
    parser.set_defaults(handler=bench)

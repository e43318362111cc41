# src/stainreg/commands/scoring.py
import argparse
import logging
from pathlib import Path

from stainreg.commands import echo_config, prepare_output, with_flags
from stainreg.config import Settings
from stainreg.data.atomic import atomic_write_text
from stainreg.errors import ArgumentError
from stainreg.evalbench.landmarks import read_dims, read_submission, read_truth
from stainreg.evalbench.leaderboard import (
    format_stability_csv,
    load_metrics_dir,
    rank_submissions,
    ranking_stability,
    save_leaderboard,
)
from stainreg.evalbench.scoring import evaluate_submission, score_annotators, score_pairs, write_metrics
from stainreg.evalbench.stats import compare_submissions, format_comparison_csv, format_split_csv, read_split

_log = logging.getLogger(__name__)

STABILITY_THRESHOLDS = (50.0, 75.0, 100.0, 115.0, 150.0, 200.0)


def evaluate(args: argparse.Namespace, settings: Settings) -> int:
    settings = with_flags(settings, "eval", n_boot=args.boot, seed=args.seed)
    truth = read_truth(args.truth)
    dims = read_dims(args.dims)
    submission = read_submission(args.submission)

    result = evaluate_submission(truth, submission, dims, settings.eval)
    if result.excluded:
        _log.warning("Excluded pair(s) with too few landmarks: %s", ", ".join(result.excluded))
    write_metrics(result.metrics, prepare_output(args.out))
    if args.annotators:
        write_metrics(score_annotators(truth, dims, settings.eval).metrics, prepare_output(args.annotators))
    echo_config(settings, args.out)
    return 0


def rank(args: argparse.Namespace, settings: Settings) -> int:
    entries = rank_submissions(load_metrics_dir(args.metrics_dir))
    prepare_output(args.out)
    save_leaderboard(entries, args.out)
    echo_config(settings, args.out)
    return 0


def compare(args: argparse.Namespace, settings: Settings) -> int:
    truth = read_truth(args.truth)
    dims = read_dims(args.dims)
    files = sorted(Path(args.submissions).glob("*.csv"))
    if not files:
        raise ArgumentError(f"No submission files found in '{args.submissions}'")
    submissions = {path.stem: read_submission(path) for path in files}

    p90_table = {}
    for name, rows in submissions.items():
        scores, _ = score_pairs(truth, rows, dims, settings.eval)
        p90_table[name] = {score.pair_id: score.p90_um for score in scores}
    split = read_split(args.split) if args.split else None
    comparison = compare_submissions(p90_table, split)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "comparison.csv", format_comparison_csv(comparison))
    if split is not None:
        atomic_write_text(out / "split.csv", format_split_csv(comparison))
    thresholds = args.thresholds or STABILITY_THRESHOLDS
    stability = ranking_stability(truth, submissions, dims, thresholds, settings.eval)
    atomic_write_text(out / "stability.csv", format_stability_csv(stability))
    echo_config(settings, out, directory=True)
    return 0


def setup(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("evaluate", help="Score a submission against truth landmarks")
    parser.add_argument("--truth", required=True)
    parser.add_argument("--submission", required=True)
    parser.add_argument("--dims", required=True, help="Moving image sizes per pair")
    parser.add_argument("--out", required=True, help="Metrics CSV to write")
    parser.add_argument("--boot", type=int, help="Bootstrap replicates (eval.n_boot)")
    parser.add_argument("--seed", type=int, help="Bootstrap seed (eval.seed)")
    parser.add_argument("--annotators", help="Optional metrics CSV scoring the annotators against each other")
    parser.set_defaults(handler=evaluate)

    parser = subparsers.add_parser("rank", help="Build the leaderboard from a directory of metrics files")
    parser.add_argument("--metrics-dir", required=True)
    parser.add_argument("--out", required=True, help="Output prefix; writes <out>.txt and <out>.csv")
    parser.set_defaults(handler=rank)

    parser = subparsers.add_parser("compare", help="Pairwise statistics and ranking stability of submissions")
    parser.add_argument("--truth", required=True)
    parser.add_argument("--dims", required=True)
    parser.add_argument("--submissions", required=True, help="Directory of submission CSVs")
    parser.add_argument("--out", required=True, help="Output directory")
    parser.add_argument("--split", help="CSV assigning each pair_id to one of two groups")
    parser.add_argument("--thresholds", type=float, nargs="+", help="DBA exclusion thresholds in um")
    parser.set_defaults(handler=compare)

# src/stainreg/evalbench/leaderboard.py
import logging
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass, replace
from pathlib import Path

from stainreg.data.atomic import atomic_write_text
from stainreg.errors import ArgumentError, EmptyEvaluationError
from stainreg.evalbench.landmarks import LandmarkRecord, PairDims, SubmissionRecord, format_csv
from stainreg.evalbench.scoring import METRICS, EvalConfig, MetricValue, aggregate, read_metrics, score_pairs
from stainreg.util import format_float

_log = logging.getLogger(__name__)

RANK_METRIC = "median90_um"
TEXT_TITLES = {
    "median90_um": "Median p90 [um]",
    "p90of90_um": "p90 of p90 [um]",
    "mean90_um": "Mean p90 [um]",
    "median_all_um": "Median [um]",
    "mean_all_um": "Mean [um]",
    "reduction_pct": "Reduction [%]",
}


@dataclass
class LeaderboardEntry:
    name: str
    metrics: dict[str, MetricValue]
    rank: int = 0

    @property
    def score(self) -> float:
        value = self.metrics[RANK_METRIC].value
        return math.inf if value is None else value


def rank_submissions(named: dict[str, dict[str, MetricValue]]) -> list[LeaderboardEntry]:
    """
    Sorts submissions by ascending median 90th percentile.

    Equal scores share the smaller rank and the next rank skips; submissions
    without a score go last.
    """
    if not named:
        raise ArgumentError("rank_submissions needs at least one submission")
    entries = sorted(
        (LeaderboardEntry(name, metrics) for name, metrics in named.items()), key=lambda e: (e.score, e.name)
    )
    for position, entry in enumerate(entries, start=1):
        previous = entries[position - 2] if position > 1 else None
        entry.rank = previous.rank if previous is not None and previous.score == entry.score else position
    _log.info("Ranked %d submission(s); leader '%s' (%s um)", len(entries), entries[0].name, entries[0].score)
    return entries


def ranking_stability(
    truth: Sequence[LandmarkRecord],
    submissions: dict[str, Sequence[SubmissionRecord]],
    dims: dict[str, PairDims],
    thresholds: Sequence[float],
    cfg: EvalConfig = EvalConfig(),
) -> dict[float, dict[str, int]]:
    """Rank of every submission when the annotator-distance exclusion threshold varies."""
    ranks: dict[float, dict[str, int]] = {}
    for threshold in thresholds:
        swept = replace(cfg, dba_threshold_um=threshold)
        named = {}
        try:
            for name, rows in submissions.items():
                scores, _ = score_pairs(truth, rows, dims, swept)
                named[name] = aggregate(scores, swept.reduction_mode)
        except EmptyEvaluationError:
            _log.warning("No pair survives a DBA threshold of %g um; skipping it", threshold)
            continue
        ranks[threshold] = {entry.name: entry.rank for entry in rank_submissions(named)}
    return ranks


# --- Persistence ---


def load_metrics_dir(directory: str | os.PathLike) -> dict[str, dict[str, MetricValue]]:
    """Every `*.csv` metrics file under `directory`, keyed by file stem."""
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise ArgumentError(f"No metrics files found in '{directory}'")
    return {path.stem: read_metrics(path) for path in files}


def _cell(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def format_leaderboard_text(entries: Sequence[LeaderboardEntry]) -> str:
    header = ["Rank", "Submission"] + [TEXT_TITLES[m] for m in METRICS]
    rows = [header]
    for entry in entries:
        row = [str(entry.rank), entry.name]
        for metric in METRICS:
            m = entry.metrics[metric]
            ci = f" [{_cell(m.ci_lo)}, {_cell(m.ci_hi)}]" if m.ci_lo is not None else ""
            row.append(_cell(m.value) + ci)
        rows.append(row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths, strict=True)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines) + "\n"


def format_leaderboard_csv(entries: Sequence[LeaderboardEntry]) -> str:
    header = ["rank", "submission"]
    for metric in METRICS:
        header += [metric, f"{metric}_lo", f"{metric}_hi"]
    rows = []
    for entry in entries:
        row = [str(entry.rank), entry.name]
        for metric in METRICS:
            m = entry.metrics[metric]
            row += ["" if v is None else format_float(v) for v in (m.value, m.ci_lo, m.ci_hi)]
        rows.append(row)
    return format_csv(header, rows)


def format_stability_csv(ranks: dict[float, dict[str, int]]) -> str:
    names = sorted({name for by_name in ranks.values() for name in by_name})
    rows = ([format_float(t)] + [str(ranks[t].get(name, "")) for name in names] for t in sorted(ranks))
    return format_csv(["dba_threshold_um", *names], rows)


def save_leaderboard(entries: Sequence[LeaderboardEntry], out_prefix: str | os.PathLike) -> tuple[Path, Path]:
    """Writes `<prefix>.txt` and `<prefix>.csv` atomically."""
    prefix = Path(out_prefix)
    text_path = prefix.with_name(prefix.name + ".txt")
    csv_path = prefix.with_name(prefix.name + ".csv")
    atomic_write_text(text_path, format_leaderboard_text(entries))
    atomic_write_text(csv_path, format_leaderboard_csv(entries))
    _log.info("Wrote leaderboard to %s and %s", text_path, csv_path)
    return text_path, csv_path

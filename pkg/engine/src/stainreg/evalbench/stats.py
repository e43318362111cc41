# src/stainreg/evalbench/stats.py
import itertools
import logging
import os
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from stainreg.errors import ArgumentError, ValidationError
from stainreg.evalbench.landmarks import format_csv, read_table
from stainreg.similarity.measures import Correlation
from stainreg.util import format_float

_log = logging.getLogger(__name__)

EXACT_MAX_N = 12
# Relative slack when comparing enumerated statistics with the observed one.
STAT_TOL = 1e-9


def _two_sided(null: np.ndarray, observed: float) -> float:
    """Two-sided p from an equally weighted null distribution: twice the smaller tail, capped at 1."""
    slack = STAT_TOL * max(1.0, abs(observed))
    lower = np.mean(null <= observed + slack)
    upper = np.mean(null >= observed - slack)
    return float(min(1.0, 2.0 * min(lower, upper)))


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> float:
    """
    Two-sided paired Wilcoxon signed-rank test of a - b.

    Zero differences are dropped and tied magnitudes share average ranks. Up to
    12 non-zero differences the null distribution of W+ is enumerated over all
    sign assignments; beyond that the normal approximation with continuity and
    tie correction is used. All-zero differences give p = 1.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ArgumentError(f"Paired samples must have equal lengths, got {x.shape} and {y.shape}")
    if x.size == 0:
        raise ArgumentError("Wilcoxon test needs at least one pair")

    diff = x - y
    diff = diff[diff != 0]
    n = diff.size
    if n == 0:
        return 1.0
    if n > EXACT_MAX_N:
        return float(stats.wilcoxon(diff, zero_method="wilcox", correction=True, method="approx").pvalue)

    ranks = stats.rankdata(np.abs(diff))
    observed = float(ranks[diff > 0].sum())
    signs = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    null = signs @ ranks
    return _two_sided(null, observed)


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> float:
    """
    Two-sided Mann-Whitney U test of independent samples.

    Exact when the pooled sample has at most 12 values and no ties; otherwise the
    normal approximation with tie and continuity correction.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.size == 0 or y.size == 0:
        raise ArgumentError("Mann-Whitney test needs two non-empty samples")
    pooled = np.concatenate([x, y])
    exact = pooled.size <= EXACT_MAX_N and np.unique(pooled).size == pooled.size
    method = "exact" if exact else "asymptotic"
    return float(stats.mannwhitneyu(x, y, alternative="two-sided", use_continuity=True, method=method).pvalue)


def bh_adjust(pvalues: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg step-up adjusted p-values in input order."""
    p = np.asarray(pvalues, dtype=np.float64)
    if p.size == 0:
        return []
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ArgumentError(f"p-values must lie in [0, 1], got {p.tolist()}")
    return [float(v) for v in stats.false_discovery_control(p, method="bh")]


def spearman(a: Sequence[float], b: Sequence[float]) -> Correlation:
    """Pearson correlation of average ranks; a constant input yields (0.0, degenerate)."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ArgumentError(f"Samples must have equal lengths, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ArgumentError("Spearman correlation needs at least two observations")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return Correlation(0.0, True)
    rho = float(stats.spearmanr(x, y).statistic)
    return Correlation(min(1.0, max(-1.0, rho)), False)


# --- Submission Comparison ---


@dataclass
class Comparison:
    """Pairwise statistics between submissions over their common scored pairs."""

    names: list[str]
    pairs: list[str]
    wilcoxon_p: dict[tuple[str, str], float] = field(default_factory=dict)
    wilcoxon_p_adjusted: dict[tuple[str, str], float] = field(default_factory=dict)
    spearman_rho: dict[tuple[str, str], Correlation] = field(default_factory=dict)
    split_p: dict[str, float] = field(default_factory=dict)


def compare_submissions(
    p90_table: dict[str, dict[str, float]], split: dict[str, str] | None = None
) -> Comparison:
    """
    Paired Wilcoxon tests (BH-adjusted) and Spearman correlations between every two
    submissions on the per-pair 90th percentiles they share.

    `p90_table` maps submission name -> pair id -> p90. With `split` (pair id ->
    group label, two labels) each submission also gets a Mann-Whitney U p-value
    between its two groups of pair scores.
    """
    names = sorted(p90_table)
    if not names:
        raise ArgumentError("compare_submissions needs at least one submission")
    common = sorted(set.intersection(*(set(p90_table[name]) for name in names)))
    if len(names) > 1 and len(common) < 2:
        raise ArgumentError(f"Submissions share only {len(common)} scored pair(s)")
    result = Comparison(names, common)

    keys = list(itertools.combinations(names, 2))
    for first, second in keys:
        a = [p90_table[first][pair] for pair in common]
        b = [p90_table[second][pair] for pair in common]
        result.wilcoxon_p[(first, second)] = wilcoxon_signed_rank(a, b)
        result.spearman_rho[(first, second)] = spearman(a, b)
    adjusted = bh_adjust([result.wilcoxon_p[key] for key in keys])
    result.wilcoxon_p_adjusted = dict(zip(keys, adjusted, strict=True))

    if split is not None:
        labels = sorted(set(split.values()))
        if len(labels) != 2:
            raise ArgumentError(f"A split needs exactly two groups, got {labels}")
        for name in names:
            groups = [[v for pair, v in p90_table[name].items() if split.get(pair) == label] for label in labels]
            if all(groups):
                result.split_p[name] = mann_whitney_u(*groups)
            else:
                _log.warning("Submission '%s' has no scored pairs in one split group; skipping", name)
    _log.info("Compared %d submission(s) over %d common pair(s)", len(names), len(common))
    return result


# --- Persistence ---

SPLIT_HEADER = ("pair_id", "group")
COMPARISON_HEADER = ("first", "second", "wilcoxon_p", "wilcoxon_p_adjusted", "spearman_rho", "degenerate")


def read_split(path: str | os.PathLike) -> dict[str, str]:
    """Pair id -> group label from a `pair_id,group` CSV."""
    split: dict[str, str] = {}
    for number, (pair_id, group) in read_table(path, SPLIT_HEADER):
        if not group:
            raise ValidationError(f"Pair '{pair_id}' has an empty group label", row=number)
        if pair_id in split:
            raise ValidationError(f"Duplicate split entry for pair '{pair_id}'", row=number)
        split[pair_id] = group
    return split


def format_comparison_csv(comparison: Comparison) -> str:
    rows = []
    for (first, second), p in sorted(comparison.wilcoxon_p.items()):
        rho = comparison.spearman_rho[(first, second)]
        adjusted = comparison.wilcoxon_p_adjusted[(first, second)]
        values = [format_float(v) for v in (p, adjusted, rho.value)]
        rows.append([first, second, *values, str(int(rho.degenerate))])
    return format_csv(COMPARISON_HEADER, rows)


def format_split_csv(comparison: Comparison) -> str:
    rows = ([name, format_float(p)] for name, p in sorted(comparison.split_p.items()))
    return format_csv(["submission", "mann_whitney_p"], rows)

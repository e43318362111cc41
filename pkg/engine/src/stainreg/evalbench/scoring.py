# src/stainreg/evalbench/scoring.py
import logging
import math
import os
from collections import defaultdict
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from stainreg.data.atomic import atomic_write_text
from stainreg.errors import ArgumentError, EmptyEvaluationError, ValidationError
from stainreg.evalbench.landmarks import (
    DBA_THRESHOLD_UM,
    MIN_LANDMARKS_PER_PAIR,
    Key,
    LandmarkRecord,
    PairDims,
    SubmissionRecord,
    clamped_source,
    dba,
    filter_landmarks,
    format_csv,
    parse_number,
    read_table,
    resolve_submission,
    tre,
)
from stainreg.synthgen.prng import parallel_uniforms
from stainreg.util import format_float

_log = logging.getLogger(__name__)

METRICS = ("median90_um", "p90of90_um", "mean90_um", "median_all_um", "mean_all_um", "reduction_pct")
METRICS_HEADER = ("metric", "value", "ci_lo", "ci_hi")
REDUCTION_MODES = ("slide", "landmark")
BOOTSTRAP_SAMPLES = 10000
BOOTSTRAP_BLOCK = 1000


@dataclass(frozen=True)
class EvalConfig:
    dba_threshold_um: float = DBA_THRESHOLD_UM
    min_per_pair: int = MIN_LANDMARKS_PER_PAIR
    pair_percentile: float = 90.0
    n_boot: int = BOOTSTRAP_SAMPLES
    seed: int = 0
    reduction_mode: str = "slide"

    def __post_init__(self):
        if self.dba_threshold_um <= 0:
            raise ArgumentError(f"dba_threshold_um must be > 0, got {self.dba_threshold_um}")
        if self.min_per_pair < 1:
            raise ArgumentError(f"min_per_pair must be >= 1, got {self.min_per_pair}")
        if not 0 <= self.pair_percentile <= 100:
            raise ArgumentError(f"pair_percentile must lie in [0, 100], got {self.pair_percentile}")
        if self.n_boot < 1:
            raise ArgumentError(f"n_boot must be >= 1, got {self.n_boot}")
        if self.reduction_mode not in REDUCTION_MODES:
            raise ArgumentError(f"reduction_mode must be one of {REDUCTION_MODES}, got '{self.reduction_mode}'")


def percentile(values: Sequence[float] | np.ndarray, p: float) -> float:
    """Linear interpolation between order statistics at rank 1 + (p / 100)(n - 1)."""
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise ArgumentError("percentile of an empty list")
    if not 0 <= p <= 100:
        raise ArgumentError(f"percentile p must lie in [0, 100], got {p}")
    return float(np.percentile(data, p, method="linear"))


@dataclass(frozen=True)
class PairScore:
    pair_id: str
    n_included: int
    p90_um: float
    mean_before_um: float
    mean_after_um: float
    reduction_pct: float | None
    errors_um: tuple[float, ...] = ()
    before_um: tuple[float, ...] = ()


def pair_score(
    records: Sequence[LandmarkRecord],
    resolved: dict[Key, tuple[float, float]],
    dims: PairDims,
    pair_percentile: float = 90.0,
) -> PairScore:
    """Scores one pair from its kept records; before-registration errors use the clamped source points."""
    if not records:
        raise ArgumentError("pair_score needs at least one record")
    pair_id = records[0].pair_id
    errors = [tre(resolved[r.key], r) for r in records]
    before = [tre(clamped_source(r, dims), r) for r in records]
    return _score_from_errors(pair_id, errors, before, pair_percentile)


def _score_from_errors(pair_id: str, errors: list[float], before: list[float], pair_percentile: float) -> PairScore:
    mean_before = float(np.mean(before))
    mean_after = float(np.mean(errors))
    if mean_before > 0:
        reduction = 100.0 * (1.0 - mean_after / mean_before)
    else:
        _log.warning("Pair '%s' has zero error before registration; reduction undefined", pair_id)
        reduction = None
    return PairScore(
        pair_id,
        len(errors),
        percentile(errors, pair_percentile),
        mean_before,
        mean_after,
        reduction,
        tuple(errors),
        tuple(before),
    )


# --- Aggregation ---


@dataclass(frozen=True)
class MetricValue:
    value: float | None
    ci_lo: float | None = None
    ci_hi: float | None = None


def _median(sample: np.ndarray) -> np.ndarray:
    return np.median(sample, axis=-1)


def _p90(sample: np.ndarray) -> np.ndarray:
    return np.percentile(sample, 90.0, axis=-1, method="linear")


def _mean(sample: np.ndarray) -> np.ndarray:
    return np.mean(sample, axis=-1)


def _pooled_reduction(sample: np.ndarray) -> np.ndarray:
    """sample[..., n, 2] of (before, after) errors -> 100 (1 - mean after / mean before)."""
    before = sample[..., 0].mean(axis=-1)
    after = sample[..., 1].mean(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 100.0 * (1.0 - after / before)


@dataclass(frozen=True)
class Statistic:
    """A named metric; `func` maps a (B, n, ...) stack of samples to B values."""

    name: str
    func: Callable[[np.ndarray], np.ndarray]


@dataclass
class EvaluationResult:
    metrics: dict[str, MetricValue]
    pairs: list[PairScore] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)

    def value(self, metric: str) -> float | None:
        return self.metrics[metric].value


def _metric_samples(scores: Sequence[PairScore], reduction_mode: str) -> dict[str, tuple[np.ndarray, Statistic]]:
    p90s = np.array([s.p90_um for s in scores])
    pooled = np.array([e for s in scores for e in s.errors_um])
    samples = {
        "median90_um": (p90s, Statistic("median90_um", _median)),
        "p90of90_um": (p90s, Statistic("p90of90_um", _p90)),
        "mean90_um": (p90s, Statistic("mean90_um", _mean)),
        "median_all_um": (pooled, Statistic("median_all_um", _median)),
        "mean_all_um": (pooled, Statistic("mean_all_um", _mean)),
    }
    match reduction_mode:
        case "slide":
            reductions = np.array([s.reduction_pct for s in scores if s.reduction_pct is not None])
            samples["reduction_pct"] = (reductions, Statistic("reduction_pct", _mean))
        case "landmark":
            pairs = np.array([(b, e) for s in scores for b, e in zip(s.before_um, s.errors_um, strict=True)])
            samples["reduction_pct"] = (pairs, Statistic("reduction_pct", _pooled_reduction))
    return samples


def aggregate(scores: Sequence[PairScore], reduction_mode: str = "slide") -> dict[str, MetricValue]:
    """
    Point estimates of the results-table metrics: median, 90th percentile and mean of the pair
    scores; median and mean over the pooled landmark errors; mean distance reduction.
    """
    if not scores:
        raise EmptyEvaluationError()
    metrics = {}
    for name, (sample, statistic) in _metric_samples(scores, reduction_mode).items():
        if len(sample) == 0:
            metrics[name] = MetricValue(None)
            continue
        value = float(statistic.func(sample[None, ...])[0])
        metrics[name] = MetricValue(value if math.isfinite(value) else None)
    return metrics


# --- Bootstrap ---


def bootstrap_ci(
    sample: np.ndarray | Sequence[float],
    statistic: Statistic | Callable[[np.ndarray], np.ndarray],
    n_boot: int = BOOTSTRAP_SAMPLES,
    seed: int = 0,
) -> tuple[float, float]:
    """
    Percentile bootstrap interval (2.5th, 97.5th) of `statistic` over resampled rows of `sample`.

    Replicate r draws its indices floor(u * n) from PRNG stream (seed, r), so the
    interval does not depend on how replicates are batched. The interval is
    widened to contain the point estimate.
    """
    data = np.asarray(sample, dtype=np.float64)
    n = len(data)
    if n == 0:
        raise ArgumentError("bootstrap_ci needs at least one sample")
    if n_boot < 1:
        raise ArgumentError(f"n_boot must be >= 1, got {n_boot}")
    func = statistic.func if isinstance(statistic, Statistic) else statistic
    point = float(func(data[None, ...])[0])

    replicates = np.empty(n_boot)
    for start in range(0, n_boot, BOOTSTRAP_BLOCK):
        streams = np.arange(start, min(start + BOOTSTRAP_BLOCK, n_boot))
        indices = np.minimum((parallel_uniforms(seed, streams, n) * n).astype(np.int64), n - 1)
        replicates[start : start + len(streams)] = func(data[indices])
    finite = replicates[np.isfinite(replicates)]
    if finite.size == 0:
        return point, point
    lo, hi = np.percentile(finite, [2.5, 97.5], method="linear")
    return min(float(lo), point), max(float(hi), point)


def aggregate_with_ci(scores: Sequence[PairScore], cfg: EvalConfig) -> dict[str, MetricValue]:
    """Point estimates plus bootstrap intervals; pair metrics resample pairs, pooled metrics resample landmarks."""
    if not scores:
        raise EmptyEvaluationError()
    points = aggregate(scores, cfg.reduction_mode)
    metrics = {}
    for name, (sample, statistic) in _metric_samples(scores, cfg.reduction_mode).items():
        point = points[name].value
        if point is None:
            metrics[name] = MetricValue(None)
            continue
        lo, hi = bootstrap_ci(sample, statistic, cfg.n_boot, cfg.seed)
        metrics[name] = MetricValue(point, lo, hi)
    return metrics


# --- End-to-End Scoring ---


def _group(records: Sequence[LandmarkRecord]) -> dict[str, list[LandmarkRecord]]:
    groups: dict[str, list[LandmarkRecord]] = defaultdict(list)
    for record in records:
        groups[record.pair_id].append(record)
    return dict(sorted(groups.items()))


def score_pairs(
    truth: Sequence[LandmarkRecord],
    submission: Sequence[SubmissionRecord],
    dims: dict[str, PairDims],
    cfg: EvalConfig,
) -> tuple[list[PairScore], list[str]]:
    kept, excluded = filter_landmarks(truth, cfg.dba_threshold_um, cfg.min_per_pair)
    resolved = resolve_submission(kept, submission, dims)
    scores = [
        pair_score(records, resolved, dims[pair_id], cfg.pair_percentile) for pair_id, records in _group(kept).items()
    ]
    return scores, excluded


def evaluate_submission(
    truth: Sequence[LandmarkRecord],
    submission: Sequence[SubmissionRecord],
    dims: dict[str, PairDims],
    cfg: EvalConfig = EvalConfig(),
) -> EvaluationResult:
    """Exclusion, missing-landmark fallback, per-pair scores and the bootstrapped metric suite."""
    scores, excluded = score_pairs(truth, submission, dims, cfg)
    if not scores:
        raise EmptyEvaluationError()
    metrics = aggregate_with_ci(scores, cfg)
    _log.info(
        "Scored %d pair(s) (%d excluded): median 90th percentile %s um",
        len(scores),
        len(excluded),
        metrics["median90_um"].value,
    )
    return EvaluationResult(metrics, scores, excluded)


def score_annotators(
    truth: Sequence[LandmarkRecord], dims: dict[str, PairDims], cfg: EvalConfig = EvalConfig()
) -> EvaluationResult:
    """The metric suite with each landmark's annotator distance standing in for its registration error."""
    kept, excluded = filter_landmarks(truth, cfg.dba_threshold_um, cfg.min_per_pair)
    scores = []
    for pair_id, records in _group(kept).items():
        errors = [dba(r) for r in records]
        before = [tre(clamped_source(r, dims[pair_id]), r) for r in records]
        scores.append(_score_from_errors(pair_id, errors, before, cfg.pair_percentile))
    if not scores:
        raise EmptyEvaluationError()
    return EvaluationResult(aggregate_with_ci(scores, cfg), scores, excluded)


# --- Metrics CSV ---


def _optional(value: float | None) -> str:
    return "" if value is None else format_float(value)


def format_metrics(metrics: dict[str, MetricValue]) -> str:
    rows = ([name, _optional(m.value), _optional(m.ci_lo), _optional(m.ci_hi)] for name, m in metrics.items())
    return format_csv(METRICS_HEADER, rows)


def write_metrics(metrics: dict[str, MetricValue], path: str | os.PathLike) -> None:
    atomic_write_text(path, format_metrics(metrics))


def read_metrics(path: str | os.PathLike) -> dict[str, MetricValue]:
    metrics: dict[str, MetricValue] = {}
    for number, (name, *fields) in read_table(path, METRICS_HEADER):
        if name not in METRICS:
            raise ValidationError(f"Unknown metric '{name}'", row=number)
        values = [
            parse_number(text, number, column) if text else None
            for text, column in zip(fields, METRICS_HEADER[1:], strict=True)
        ]
        metrics[name] = MetricValue(*values)
    missing = [name for name in METRICS if name not in metrics]
    if missing:
        raise ValidationError(f"{path}: missing metric row(s) {missing}")
    return metrics

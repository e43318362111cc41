from stainreg.evalbench.landmarks import (
    LandmarkRecord,
    PairDims,
    SubmissionRecord,
    dba,
    filter_landmarks,
    read_dims,
    read_submission,
    read_truth,
    resolve_submission,
    tre,
    write_dims,
    write_submission,
    write_truth,
)
from stainreg.evalbench.leaderboard import LeaderboardEntry, rank_submissions, ranking_stability
from stainreg.evalbench.scoring import (
    EvalConfig,
    EvaluationResult,
    MetricValue,
    PairScore,
    aggregate,
    bootstrap_ci,
    evaluate_submission,
    pair_score,
    percentile,
    score_annotators,
)
from stainreg.evalbench.stats import bh_adjust, compare_submissions, mann_whitney_u, spearman, wilcoxon_signed_rank

__all__ = [
    "EvalConfig",
    "EvaluationResult",
    "LandmarkRecord",
    "LeaderboardEntry",
    "MetricValue",
    "PairDims",
    "PairScore",
    "SubmissionRecord",
    "aggregate",
    "bh_adjust",
    "bootstrap_ci",
    "compare_submissions",
    "dba",
    "evaluate_submission",
    "filter_landmarks",
    "mann_whitney_u",
    "pair_score",
    "percentile",
    "rank_submissions",
    "ranking_stability",
    "read_dims",
    "read_submission",
    "read_truth",
    "resolve_submission",
    "score_annotators",
    "spearman",
    "tre",
    "wilcoxon_signed_rank",
    "write_dims",
    "write_submission",
    "write_truth",
]

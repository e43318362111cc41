# src/stainreg/bench.py
"""
Recovery sweeps on synthetic cases with known ground truth.

`rigid` cases count as recovered when registration removes at least 95% of the
mean landmark displacement; `deformable` cases when the mean residual drops
below 1.5 px with every deformable objective trace non-increasing. Each case
also records whether the final error stays at or below the pre-alignment error.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from stainreg.errors import ArgumentError
from stainreg.register.pipeline import register_pair
from stainreg.register.settings import RegConfig
from stainreg.synthgen.benchmark import make_case
from stainreg.synthgen.settings import SynthSpec
from stainreg.transform.geometry import map_landmarks
from stainreg.util import format_float

_log = logging.getLogger(__name__)

BENCH_KINDS = ("rigid", "deformable")
MIN_REDUCTION_PCT = 95.0
MAX_RESIDUAL_PX = 1.5
TRACE_SLACK = 1e-9


@dataclass(frozen=True)
class BenchOutcome:
    seed: int
    before_px: float
    prealign_px: float
    after_px: float
    monotone: bool
    failed: bool
    seconds: float

    @property
    def reduction_pct(self) -> float:
        return 100.0 * (1.0 - self.after_px / self.before_px) if self.before_px > 0 else 0.0

    @property
    def kept_prealign(self) -> bool:
        """Final error no worse than after pre-alignment alone."""
        return not self.failed and self.after_px <= self.prealign_px


@dataclass(frozen=True)
class BenchReport:
    kind: str
    outcomes: tuple[BenchOutcome, ...]

    def recovered(self, outcome: BenchOutcome) -> bool:
        if outcome.failed:
            return False
        match self.kind:
            case "rigid":
                return outcome.reduction_pct >= MIN_REDUCTION_PCT
            case _:
                return outcome.after_px < MAX_RESIDUAL_PX and outcome.monotone

    @property
    def fraction(self) -> float:
        return sum(self.recovered(o) for o in self.outcomes) / len(self.outcomes)

    @property
    def kept_prealign_fraction(self) -> float:
        return sum(o.kept_prealign for o in self.outcomes) / len(self.outcomes)


def bench_spec(kind: str, seed: int, size: int) -> SynthSpec:
    """Sweep case: rigid cases span the full rotation and translation range, deformable ones an 8 px sinusoid."""
    match kind:
        case "rigid":
            return SynthSpec(seed=seed, width=size, height=size, warp_kind="rigid", warp_magnitude=float(size))
        case "deformable":
            return SynthSpec(seed=seed, width=size, height=size, warp_kind="deformable", warp_magnitude=8.0)
        case _:
            raise ArgumentError(f"bench kind must be one of {BENCH_KINDS}, got '{kind}'")


def bench_config(kind: str, cfg: RegConfig) -> RegConfig:
    """Rigid sweeps stop after the affine stage; deformable sweeps select alpha from three values."""
    if kind == "rigid":
        return replace(cfg, deformable="none")
    if cfg.alpha_sweep:
        return cfg
    return replace(cfg, deformable="lbfgs", alpha_sweep=(cfg.alpha / 10, cfg.alpha, cfg.alpha * 10))


def _non_increasing(trace: list[float]) -> bool:
    steps = np.diff(trace)
    return bool(np.all(steps <= TRACE_SLACK * np.maximum(1.0, np.abs(trace[:-1]))))


def bench_case(kind: str, seed: int, size: int, cfg: RegConfig) -> BenchOutcome:
    case = make_case(bench_spec(kind, seed, size))
    result = register_pair(case.fixed, case.moving, bench_config(kind, cfg))

    sources = np.array([r.src for r in case.truth.records])

    def mean_error(points: np.ndarray) -> float:
        return float(np.mean(np.linalg.norm(points - case.truth.true_points, axis=1)))

    before = mean_error(sources)
    after = mean_error(map_landmarks(result.transform, sources)[0])
    prealigned = before
    if result.prealign_transform is not None:
        prealigned = mean_error(map_landmarks(result.prealign_transform, sources)[0])
    monotone = all(
        _non_increasing(trace) for name, trace in result.objective_trace.items() if name.startswith("deformable")
    )
    outcome = BenchOutcome(seed, before, prealigned, after, monotone, result.flags.failed, sum(result.timings.values()))
    _log.info(
        "%s seed %d: %.3f px -> %.3f px after prealign -> %.3f px (%.2f%%) in %.2f s",
        kind,
        seed,
        before,
        prealigned,
        after,
        outcome.reduction_pct,
        outcome.seconds,
    )
    return outcome


def _bench_job(args: tuple[str, int, int, RegConfig]) -> BenchOutcome:
    return bench_case(*args)


def run_bench(
    kind: str, seeds: int, cfg: RegConfig, first_seed: int = 0, size: int = 512, threads: int | None = None
) -> BenchReport:
    """Registers `seeds` synthetic cases (seeds first_seed, first_seed + 1, ...) and scores each against truth."""
    if kind not in BENCH_KINDS:
        raise ArgumentError(f"bench kind must be one of {BENCH_KINDS}, got '{kind}'")
    if seeds < 1:
        raise ArgumentError(f"seeds must be >= 1, got {seeds}")
    jobs = [(kind, first_seed + k, size, cfg) for k in range(seeds)]
    workers = min(threads or os.cpu_count() or 1, len(jobs))
    _log.info("Running %d %s case(s) with %d worker(s)", len(jobs), kind, workers)
    if workers == 1:
        outcomes = [_bench_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_bench_job, jobs))
    return BenchReport(kind, tuple(outcomes))


def format_bench(report: BenchReport) -> str:
    lines = ["seed,before_px,prealign_px,after_px,reduction_pct,monotone,failed,kept_prealign,recovered"]
    for o in report.outcomes:
        values = (o.before_px, o.prealign_px, o.after_px, o.reduction_pct)
        flags = (o.monotone, o.failed, o.kept_prealign, report.recovered(o))
        lines.append(",".join([str(o.seed), *map(format_float, values), *(str(int(f)) for f in flags)]))
    recovered = sum(report.recovered(o) for o in report.outcomes)
    lines.append(f"# {report.kind}: {recovered}/{len(report.outcomes)} recovered ({100 * report.fraction:.1f}%)")
    kept = sum(o.kept_prealign for o in report.outcomes)
    share = 100 * report.kept_prealign_fraction
    lines.append(f"# {report.kind}: {kept}/{len(report.outcomes)} no worse than prealign ({share:.1f}%)")
    return "\n".join(lines) + "\n"

# src/stainreg/selftest.py
"""
Built-in verification suites.

Each suite runs a list of named checks against independently coded oracles;
`run_selftest` collects their outcomes and `require_passed` turns any failure
into a SelfTestFailure naming the broken invariant.
"""

import itertools
import logging
import math
import statistics
import tempfile
import time
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from stainreg.errors import SelfTestFailure
from stainreg.evalbench.landmarks import LandmarkRecord, PairDims, SubmissionRecord, dba, tre
from stainreg.evalbench.scoring import EvalConfig, aggregate, bootstrap_ci, evaluate_submission, percentile, score_pairs
from stainreg.evalbench.stats import bh_adjust, mann_whitney_u, spearman, wilcoxon_signed_rank
from stainreg.raster.image import Image
from stainreg.register.pipeline import register_pair
from stainreg.register.settings import RegConfig
from stainreg.similarity.measures import SimilarityConfig
from stainreg.similarity.ngf import NGFObjective
from stainreg.similarity.regularizers import curv, diffusive
from stainreg.synthgen.benchmark import BUNDLE_FILES, make_benchmark, make_case, midpoint_submission
from stainreg.synthgen.prng import prng_stream
from stainreg.synthgen.settings import SynthSpec
from stainreg.synthgen.warps import gen_warp
from stainreg.transform.geometry import (
    AffineTransform,
    CompositeTransform,
    DisplacementGrid,
    invert_points,
    warp_image,
)
from stainreg.transform.io import format_transform

_log = logging.getLogger(__name__)

FD_STEP = 1e-4
GRADIENT_RTOL = 1e-4
ORACLE_RTOL = 1e-10
INSTANCES = 10


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    checks: list[CheckOutcome] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(CheckOutcome(name, bool(passed), detail))
        if not passed:
            _log.warning("Self-test %s/%s failed: %s", self.suite, name, detail)


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    smooth = ndimage.gaussian_filter(rng.random((size, size)), 2.0)
    smooth -= smooth.min()
    return smooth / smooth.max()


def _central_difference(func: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(x)
    for k in range(len(x)):
        up, down = x.copy(), x.copy()
        up[k] += FD_STEP
        down[k] -= FD_STEP
        grad[k] = (func(up) - func(down)) / (2 * FD_STEP)
    return grad


def _relative_error(numeric: np.ndarray, analytic: np.ndarray) -> float:
    return float(np.linalg.norm(numeric - analytic) / max(np.linalg.norm(analytic), 1e-300))


# --- Gradient Suite ---


def _curv_oracle(grid: DisplacementGrid) -> float:
    total = 0.0
    for u in (grid.u1, grid.u2):
        gh, gw = u.shape
        for j in range(gh):
            for i in range(gw):
                lap = 0.0
                for dj, di in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    lap += u[min(max(j + dj, 0), gh - 1), min(max(i + di, 0), gw - 1)] - u[j, i]
                total += (lap / grid.h**2) ** 2
    return grid.h**2 / 2 * total


def _diffusive_oracle(grid: DisplacementGrid) -> float:
    total = 0.0
    for u in (grid.u1, grid.u2):
        gh, gw = u.shape
        for j in range(gh):
            for i in range(gw):
                i0, i1 = (i, i + 1) if i < gw - 1 else (i - 1, i)
                j0, j1 = (j, j + 1) if j < gh - 1 else (j - 1, j)
                total += ((u[j, i1] - u[j, i0]) / grid.h) ** 2 + ((u[j1, i] - u[j0, i]) / grid.h) ** 2
    return grid.h**2 / 2 * total


def gradient_suite(report: SuiteReport, seed: int) -> None:
    rng = np.random.default_rng(seed)
    cfg = SimilarityConfig()
    worst_affine = worst_grid = 0.0
    for _ in range(INSTANCES):
        objective = NGFObjective(Image(_texture(rng, 24)), Image(_texture(rng, 32)), cfg)
        params = np.array([1.0, 0.0, 0.0, 1.0, 4.0, 4.0]) + rng.uniform(-0.02, 0.02, 6) * [1, 1, 1, 1, 50, 50]
        affine = AffineTransform.from_params(params)
        analytic = objective.affine_gradient(objective.evaluate(affine))
        numeric = _central_difference(lambda p: objective.evaluate(AffineTransform.from_params(p)).value, params)
        worst_affine = max(worst_affine, _relative_error(numeric, analytic))

        grid = DisplacementGrid(rng.uniform(-0.5, 0.5, (6, 6)), rng.uniform(-0.5, 0.5, (6, 6)), 5.0)
        transform = CompositeTransform(affine, grid)
        analytic = objective.grid_gradient(objective.evaluate(transform), grid)
        numeric = _central_difference(
            lambda u: objective.evaluate(transform.with_deform(grid.with_flat(u))).value, grid.flat()
        )
        worst_grid = max(worst_grid, _relative_error(numeric, analytic))
    report.check("ngf_affine_gradient", worst_affine < GRADIENT_RTOL, f"worst relative error {worst_affine:.2e}")
    report.check("ngf_grid_gradient", worst_grid < GRADIENT_RTOL, f"worst relative error {worst_grid:.2e}")

    worst_curv = worst_diffusive = worst_curv_grad = 0.0
    for _ in range(INSTANCES):
        grid = DisplacementGrid(rng.normal(size=(5, 6)), rng.normal(size=(5, 6)), float(rng.uniform(1.0, 8.0)))
        worst_curv = max(worst_curv, abs(curv(grid).value / _curv_oracle(grid) - 1.0))
        worst_diffusive = max(worst_diffusive, abs(diffusive(grid).value / _diffusive_oracle(grid) - 1.0))
        numeric = _central_difference(lambda u: curv(grid.with_flat(u)).value, grid.flat())
        worst_curv_grad = max(worst_curv_grad, _relative_error(numeric, curv(grid).gradient))
    report.check("curv_value", worst_curv < ORACLE_RTOL, f"worst relative error {worst_curv:.2e}")
    report.check("diffusive_value", worst_diffusive < ORACLE_RTOL, f"worst relative error {worst_diffusive:.2e}")
    report.check("curv_gradient", worst_curv_grad < GRADIENT_RTOL, f"worst relative error {worst_curv_grad:.2e}")


# --- Oracle Suite ---


def _brute_percentile(values: list[float], p: float) -> float:
    ordered = sorted(values)
    rank = p / 100 * (len(ordered) - 1)
    low = math.floor(rank)
    high = min(low + 1, len(ordered) - 1)
    return ordered[low] + (rank - low) * (ordered[high] - ordered[low])


def _brute_median90(truth: list[LandmarkRecord], submission: list[SubmissionRecord], size: int) -> float:
    """Exclusion, clamping, per-pair 90th percentile and the median across pairs, with no shared code."""
    submitted = {(s.pair_id, s.point_id): s for s in submission}
    by_pair: dict[str, list[float]] = {}
    for r in truth:
        if math.hypot(r.tgt1_x - r.tgt2_x, r.tgt1_y - r.tgt2_y) * r.mpp > 115.0:
            continue
        row = submitted.get((r.pair_id, r.point_id))
        if row is None or row.reg_x is None or row.reg_y is None:
            x, y = min(max(r.src_x, 0.0), size - 1.0), min(max(r.src_y, 0.0), size - 1.0)
        else:
            x, y = row.reg_x, row.reg_y
        error = (math.hypot(x - r.tgt1_x, y - r.tgt1_y) + math.hypot(x - r.tgt2_x, y - r.tgt2_y)) / 2 * r.mpp
        by_pair.setdefault(r.pair_id, []).append(error)
    return statistics.median(_brute_percentile(e, 90.0) for e in by_pair.values() if len(e) >= 10)


def _scoring_fixture(rng: np.random.Generator) -> tuple[list[LandmarkRecord], list[SubmissionRecord]]:
    truth, submission = [], []
    for pair, count in (("a", 14), ("b", 12), ("c", 11), ("short", 9)):
        for k in range(count):
            tx, ty = rng.uniform(10, 500, 2)
            spread = 130.0 if k == 0 else float(rng.uniform(0, 40))
            src = (650.0, -20.0) if k == 1 else (tx + 30, ty)
            truth.append(LandmarkRecord(pair, f"p{k}", *src, tx, ty, tx + spread, ty, 1.0))
            if k % 5 == 1:
                submission.append(SubmissionRecord(pair, f"p{k}"))
            elif k % 5 != 2:
                submission.append(SubmissionRecord(pair, f"p{k}", tx + rng.normal(0, 15), ty + rng.normal(0, 15)))
    return truth, submission


def _wilcoxon_enumeration(diff: list[float]) -> float:
    nonzero = [d for d in diff if d != 0]
    ranks = _average_ranks([abs(d) for d in nonzero])
    observed = sum(r for r, d in zip(ranks, nonzero, strict=True) if d > 0)
    null = [
        sum(r for r, bit in zip(ranks, signs, strict=True) if bit)
        for signs in itertools.product((0, 1), repeat=len(ranks))
    ]
    lower = sum(v <= observed + 1e-9 for v in null) / len(null)
    upper = sum(v >= observed - 1e-9 for v in null) / len(null)
    return min(1.0, 2 * min(lower, upper))


def _average_ranks(values: list[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda k: values[k])
    ranks = [0.0] * len(values)
    start = 0
    while start < len(order):
        stop = start
        while stop + 1 < len(order) and values[order[stop + 1]] == values[order[start]]:
            stop += 1
        for k in range(start, stop + 1):
            ranks[order[k]] = (start + stop) / 2 + 1
        start = stop + 1
    return ranks


def _step_up(p: list[float]) -> list[float]:
    m = len(p)
    order = sorted(range(m), key=lambda k: p[k])
    adjusted = [0.0] * m
    running = 1.0
    for position in range(m - 1, -1, -1):
        k = order[position]
        running = min(running, p[k] * m / (position + 1))
        adjusted[k] = running
    return adjusted


def _pearson(x: list[float], y: list[float]) -> float:
    mx, my = sum(x) / len(x), sum(y) / len(y)
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y, strict=True))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def oracle_suite(report: SuiteReport, seed: int) -> None:
    rng = np.random.default_rng(seed)
    p90 = percentile(list(range(1, 11)), 90.0)
    report.check("percentile_fixture", abs(p90 - 9.1) < 1e-12, f"p90 of 1..10 gave {p90}, expected 9.1")

    truth, submission = _scoring_fixture(rng)
    dims = {pair: PairDims(600, 600) for pair in ("a", "b", "c", "short")}
    scores, excluded = score_pairs(truth, submission, dims, EvalConfig())
    produced = aggregate(scores)["median90_um"].value
    expected = _brute_median90(truth, submission, 600)
    report.check(
        "scorer_median90",
        produced is not None and abs(produced - expected) <= 1e-12 * max(1.0, abs(expected)) and excluded == ["short"],
        f"scorer {produced} vs brute force {expected}, excluded {excluded}",
    )

    wilcoxon_ok = True
    for n in (3, 5, 8, 12):
        a, b = rng.normal(size=n), rng.normal(size=n)
        got, want = wilcoxon_signed_rank(a, b), _wilcoxon_enumeration(list(a - b))
        wilcoxon_ok &= abs(got - want) < 1e-12
    report.check("wilcoxon_exact", wilcoxon_ok, "exact p must equal full sign enumeration")
    mw = mann_whitney_u([1, 2, 3], [4, 5, 6])
    report.check("mann_whitney_exact", abs(mw - 0.1) < 1e-12, f"{{1,2,3}} vs {{4,5,6}} gave {mw}")

    bh_worst = 0.0
    for _ in range(20):
        p = list(rng.uniform(0, 1, int(rng.integers(1, 15))))
        bh_worst = max(bh_worst, max(abs(a - b) for a, b in zip(bh_adjust(p), _step_up(p), strict=True)))
    report.check("bh_step_up", bh_worst < 1e-12, f"worst deviation {bh_worst:.2e}")

    x = [1.0, 2.0, 2.0, 3.0, 5.0, 5.0, 8.0]
    y = [2.0, 1.0, 4.0, 4.0, 6.0, 9.0, 7.0]
    rho = spearman(x, y)
    want = _pearson(_average_ranks(x), _average_ranks(y))
    report.check("spearman_ties", abs(rho.value - want) < 1e-12, f"{rho.value} vs rank-then-Pearson {want}")

    case = make_case(SynthSpec(seed=seed, width=96, height=96, n_landmarks=20))
    records = case.truth.records
    result = evaluate_submission(records, midpoint_submission(records), case.dims, EvalConfig(n_boot=20))
    kept = [r for r in records if dba(r) <= 115.0]
    half = sum(dba(r) for r in kept) / len(kept) / 2
    mean_all = result.metrics["mean_all_um"].value or math.nan
    report.check("midpoint_half_dba", abs(mean_all - half) < 1e-9, f"mean {mean_all} vs mean(dba)/2 {half}")
    worst_gap = segment_gap = 0.0
    for _ in range(100):
        t1, t2 = rng.uniform(0, 100, 2), rng.uniform(0, 100, 2)
        record = LandmarkRecord("check", "p", 0.0, 0.0, *t1, *t2, float(rng.uniform(0.2, 5.0)))
        half = dba(record) / 2
        worst_gap = min(worst_gap, min(tre(tuple(p), record) - half for p in rng.uniform(-50, 150, (100, 2))))
        on_segment = t1 + rng.uniform() * (t2 - t1)
        segment_gap = max(segment_gap, abs(tre(tuple(on_segment), record) - half))
    report.check(
        "tre_lower_bound",
        worst_gap >= -1e-9 and segment_gap < 1e-9,
        f"min tre - dba/2 {worst_gap:.2e}, largest gap on the annotator segment {segment_gap:.2e}",
    )

    warp = gen_warp(SynthSpec(seed=seed, width=96, height=96, warp_kind="deformable"))
    points = rng.uniform(10, 86, (200, 2))
    recovered, confident = invert_points(warp, warp.apply(points))
    round_trip = float(np.abs(recovered - points).max())
    report.check("inversion_round_trip", confident.all() and round_trip < 1e-3, f"max error {round_trip:.2e} px")

    image = case.fixed
    same = warp_image(image.width, image.height, image.mpp, CompositeTransform(), image)
    report.check("identity_warp", np.array_equal(same.data, image.data), "warp_image(identity) must copy the input")


# --- Determinism Suite ---


def determinism_suite(report: SuiteReport, seed: int) -> None:
    a, b = prng_stream(seed, 1), prng_stream(seed, 1)
    report.check("prng_streams", a.uniforms(1000).tolist() == b.uniforms(1000).tolist(), "streams must repeat")

    spec = SynthSpec(seed=seed, width=96, height=96, n_landmarks=15, warp_kind="affine")
    with tempfile.TemporaryDirectory(prefix="stainreg-selftest-") as tmp:
        first = make_benchmark(spec, Path(tmp) / "a")
        second = make_benchmark(spec, Path(tmp) / "b")
        differing = [name for name in BUNDLE_FILES if (first / name).read_bytes() != (second / name).read_bytes()]
    report.check("bundle_bytes", not differing, f"differing files: {differing}")

    sample = np.random.default_rng(seed).normal(size=40)
    intervals = [bootstrap_ci(sample, lambda s: np.median(s, axis=-1), 500, seed) for _ in range(2)]
    report.check("bootstrap_ci", intervals[0] == intervals[1], f"intervals {intervals[0]} and {intervals[1]}")

    case = make_case(replace(spec, stain=False))
    cfg = RegConfig(max_dim=48, n_rotations=8, ara_max_dim=48, affine_levels=1, deform_levels=1, max_iter_deform=5)
    runs = [format_transform(register_pair(case.fixed, case.moving, cfg).transform) for _ in range(2)]
    report.check("register_transform", runs[0] == runs[1], "registration reruns must give the same transform file")


SUITES: dict[str, Callable[[SuiteReport, int], None]] = {
    "gradient": gradient_suite,
    "oracle": oracle_suite,
    "determinism": determinism_suite,
}


def run_selftest(names: list[str] | None = None, seed: int = 0) -> list[SuiteReport]:
    """Runs the named suites (all by default); a suite that raises records the error as a failed check."""
    reports = []
    for name in names or list(SUITES):
        report = SuiteReport(name)
        start = time.perf_counter()
        try:
            SUITES[name](report, seed)
        except Exception as e:
            _log.exception("Self-test suite '%s' raised", name)
            report.check("completed", False, f"{type(e).__name__}: {e}")
        report.seconds = time.perf_counter() - start
        _log.info("Suite '%s': %s in %.1f s", name, "passed" if report.passed else "FAILED", report.seconds)
        reports.append(report)
    return reports


def format_report(reports: list[SuiteReport]) -> str:
    rows = [("suite", "check", "result", "detail")]
    for report in reports:
        rows += [(report.suite, c.name, "ok" if c.passed else "FAIL", c.detail) for c in report.checks]
    widths = [max(len(row[k]) for row in rows) for k in range(3)]
    lines = []
    for row in rows:
        cells = [cell.ljust(width) for cell, width in zip(row[:3], widths, strict=True)]
        lines.append("  ".join([*cells, row[3]]).rstrip())
    return "\n".join(lines) + "\n"


def require_passed(reports: list[SuiteReport]) -> None:
    for report in reports:
        for check in report.checks:
            if not check.passed:
                raise SelfTestFailure(f"{report.suite}/{check.name}", check.detail)

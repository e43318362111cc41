# src/stainreg/synthgen/benchmark.py
import logging
import os
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from stainreg.data.atomic import atomic_write_text
from stainreg.errors import ArgumentError
from stainreg.evalbench.landmarks import LandmarkRecord, PairDims, SubmissionRecord, write_dims, write_truth
from stainreg.raster.image import Image, Mask, write_pnm
from stainreg.synthgen.landmarks import GroundTruth, gen_landmarks
from stainreg.synthgen.settings import SynthSpec
from stainreg.synthgen.tissue import gen_tissue_image, simulate_stain
from stainreg.synthgen.warps import gen_warp
from stainreg.transform.geometry import CompositeTransform, invert_points, map_landmarks, pixel_centers, resample
from stainreg.transform.io import write_transform
from stainreg.util import format_setting

_log = logging.getLogger(__name__)

BUNDLE_FILES = ("fixed.pnm", "moving.pnm", "truth.csv", "dims.csv", "truth_transform.txt", "manifest.txt")


@dataclass(frozen=True, eq=False)
class SynthCase:
    spec: SynthSpec
    fixed: Image
    moving: Image
    mask: Mask
    truth: GroundTruth

    @property
    def dims(self) -> dict[str, PairDims]:
        return {self.spec.pair_id: PairDims(self.moving.width, self.moving.height)}


def synthesize_moving(fixed: Image, transform: CompositeTransform) -> Image:
    """
    The moving image seen through `transform`: moving pixel p shows the fixed
    content at the reference point mapped onto p. Uncovered pixels are white.
    """
    width, height = fixed.width, fixed.height
    sources, confident = invert_points(transform, pixel_centers(width, height), search_shape=(width, height))
    if not confident.all():
        _log.warning("%d moving pixel(s) fell back to the dense inverse search", int((~confident).sum()))
    white = 255.0 if fixed.data.dtype == np.uint8 else 1.0
    return resample(fixed, sources, width, height, fixed.mpp, cval=white)


def oracle_submission(records: Sequence[LandmarkRecord], transform: CompositeTransform) -> list[SubmissionRecord]:
    """Source landmarks carried back through the true transform; lands on the true points."""
    mapped, _ = map_landmarks(transform, np.array([r.src for r in records]))
    return [
        SubmissionRecord(r.pair_id, r.point_id, float(x), float(y)) for r, (x, y) in zip(records, mapped, strict=True)
    ]


def midpoint_submission(records: Sequence[LandmarkRecord]) -> list[SubmissionRecord]:
    """The midpoint of both annotators, which scores exactly half the annotator distance."""
    return [
        SubmissionRecord(r.pair_id, r.point_id, (r.tgt1_x + r.tgt2_x) / 2.0, (r.tgt1_y + r.tgt2_y) / 2.0)
        for r in records
    ]


def make_case(spec: SynthSpec) -> SynthCase:
    """Generates one case in memory."""
    fixed, mask = gen_tissue_image(spec)
    transform = gen_warp(spec)
    moving = synthesize_moving(fixed, transform)
    if spec.stain:
        moving = simulate_stain(moving, spec.seed)
    truth = gen_landmarks(mask, transform, spec)
    return SynthCase(spec, fixed, moving, mask, truth)


def format_manifest(spec: SynthSpec, truth: GroundTruth) -> str:
    lines = [f"{f.name}={format_setting(getattr(spec, f.name))}" for f in fields(spec)]
    lines.append(f"pair_id={spec.pair_id}")
    lines.append(f"landmark_count={truth.count}")
    lines.append(f"median_dba_um={format_setting(truth.median_dba_um)}")
    return "\n".join(lines) + "\n"


def make_benchmark(spec: SynthSpec, out_dir: str | os.PathLike) -> Path:
    """
    Writes the bundle of one case to `<out_dir>/case_<seed>/` and returns that
    directory. IO failures propagate.
    """
    case = make_case(spec)
    bundle = Path(out_dir) / spec.pair_id
    bundle.mkdir(parents=True, exist_ok=True)
    write_pnm(case.fixed, bundle / "fixed.pnm")
    write_pnm(case.moving, bundle / "moving.pnm")
    write_truth(case.truth.records, bundle / "truth.csv")
    write_dims(case.dims, bundle / "dims.csv")
    write_transform(case.truth.transform, bundle / "truth_transform.txt")
    atomic_write_text(bundle / "manifest.txt", format_manifest(spec, case.truth))
    _log.info("Wrote %s (%s warp, median DBA %.1f um)", bundle, spec.warp_kind, case.truth.median_dba_um)
    return bundle


def _make_benchmark_job(args: tuple[SynthSpec, str]) -> Path:
    return make_benchmark(*args)


def make_benchmarks(
    spec: SynthSpec, out_dir: str | os.PathLike, cases: int, threads: int | None = None
) -> list[Path]:
    """
    `cases` bundles with seeds spec.seed, spec.seed + 1, ... generated in a
    process pool. Each case depends on its own seed only, so the files do not
    depend on the worker count.
    """
    if cases < 1:
        raise ArgumentError(f"cases must be >= 1, got {cases}")
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    jobs = [(replace(spec, seed=spec.seed + k), os.fspath(out_dir)) for k in range(cases)]
    workers = min(threads or os.cpu_count() or 1, len(jobs))
    _log.info("Generating %d case(s) with %d worker(s)", len(jobs), workers)
    if workers == 1:
        return [_make_benchmark_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_make_benchmark_job, jobs))

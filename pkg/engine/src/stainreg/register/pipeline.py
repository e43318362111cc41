# src/stainreg/register/pipeline.py
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from stainreg.data.atomic import atomic_write_text
from stainreg.errors import DegenerateInputError, EmptyMaskError, EmptyMassError, StainRegError
from stainreg.evalbench.landmarks import SubmissionRecord, format_csv, read_truth, write_submission
from stainreg.raster.image import Image, Mask, read_pnm
from stainreg.raster.masks import kmeans_mask, select_tissue_pair, threshold_mask
from stainreg.raster.preprocess import (
    crop_border,
    downsample,
    equalize_clahe,
    gaussian_smooth,
    invert,
    remove_dark_border,
    to_gray_inverted,
)
from stainreg.register.affine import affine_register_gn
from stainreg.register.deformable import deformable_register_lbfgs, select_alpha
from stainreg.register.prealign import ara_prealign, template_match_rotational
from stainreg.register.rbf import rbf_deformable
from stainreg.register.results import PrealignResult, RegFlags, RegResult, StageResult
from stainreg.register.settings import RegConfig
from stainreg.similarity.ngf import NGFObjective
from stainreg.transform.geometry import CompositeTransform, map_landmarks, rescale_transform, shift_frames
from stainreg.transform.io import write_transform
from stainreg.util import format_float, pair_seed, timed

_log = logging.getLogger(__name__)

STAGES = ("preprocess", "prealign", "affine", "deformable")
DIAGNOSTICS_HEADER = (
    "pair_id",
    *(f"t_{stage}" for stage in STAGES),
    "converged",
    "max_iter_hit",
    "empty_mask",
    "low_overlap",
    "damped",
    "rbf_fallback",
    "failed",
    "final_objective",
)


@dataclass(frozen=True, eq=False)
class PreparedPair:
    """Working-resolution images (gray inverted, enhanced) with their tissue masks and frame bookkeeping."""

    fixed: Image
    moving: Image
    fixed_mask: Mask
    moving_mask: Mask
    factor: int
    fixed_offset: tuple[int, int]
    moving_offset: tuple[int, int]

    @property
    def masks(self) -> tuple[Mask, Mask]:
        return self.fixed_mask, self.moving_mask


def working_factor(fixed: Image, moving: Image, cfg: RegConfig) -> int:
    """Common downsampling factor of both images: `downsample` when set, else the one fitting `max_dim`."""
    if cfg.downsample:
        return cfg.downsample
    return max(1, math.ceil(max(fixed.width, fixed.height, moving.width, moving.height) / cfg.max_dim))


def _strip_borders(inverted: Image, cfg: RegConfig) -> tuple[Image, tuple[int, int]]:
    ox = oy = 0
    if cfg.remove_border:
        gray, (ox, oy) = remove_dark_border(invert(inverted))
        inverted = invert(gray)
    if cfg.crop_frac > 0:
        inverted, (dx, dy) = crop_border(inverted, cfg.crop_frac)
        ox, oy = ox + dx, oy + dy
    return inverted, (ox, oy)


def tissue_mask(gray: Image, thresholds: tuple[int, int], cfg: RegConfig) -> Mask:
    """Foreground of an un-inverted gray image; k-means falls back to the fixed thresholds on flat images."""
    match cfg.mask_mode:
        case "kmeans":
            try:
                return kmeans_mask(gray)
            except DegenerateInputError as e:
                _log.warning("k-means mask unavailable (%s); using thresholds %s", e, thresholds)
                return threshold_mask(gray, *thresholds)
        case _:
            return threshold_mask(gray, *thresholds)


def _enhance(image: Image, cfg: RegConfig) -> Image:
    if cfg.clahe:
        image = equalize_clahe(image, cfg.clahe_tiles, cfg.clahe_clip)
    return gaussian_smooth(image, cfg.smooth_sigma_um)


@timed("preprocess")
def prepare_pair(fixed: Image, moving: Image, cfg: RegConfig) -> PreparedPair:
    fixed_inv, fixed_offset = _strip_borders(to_gray_inverted(fixed), cfg)
    moving_inv, moving_offset = _strip_borders(to_gray_inverted(moving), cfg)
    factor = working_factor(fixed_inv, moving_inv, cfg)
    fixed_small = _enhance(downsample(fixed_inv, factor=factor), cfg)
    moving_small = _enhance(downsample(moving_inv, factor=factor), cfg)

    fixed_mask, moving_mask = select_tissue_pair(
        tissue_mask(invert(fixed_small), cfg.fixed_thresholds, cfg),
        tissue_mask(invert(moving_small), cfg.moving_thresholds, cfg),
    )
    _log.info(
        "Working resolution 1/%d: fixed %dx%d (%d tissue px), moving %dx%d (%d tissue px)",
        factor,
        fixed_small.width,
        fixed_small.height,
        fixed_mask.count,
        moving_small.width,
        moving_small.height,
        moving_mask.count,
    )
    return PreparedPair(
        fixed_small,
        moving_small,
        fixed_mask,
        moving_mask,
        factor,
        fixed_offset,
        moving_offset,
    )


@timed("prealign")
def run_prealign(prepared: PreparedPair, cfg: RegConfig) -> PrealignResult:
    if cfg.prealign_mode == "ara":
        return ara_prealign(prepared.fixed, prepared.moving, prepared.masks, cfg)
    return template_match_rotational(prepared.fixed, prepared.moving, cfg, prepared.moving_mask)


def _stage_images(prepared: PreparedPair, cfg: RegConfig) -> tuple[Image, Image]:
    if cfg.masked_ngf:
        return prepared.fixed_mask.apply(prepared.fixed), prepared.moving_mask.apply(prepared.moving)
    return prepared.fixed, prepared.moving


@timed("affine")
def run_affine(prepared: PreparedPair, prealign: PrealignResult, cfg: RegConfig) -> StageResult:
    reference, moving = _stage_images(prepared, cfg)
    return affine_register_gn(reference, moving, prealign.affine, cfg)


@timed("deformable")
def run_deformable(
    prepared: PreparedPair, affine: StageResult, cfg: RegConfig, result: RegResult, seed: int = 0
) -> StageResult | None:
    """Runs the configured deformable stage; returns None when the affine result is final."""
    reference, moving = _stage_images(prepared, cfg)
    init = affine.transform.affine
    match cfg.deformable:
        case "lbfgs":
            if cfg.alpha_sweep:
                result.alpha, stage = select_alpha(reference, moving, init, cfg, cfg.alpha_sweep)
                return stage
            result.alpha = cfg.alpha
            return deformable_register_lbfgs(reference, moving, init, cfg)
        case "rbf":
            rbf = rbf_deformable(reference, moving, init, prepared.masks, cfg, seed)
            result.flags.rbf_fallback = rbf.fallback
            state = NGFObjective(reference, moving, cfg.similarity()).evaluate(rbf.transform)
            return StageResult(rbf.transform, final_value=state.value, overlap=state.overlap, converged=True)
        case _:
            return None


def _to_full_resolution(transform: CompositeTransform, prepared: PreparedPair) -> CompositeTransform:
    full = rescale_transform(transform, prepared.factor, 1.0) if prepared.factor > 1 else transform
    return shift_frames(full, prepared.fixed_offset, prepared.moving_offset)


def _failure(result: RegResult, error: StainRegError) -> RegResult:
    _log.log(error.log_level, "Registration failed, emitting identity transform: %s", error)
    flags = RegFlags(
        failed=True,
        empty_mask=isinstance(error, (EmptyMaskError, EmptyMassError)),
    )
    return replace(result, transform=CompositeTransform(), flags=flags, final_objective=None, error=str(error))


def register_pair(fixed: Image, moving: Image, cfg: RegConfig, pair_id: str = "") -> RegResult:
    """
    Full pipeline from two stained images to a fixed -> moving transform in full-resolution pixels.

    Random draws (the RANSAC screen of the RBF stage) come from a stream seeded by
    (cfg.seed, pair_id), so batch results do not depend on scheduling order.

    Errors raised by any stage become a failure-flagged identity result, so a
    batch never stops on one bad pair.
    """
    result = RegResult()
    timings = result.timings
    try:
        prepared = prepare_pair(fixed, moving, cfg, timings=timings)
        prealign = run_prealign(prepared, cfg, timings=timings)
        result.prealign_scores = list(prealign.scores)
        result.prealign_transform = _to_full_resolution(CompositeTransform(prealign.affine), prepared)

        affine = run_affine(prepared, prealign, cfg, timings=timings)
        result.objective_trace.update(affine.traces)
        deformable = run_deformable(prepared, affine, cfg, result, pair_seed(cfg.seed, pair_id), timings=timings)
        if deformable is not None:
            result.objective_trace.update(deformable.traces)
        final = affine if deformable is None else deformable
    except StainRegError as e:
        return _failure(result, e)

    result.transform = _to_full_resolution(final.transform, prepared)
    result.final_objective = final.final_value
    flags = result.flags
    flags.converged = affine.converged and final.converged
    flags.max_iter_hit = affine.max_iter_hit or final.max_iter_hit
    flags.damped = affine.damped or final.damped
    flags.low_overlap = final.overlap < cfg.low_overlap_frac
    _log.info(
        "Registration done: NGF %.6g, flags %s, %.2f s total",
        final.final_value,
        flags,
        sum(timings.values()),
    )
    return result


# --- Diagnostics ---


def diagnostics_row(pair_id: str, result: RegResult) -> list[str]:
    flags = result.flags
    row = [pair_id]
    row += [format_float(result.timings.get(stage, 0.0)) for stage in STAGES]
    row += [
        str(int(value))
        for value in (
            flags.converged,
            flags.max_iter_hit,
            flags.empty_mask,
            flags.low_overlap,
            flags.damped,
            flags.rbf_fallback,
            flags.failed,
        )
    ]
    row.append("" if result.final_objective is None else format_float(result.final_objective))
    return row


def format_diagnostics(rows: list[list[str]]) -> str:
    return format_csv(DIAGNOSTICS_HEADER, rows)


# --- Batch ---


@dataclass(frozen=True)
class BatchOutcome:
    pair_id: str
    result: RegResult
    transform_path: str


def find_bundles(bundle_dir: str | os.PathLike) -> list[Path]:
    """Case directories (`case_*`) under `bundle_dir`, sorted by name."""
    root = Path(bundle_dir)
    return sorted(path for path in root.glob("case_*") if path.is_dir())


def register_bundle(bundle: Path, out_dir: Path, cfg: RegConfig) -> BatchOutcome:
    """Registers one case bundle and writes its transform to `<out_dir>/<case>/transform.txt`."""
    fixed = read_pnm(bundle / "fixed.pnm")
    moving = read_pnm(bundle / "moving.pnm")
    _log.info("Registering %s", bundle.name)
    result = register_pair(fixed, moving, cfg, bundle.name)
    target = out_dir / bundle.name / "transform.txt"
    target.parent.mkdir(parents=True, exist_ok=True)
    write_transform(result.transform, target)
    return BatchOutcome(bundle.name, result, str(target))


def _register_bundle_job(args: tuple[Path, Path, RegConfig]) -> BatchOutcome:
    return register_bundle(*args)


def register_batch(
    bundle_dir: str | os.PathLike, out_dir: str | os.PathLike, cfg: RegConfig, threads: int | None = None
) -> list[BatchOutcome]:
    """
    Registers every case bundle under `bundle_dir` in a process pool.

    Outcomes come back in bundle-name order whatever the worker count; each job
    owns its inputs and output directory.
    """
    bundles = find_bundles(bundle_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(bundle, out, cfg) for bundle in bundles]
    workers = threads or os.cpu_count() or 1
    _log.info("Registering %d bundles with %d worker(s)", len(jobs), workers)

    if workers == 1 or len(jobs) <= 1:
        outcomes = [_register_bundle_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_register_bundle_job, jobs))

    atomic_write_text(
        out / "diagnostics.csv", format_diagnostics([diagnostics_row(o.pair_id, o.result) for o in outcomes])
    )
    write_submission(batch_submission(outcomes, bundles), out / "submission.csv")
    failed = sum(o.result.flags.failed for o in outcomes)
    if failed:
        _log.warning("%d of %d registrations failed and were replaced by the identity", failed, len(outcomes))
    return outcomes


def batch_submission(outcomes: list[BatchOutcome], bundles: list[Path]) -> list[SubmissionRecord]:
    """Source landmarks of every bundle with a truth file, mapped into the fixed frame by its transform."""
    records: list[SubmissionRecord] = []
    for outcome, bundle in zip(outcomes, bundles, strict=True):
        truth_path = bundle / "truth.csv"
        if not truth_path.exists():
            _log.debug("No truth file in %s; nothing to map", bundle)
            continue
        truth = read_truth(truth_path)
        if not truth:
            continue
        mapped, confident = map_landmarks(outcome.result.transform, np.array([r.src for r in truth]))
        if not confident.all():
            _log.warning("%s: %d landmark inversion(s) did not converge", outcome.pair_id, int((~confident).sum()))
        records += [
            SubmissionRecord(r.pair_id, r.point_id, float(x), float(y))
            for r, (x, y) in zip(truth, mapped, strict=True)
        ]
    return records

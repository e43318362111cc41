# src/stainreg/synthgen/landmarks.py
import logging
from dataclasses import dataclass

import numpy as np

from stainreg.errors import GenerationError
from stainreg.evalbench.landmarks import LandmarkRecord, dba
from stainreg.raster.image import Mask
from stainreg.synthgen.prng import prng_stream
from stainreg.synthgen.settings import LANDMARK_STREAM, SynthSpec
from stainreg.transform.geometry import CompositeTransform

_log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """
    Landmarks of one case with the transform that produced them.

    `true_points` (reference frame) are what both annotators aimed at; every
    record's source is the true point carried through `transform`.
    """

    transform: CompositeTransform
    records: list[LandmarkRecord]
    true_points: np.ndarray

    @property
    def count(self) -> int:
        return len(self.records)

    @property
    def median_dba_um(self) -> float:
        return float(np.median([dba(r) for r in self.records]))


def gen_landmarks(mask: Mask, transform: CompositeTransform, spec: SynthSpec) -> GroundTruth:
    """
    Samples `spec.n_landmarks` distinct foreground pixels (jittered inside the
    pixel) as true points and perturbs each independently for two annotators
    with per-axis Gaussian noise of `annot_sigma_um`.
    """
    fy, fx = np.nonzero(mask.bits)
    n = spec.n_landmarks
    if fy.size < n:
        raise GenerationError(f"Mask has {fy.size} foreground pixel(s), fewer than the {n} landmarks requested")

    stream = prng_stream(spec.seed, LANDMARK_STREAM)
    picks = np.argsort(stream.uniforms(fy.size), kind="stable")[:n]
    jitter = stream.uniforms(2 * n).reshape(n, 2) - 0.5
    true_points = np.stack([fx[picks], fy[picks]], axis=1).astype(np.float64) + jitter
    sigma_px = spec.annot_sigma_um / spec.mpp
    targets = [true_points + sigma_px * stream.gaussians(2 * n).reshape(n, 2) for _ in range(2)]
    sources = transform.apply(true_points)

    records = [
        LandmarkRecord(
            spec.pair_id,
            f"lm{k:03d}",
            float(sources[k, 0]),
            float(sources[k, 1]),
            float(targets[0][k, 0]),
            float(targets[0][k, 1]),
            float(targets[1][k, 0]),
            float(targets[1][k, 1]),
            spec.mpp,
        )
        for k in range(n)
    ]
    truth = GroundTruth(transform, records, true_points)
    _log.debug("Case %s: %d landmarks, median DBA %.2f um", spec.pair_id, truth.count, truth.median_dba_um)
    return truth

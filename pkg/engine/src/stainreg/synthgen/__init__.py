from stainreg.synthgen.benchmark import (
    SynthCase,
    make_benchmark,
    make_benchmarks,
    make_case,
    midpoint_submission,
    oracle_submission,
    synthesize_moving,
)
from stainreg.synthgen.landmarks import GroundTruth, gen_landmarks
from stainreg.synthgen.prng import PrngStream, prng_stream
from stainreg.synthgen.settings import WARP_KINDS, SynthSpec
from stainreg.synthgen.tissue import gen_tissue_image, simulate_stain
from stainreg.synthgen.warps import gen_warp

__all__ = [
    "WARP_KINDS",
    "GroundTruth",
    "PrngStream",
    "SynthCase",
    "SynthSpec",
    "gen_landmarks",
    "gen_tissue_image",
    "gen_warp",
    "make_benchmark",
    "make_benchmarks",
    "make_case",
    "midpoint_submission",
    "oracle_submission",
    "prng_stream",
    "simulate_stain",
    "synthesize_moving",
]

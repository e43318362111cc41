# tests/test_bench.py
import math
from dataclasses import replace

import pytest
from stainreg.bench import (
    BenchOutcome,
    BenchReport,
    bench_case,
    bench_config,
    bench_spec,
    format_bench,
    run_bench,
)
from stainreg.errors import ArgumentError
from stainreg.register.settings import RegConfig

QUICK = RegConfig(
    max_dim=48,
    n_rotations=4,
    ara_max_dim=48,
    rigid_iters=3,
    affine_levels=1,
    deform_levels=1,
    max_iter_affine=5,
    max_iter_deform=5,
    grid_h=8.0,
)


def outcome(seed=0, before=10.0, after=0.2, monotone=True, failed=False, prealign=3.0) -> BenchOutcome:
    return BenchOutcome(seed, before, prealign, after, monotone, failed, 0.5)


# --- Criteria ---


def test_rigid_recovery_needs_ninety_five_percent_reduction():
    report = BenchReport("rigid", (outcome(after=0.4), outcome(after=0.6), outcome(after=0.1, failed=True)))

    assert [report.recovered(o) for o in report.outcomes] == [True, False, False]
    assert report.fraction == pytest.approx(1 / 3)


def test_deformable_recovery_needs_small_residual_and_monotone_traces():
    report = BenchReport("deformable", (outcome(after=1.49), outcome(after=1.5), outcome(after=0.1, monotone=False)))

    assert [report.recovered(o) for o in report.outcomes] == [True, False, False]


def test_final_error_is_compared_with_the_prealign_error():
    report = BenchReport(
        "rigid",
        (outcome(after=0.2, prealign=3.0), outcome(after=3.0, prealign=3.0), outcome(after=4.0), outcome(failed=True)),
    )

    assert [o.kept_prealign for o in report.outcomes] == [True, True, False, False]
    assert report.kept_prealign_fraction == pytest.approx(0.5)


def test_zero_displacement_counts_as_no_reduction():
    assert outcome(before=0.0, after=0.0).reduction_pct == 0.0


# --- Setup ---


def test_rigid_cases_span_the_full_translation_range():
    spec = bench_spec("rigid", 5, 512)

    assert spec.warp_kind == "rigid"
    assert spec.warp_magnitude >= spec.max_translation_frac * spec.width


def test_deformable_cases_use_an_eight_pixel_sinusoid():
    spec = bench_spec("deformable", 5, 512)

    assert (spec.warp_kind, spec.warp_magnitude) == ("deformable", 8.0)


def test_rigid_sweep_stops_after_the_affine_stage():
    assert bench_config("rigid", QUICK).deformable == "none"


def test_deformable_sweep_selects_alpha_from_three_values():
    assert bench_config("deformable", replace(QUICK, alpha=10.0)).alpha_sweep == (1.0, 10.0, 100.0)
    assert bench_config("deformable", replace(QUICK, alpha_sweep=(2.0, 4.0))).alpha_sweep == (2.0, 4.0)


@pytest.mark.parametrize("kind, seeds", [("local_bulge", 1), ("rigid", 0)])
def test_invalid_sweeps_are_argument_errors(kind, seeds):
    with pytest.raises(ArgumentError):
        run_bench(kind, seeds, QUICK)


# --- Runs ---


def test_bench_case_reduces_rigid_displacement():
    result = bench_case("rigid", 2, 96, QUICK)

    assert result.seed == 2
    assert result.before_px > 0
    assert result.after_px < result.before_px
    assert not result.failed
    assert math.isfinite(result.prealign_px)


def test_sweep_is_independent_of_worker_count():
    serial = run_bench("rigid", 2, QUICK, first_seed=1, size=96, threads=1)
    pooled = run_bench("rigid", 2, QUICK, first_seed=1, size=96, threads=2)

    assert [o.seed for o in serial.outcomes] == [1, 2]
    assert [(o.before_px, o.after_px) for o in serial.outcomes] == [(o.before_px, o.after_px) for o in pooled.outcomes]


def test_table_ends_with_the_recovered_fraction():
    text = format_bench(BenchReport("rigid", (outcome(0), outcome(1, after=5.0))))

    lines = text.splitlines()
    assert lines[0] == "seed,before_px,prealign_px,after_px,reduction_pct,monotone,failed,kept_prealign,recovered"
    assert lines[1].endswith(",1,0,1,1")
    assert lines[-2] == "# rigid: 1/2 recovered (50.0%)"
    assert lines[-1] == "# rigid: 1/2 no worse than prealign (50.0%)"

# tests/synthgen/test_prng.py
import numpy as np
import pytest
from scipy import stats
from stainreg.errors import ArgumentError
from stainreg.synthgen.prng import MASK64, MULTIPLIER, PrngStream, parallel_uniforms, prng_stream


def test_same_seed_and_stream_repeat_exactly():
    a = prng_stream(7, 3)
    b = prng_stream(7, 3)

    assert [a.next_u32() for _ in range(1000)] == [b.next_u32() for _ in range(1000)]


def test_different_streams_differ_early():
    first = [prng_stream(7, s).next_u32() for s in range(1, 5)]

    assert len(set(first)) == len(first)
    a, b = prng_stream(7, 1), prng_stream(7, 2)
    assert [a.next_u32() for _ in range(10)] != [b.next_u32() for _ in range(10)]


def test_state_follows_the_lcg_recurrence():
    stream = PrngStream(11, 0)
    state = stream.state

    out = stream.next_u32()

    assert stream.state == (state * MULTIPLIER + 1442695040888963407) & MASK64
    assert out == stream.state >> 32


def test_uniforms_stay_in_half_open_unit_interval():
    values = prng_stream(1, 0).uniforms(10_000)

    assert values.min() >= 0.0
    assert values.max() < 1.0


def test_uniforms_pass_chi_square_bin_test():
    values = prng_stream(2024, 5).uniforms(1_000_000)
    counts, _ = np.histogram(values, bins=100, range=(0.0, 1.0))

    assert stats.chisquare(counts).pvalue > 0.001


def test_vector_draws_match_scalar_draws():
    scalar = prng_stream(5, 2)
    vector = prng_stream(5, 2)

    expected = [scalar.uniform() for _ in range(2500)]

    np.testing.assert_array_equal(vector.uniforms(2500), expected)
    assert vector.state == scalar.state


def test_vector_gaussians_match_scalar_gaussians():
    scalar = prng_stream(9, 4)
    vector = prng_stream(9, 4)

    expected = [scalar.gaussian() for _ in range(300)]

    np.testing.assert_allclose(vector.gaussians(300), expected, rtol=0, atol=1e-12)


def test_gaussians_have_unit_moments():
    values = prng_stream(3, 1).gaussians(200_000)

    assert values.mean() == pytest.approx(0.0, abs=0.01)
    assert values.std() == pytest.approx(1.0, abs=0.01)


def test_parallel_uniforms_match_independent_streams():
    rows = parallel_uniforms(13, np.array([0, 4, 9]), 50)

    for row, stream_id in zip(rows, (0, 4, 9), strict=True):
        np.testing.assert_array_equal(row, prng_stream(13, stream_id).uniforms(50))


def test_integer_and_range_helpers():
    stream = prng_stream(21, 0)

    draws = [stream.integer(6) for _ in range(600)]
    assert set(draws) == set(range(6))
    assert all(-2.0 <= stream.uniform_range(-2.0, 3.0) < 3.0 for _ in range(100))
    assert {stream.sign() for _ in range(100)} == {-1.0, 1.0}


def test_negative_seed_is_rejected():
    with pytest.raises(ArgumentError):
        prng_stream(-1, 0)

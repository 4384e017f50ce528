import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from petersburg.rng import RngStream, as_generator, parallel_draw


def test_same_stream_same_state():
    a = RngStream(12345, 7).generator().random(5)
    b = RngStream(12345, 7).generator().random(5)
    np.testing.assert_array_equal(a, b)


def test_distinct_stream_ids_differ():
    a = RngStream(12345, 0).generator().random(5)
    b = RngStream(12345, 1).generator().random(5)
    assert not np.array_equal(a, b)


def test_bit_generator_is_pcg64dxsm():
    assert isinstance(RngStream(1).generator().bit_generator, np.random.PCG64DXSM)


@pytest.mark.parametrize("bad", [-1, 2 ** 64, 1.5, "3"])
def test_rejects_invalid_seed(bad):
    with pytest.raises(ValueError):
        RngStream(bad)


def test_as_generator():
    s = RngStream(3)
    assert as_generator(s).random() == as_generator(s).random()
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    with pytest.raises(TypeError):
        as_generator(42)


def _uniform(count, gen):
    return gen.random(count)


@pytest.mark.parametrize("workers", [1, 2, 4])
def test_parallel_draw_independent_of_workers(workers):
    stream = RngStream(99, 5)
    ref = parallel_draw(_uniform, 10_001, stream, block_size=1000, workers=1)
    out = parallel_draw(_uniform, 10_001, stream, block_size=1000, workers=workers)
    np.testing.assert_array_equal(ref, out)


def test_parallel_draw_block_layout():
    stream = RngStream(99, 5)
    out = parallel_draw(_uniform, 2500, stream, block_size=1000)
    np.testing.assert_array_equal(out[1000:2000], stream.generator(1).random(1000))
    np.testing.assert_array_equal(out[2000:], stream.generator(2).random(500))


def test_parallel_draw_checks_shape():
    with pytest.raises(ValueError):
        parallel_draw(lambda k, g: g.random(k + 1), 10, RngStream(0))
    with pytest.raises(ValueError):
        parallel_draw(_uniform, -1, RngStream(0))
    assert parallel_draw(_uniform, 0, RngStream(0)).size == 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 64 - 1), size=st.integers(1, 300), block=st.integers(1, 64))
def test_parallel_draw_deterministic(seed, size, block):
    s = RngStream(seed, 1)
    a = parallel_draw(_uniform, size, s, block_size=block, workers=2)
    b = parallel_draw(_uniform, size, s, block_size=block, workers=1)
    assert a.shape == (size,)
    np.testing.assert_array_equal(a, b)

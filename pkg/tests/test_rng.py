import numpy as np
import pytest

from ssep import rng


@pytest.mark.parametrize("key", [(0, 0), (5, 7), (2**64 - 1, 123456789)])
def test_philox_block_matches_numpy(key):
    ref = np.random.Philox(key=np.array(key, dtype=np.uint64), counter=0).random_raw(8)
    ours = rng.philox_raw(key, (1, 0, 0, 0)) + rng.philox_raw(key, (2, 0, 0, 0))
    assert ours == tuple(int(v) for v in ref)


def test_named_stream_matches_numpy_counter():
    seed, replica = 42, 3
    code = rng.stream_code(rng.BULK, 5)
    ours = rng.uniforms(seed, replica, rng.BULK, 5, 4)
    for i, u in enumerate(ours):
        raw = np.random.Philox(key=[seed, replica], counter=[i, code, 0, 0]).random_raw(1)[0]
        assert u == float(int(raw) >> 11) * 2.0**-53


def test_streams_are_distinct_and_reproducible():
    a = rng.uniforms(1, 0, rng.LEFT, 0, 1000)
    assert np.array_equal(a, rng.uniforms(1, 0, rng.LEFT, 0, 1000))
    assert not np.array_equal(a, rng.uniforms(1, 0, rng.RIGHT, 0, 1000))
    assert not np.array_equal(a, rng.uniforms(1, 1, rng.LEFT, 0, 1000))
    assert not np.array_equal(a, rng.uniforms(2, 0, rng.LEFT, 0, 1000))
    assert np.all((a >= 0) & (a < 1))
    assert abs(a.mean() - 0.5) < 0.05


def test_poisson_stream_count():
    k0 = rng.seed_key(9)
    counts = [rng.stream_times(k0, np.uint64(r), rng.stream_code(rng.LEFT), 50.0, 2.0).size
              for r in range(400)]
    # mean 100, sd of the average 0.5
    assert abs(np.mean(counts) - 100.0) < 2.5
    times = rng.stream_times(k0, np.uint64(0), rng.stream_code(rng.LEFT), 50.0, 2.0)
    assert np.all(np.diff(times) > 0) and times[-1] <= 2.0
    assert rng.stream_times(k0, np.uint64(0), 1, 0.0, 2.0).size == 0


def test_seed_key_wraps_to_64_bits():
    assert rng.seed_key(-1) == np.uint64(2**64 - 1)
    assert rng.seed_key(2**64 + 5) == np.uint64(5)

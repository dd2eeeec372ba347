import numpy as np
import pytest

from dropdiag.rng import RngStream


def test_same_seed_identical_draws():
    a = RngStream(1234).random(10_000)
    b = RngStream(1234).random(10_000)
    assert np.array_equal(a, b)


def test_different_stream_ids_uncorrelated():
    base = RngStream(77)
    a = base.substream(0).random(10_000)
    b = base.substream(1).random(10_000)
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 0.05


def test_substream_independent_of_parent_consumption():
    parent1 = RngStream(5)
    sub1 = parent1.substream("work", 3)
    parent2 = RngStream(5)
    parent2.random(1000)  # consuming the parent must not move its substreams
    sub2 = parent2.substream("work", 3)
    assert np.array_equal(sub1.random(100), sub2.random(100))


def test_string_and_int_keys_are_distinct_streams():
    base = RngStream(9)
    draws = {
        "a": base.substream("layer", 0).random(50),
        "b": base.substream("layer", 1).random(50),
        "c": base.substream("mask", 0).random(50),
    }
    assert not np.array_equal(draws["a"], draws["b"])
    assert not np.array_equal(draws["a"], draws["c"])


def test_negative_and_large_int_keys_accepted():
    base = RngStream(11)
    assert base.substream(-1).random() != base.substream(1).random()
    base.substream(2**80)  # wrapped to 64 bits, must not raise


def test_bad_key_type_rejected():
    with pytest.raises(TypeError):
        RngStream(0).substream(1.5)
    with pytest.raises(ValueError):
        RngStream(0).substream()


def test_keep_mask_degenerate_rate():
    mask = RngStream(3).keep_mask(1.0, 1000)
    assert np.all(mask == 1.0)


def test_keep_mask_frequency():
    mask = RngStream(3).keep_mask(0.9, 100_000)
    assert abs(mask.mean() - 0.9) < 0.01


def test_permutation_is_permutation():
    perm = RngStream(4).permutation(100)
    assert sorted(perm.tolist()) == list(range(100))

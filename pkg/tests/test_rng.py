import numpy as np
import pytest

from chaos_sampler import rng


def test_same_key_same_stream():
    a = rng.stream(5, "hamiltonian", 3, 7).standard_normal(10)
    b = rng.stream(5, "hamiltonian", 3, 7).standard_normal(10)
    assert np.array_equal(a, b)


@pytest.mark.parametrize(
    "other",
    [(6, "hamiltonian", 3, 7), (5, "ideal", 3, 7), (5, "hamiltonian", 4, 7), (5, "hamiltonian", 3, 8)],
)
def test_distinct_keys_distinct_streams(other):
    a = rng.stream(5, "hamiltonian", 3, 7).standard_normal(4)
    b = rng.stream(*other).standard_normal(4)
    assert not np.array_equal(a, b)


def test_draw_order_irrelevant():
    first = [rng.stream(1, "x", i).random() for i in range(5)]
    second = [rng.stream(1, "x", i).random() for i in reversed(range(5))][::-1]
    assert first == second


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_seed_range(seed):
    with pytest.raises(ValueError):
        rng.stream(seed, "x")


def test_largest_seed_accepted():
    rng.stream(2**64 - 1, "x").random()

import numpy as np

from genreclf.rng import GOLDEN, SeededRng, derive_seed

MASK = (1 << 64) - 1


def splitmix64_reference(seed, n):
    """Independent pure-int splitmix64 (Steele/Vigna reference semantics)."""
    out = []
    state = seed & MASK
    for _ in range(n):
        state = (state + GOLDEN) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        z = z ^ (z >> 31)
        out.append(z)
    return out


def test_matches_reference_stream():
    for seed in (0, 1, 1234567, 2**63 + 17):
        got = [int(x) for x in SeededRng(seed).raw(8)]
        assert got == splitmix64_reference(seed, 8)


def test_known_answer_seed_zero():
    # canonical first splitmix64 output for state 0
    assert int(SeededRng(0).raw(1)[0]) == 0xE220A8397B1DCDAF


def test_stream_continuation_matches_block_draw():
    a = SeededRng(42)
    first = a.raw(5)
    second = a.raw(5)
    assert np.array_equal(np.concatenate([first, second]), SeededRng(42).raw(10))


def test_same_seed_same_values():
    r1, r2 = SeededRng(7), SeededRng(7)
    assert np.array_equal(r1.uniform((100,)), r2.uniform((100,)))
    assert np.array_equal(r1.normal((50, 3)), r2.normal((50, 3)))
    assert np.array_equal(r1.permutation(31), r2.permutation(31))


def test_uniform_bounds_and_moments():
    u = SeededRng(3).uniform((200000,))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005


def test_normal_moments():
    z = SeededRng(4).normal((200000,))
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01


def test_permutation_is_a_permutation():
    p = SeededRng(9).permutation(1000)
    assert np.array_equal(np.sort(p), np.arange(1000))


def test_subsample_sorted():
    rng = SeededRng(11)
    idx = rng.subsample_sorted(100, 10)
    assert len(idx) == 10
    assert np.all(np.diff(idx) > 0)
    assert rng.subsample_sorted(5, 10).tolist() == [0, 1, 2, 3, 4]


def test_state_round_trip_resumes_stream():
    rng = SeededRng(123)
    rng.raw(17)
    resumed = SeededRng.from_state(rng.state())
    assert np.array_equal(rng.raw(10), resumed.raw(10))


def test_derive_seed_distinct_and_stable():
    seeds = {derive_seed(0, "a"), derive_seed(0, "b"), derive_seed(1, "a"),
             derive_seed(0, "a", 1), derive_seed(0, "a", 2)}
    assert len(seeds) == 5
    assert derive_seed(5, "shuffle", 3) == derive_seed(5, "shuffle", 3)

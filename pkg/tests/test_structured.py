import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgedmd import StructuredSumSpec, brute_force_structured, build_structured_tt, to_dense
from tgedmd.errors import CapacityError


def make_spec(rng, p, d, mode_sizes, symmetric=False):
    return StructuredSumSpec(
        base=tuple(rng.standard_normal(n) for n in mode_sizes),
        single=tuple(rng.standard_normal(n) for n in mode_sizes),
        pair_left=tuple(rng.standard_normal((d, n)) for n in mode_sizes),
        pair_right=tuple(rng.standard_normal((d, n)) for n in mode_sizes),
        symmetric=symmetric,
    )


def test_pure_single_sum_of_ones():
    ones = (np.ones(2), np.ones(2))
    empty = (np.zeros((0, 2)), np.zeros((0, 2)))
    spec = StructuredSumSpec(base=ones, single=ones, pair_left=empty, pair_right=empty)
    assert np.array_equal(to_dense(build_structured_tt(spec)), 2.0 * np.ones((2, 2)))


def test_random_spec_matches_oracle_and_rank(rng):
    spec = make_spec(rng, 3, 1, (2, 3, 2))
    t = build_structured_tt(spec)
    assert t.ranks == (1, 3, 3, 1)
    oracle = brute_force_structured(spec)
    assert np.max(np.abs(to_dense(t) - oracle)) < 1e-13


def test_symmetric_spec_rank_and_values(rng):
    spec = make_spec(rng, 3, 2, (3, 2, 3), symmetric=True)
    t = build_structured_tt(spec)
    assert t.ranks == (1, 6, 6, 1)  # 2d + 2
    oracle = brute_force_structured(spec)
    assert np.max(np.abs(to_dense(t) - oracle)) < 1e-12 * (1 + np.max(np.abs(oracle)))


def test_single_mode_rejected(rng):
    spec = StructuredSumSpec(
        base=(np.ones(2),),
        single=(np.ones(2),),
        pair_left=(np.zeros((0, 2)),),
        pair_right=(np.zeros((0, 2)),),
    )
    with pytest.raises(ValueError):
        build_structured_tt(spec)


# -- brute-force oracle edge cases ---------------------------------------------


def test_oracle_zero_single_terms():
    zeros = (np.zeros(2), np.zeros(3))
    ones = (np.ones(2), np.ones(3))
    empty = (np.zeros((0, 2)), np.zeros((0, 3)))
    spec = StructuredSumSpec(base=ones, single=zeros, pair_left=empty, pair_right=empty)
    assert np.array_equal(brute_force_structured(spec), np.zeros((2, 3)))


def test_oracle_single_surviving_pair_term():
    # base = (1,0) both modes, single = 0, one pair channel putting weight on
    # index 1 in each mode: exactly one entry survives at (1, 1).
    spec = StructuredSumSpec(
        base=(np.array([1.0, 0.0]), np.array([1.0, 0.0])),
        single=(np.zeros(2), np.zeros(2)),
        pair_left=(np.array([[0.0, 1.0]]), np.zeros((1, 2))),
        pair_right=(np.zeros((1, 2)), np.array([[0.0, 1.0]])),
    )
    expect = np.zeros((2, 2))
    expect[1, 1] = 1.0
    assert np.array_equal(brute_force_structured(spec), expect)


def test_oracle_capacity():
    n = 101
    ones = (np.ones(n), np.ones(n), np.ones(n))
    empty = (np.zeros((0, n)),) * 3
    spec = StructuredSumSpec(base=ones, single=ones, pair_left=empty, pair_right=empty)
    with pytest.raises(CapacityError):
        brute_force_structured(spec, cap=10**6)


def test_linearity_of_pure_single_sum(rng):
    sizes = (2, 3, 2)
    base = tuple(rng.standard_normal(n) for n in sizes)
    single = tuple(rng.standard_normal(n) for n in sizes)
    empty = tuple(np.zeros((0, n)) for n in sizes)
    spec1 = StructuredSumSpec(base, single, empty, empty)
    spec3 = StructuredSumSpec(base, tuple(3.0 * f for f in single), empty, empty)
    assert np.allclose(
        brute_force_structured(spec3), 3.0 * brute_force_structured(spec1), atol=1e-13
    )
    assert np.allclose(
        to_dense(build_structured_tt(spec3)),
        3.0 * to_dense(build_structured_tt(spec1)),
        atol=1e-13,
    )


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), symmetric=st.booleans())
def test_property_tt_equals_oracle(seed, symmetric):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 5))
    d = int(rng.integers(0, 4))
    sizes = tuple(int(rng.integers(2, 5)) for _ in range(p))
    spec = make_spec(rng, p, d, sizes, symmetric=symmetric)
    t = build_structured_tt(spec)
    expected_rank = 2 * d + 2 if symmetric else d + 2
    assert t.ranks == (1,) + (expected_rank,) * (p - 1) + (1,)
    oracle = brute_force_structured(spec)
    err = np.max(np.abs(to_dense(t) - oracle))
    assert err < 1e-12 * (1 + np.max(np.abs(oracle)))

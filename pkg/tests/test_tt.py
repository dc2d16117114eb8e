import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgedmd import (
    OpCounter,
    StructuredSumSpec,
    TensorTrain,
    build_structured_tt,
    contract,
    entry,
    left_orthonormalize,
    load_tt,
    rank_one,
    right_orthonormalize_last_core,
    save_tt,
    to_dense,
    tt_sum,
    zero_train,
)
from tgedmd.errors import CapacityError
from tgedmd.tt import orthonormality_residual, unfold

from conftest import random_tt


# -- entry ------------------------------------------------------------------


def test_entry_order_one_is_vector():
    t = TensorTrain((np.array([[1.0], [2.0], [3.0]]).reshape(1, 3, 1),))
    assert entry(t, (1,)) == 2.0


def test_entry_rank_one_outer_product():
    t = rank_one([np.array([1.0, 2.0]), np.array([3.0, 4.0])])
    assert entry(t, (1, 0)) == 6.0


def test_entry_matches_dense_everywhere(rng):
    t = random_tt(rng, (2, 2, 2), (1, 2, 2, 1))
    dense = to_dense(t)
    for idx in np.ndindex(2, 2, 2):
        assert entry(t, idx) == pytest.approx(dense[idx], rel=1e-12)


def test_entry_bounds_and_shape_errors(rng):
    t = random_tt(rng, (2, 3), (1, 2, 1))
    with pytest.raises(IndexError):
        entry(t, (0, 3))
    wide = random_tt(rng, (2, 3), (1, 2, 2))
    with pytest.raises(ValueError):
        entry(wide, (0, 0))


# -- to_dense / rank_one ------------------------------------------------------


def test_dense_of_unit_rank_one():
    t = rank_one([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    expect = np.zeros((2, 2))
    expect[0, 1] = 1.0
    assert np.array_equal(to_dense(t), expect)


def test_rank_one_single_vector():
    v = np.array([2.0, -1.0, 0.5])
    assert np.array_equal(to_dense(rank_one([v])), v)


def test_rank_one_all_ones():
    t = rank_one([np.ones(2), np.ones(2)])
    assert np.array_equal(to_dense(t), np.ones((2, 2)))


def test_rank_one_triple_outer(rng):
    vs = [rng.standard_normal(n) for n in (2, 3, 2)]
    expect = np.multiply.outer(np.multiply.outer(vs[0], vs[1]), vs[2])
    assert np.allclose(to_dense(rank_one(vs)), expect, atol=1e-14)


def test_rank_one_empty_rejected():
    with pytest.raises(ValueError):
        rank_one([])


def test_dense_capacity_cap(rng):
    t = random_tt(rng, (100, 100, 100, 100), (1, 2, 2, 2, 1))
    with pytest.raises(CapacityError):
        to_dense(t, cap=10**6)


# -- tt_sum -------------------------------------------------------------------


def test_sum_with_zero_train_preserves_values(rng):
    t = random_tt(rng, (2, 3, 2), (1, 2, 2, 1))
    s = tt_sum(t, zero_train((2, 3, 2)))
    assert s.ranks == (1, 3, 3, 1)  # ranks grow
    assert np.allclose(to_dense(s), to_dense(t), atol=1e-14)


def test_sum_of_rank_ones_has_interior_rank_two(rng):
    a = rank_one([rng.standard_normal(3) for _ in range(3)])
    b = rank_one([rng.standard_normal(3) for _ in range(3)])
    s = tt_sum(a, b)
    assert s.ranks == (1, 2, 2, 1)
    assert np.allclose(to_dense(s), to_dense(a) + to_dense(b), atol=1e-14)


def test_sum_dense_oracle(rng):
    a = random_tt(rng, (2, 3, 2), (1, 2, 3, 1))
    b = random_tt(rng, (2, 3, 2), (1, 3, 2, 1))
    assert np.allclose(to_dense(tt_sum(a, b)), to_dense(a) + to_dense(b), atol=1e-13)


def test_sum_commutative_and_associative_in_value(rng):
    a, b, c = (random_tt(rng, (2, 2), (1, 2, 1)) for _ in range(3))
    assert np.allclose(to_dense(tt_sum(a, b)), to_dense(tt_sum(b, a)), atol=1e-14)
    assert np.allclose(
        to_dense(tt_sum(tt_sum(a, b), c)),
        to_dense(tt_sum(a, tt_sum(b, c))),
        atol=1e-14,
    )


def test_sum_shape_mismatch(rng):
    with pytest.raises(ValueError):
        tt_sum(random_tt(rng, (2, 3), (1, 2, 1)), random_tt(rng, (2, 2), (1, 2, 1)))


# -- orthonormalization ---------------------------------------------------------


def test_left_orthonormalize_preserves_and_grams(rng):
    t = random_tt(rng, (3, 4, 3, 2), (1, 3, 5, 3, 1))
    o = left_orthonormalize(t)
    assert np.allclose(to_dense(o), to_dense(t), rtol=1e-12, atol=1e-12)
    assert orthonormality_residual(o) < 1e-12
    assert all(ro <= rt for ro, rt in zip(o.ranks, t.ranks))


def test_left_orthonormalize_idempotent(rng):
    t = random_tt(rng, (3, 3, 3), (1, 3, 3, 1))
    once = left_orthonormalize(t)
    twice = left_orthonormalize(once)
    assert np.allclose(to_dense(once), to_dense(twice), atol=1e-12)
    assert orthonormality_residual(twice) < 1e-12


def test_left_orthonormalize_reduces_deficient_rank(rng):
    first = rng.standard_normal((1, 3, 2))
    first[:, :, 1] = first[:, :, 0]  # duplicated slice: numerical rank 1
    t = TensorTrain((first, rng.standard_normal((2, 3, 1))))
    o = left_orthonormalize(t)
    assert o.ranks == (1, 1, 1)
    assert np.allclose(to_dense(o), to_dense(t), atol=1e-12)


def test_left_orthonormalize_zero_tensor_flags(rng):
    t = TensorTrain((np.zeros((1, 3, 2)), rng.standard_normal((2, 2, 1))))
    o = left_orthonormalize(t)
    assert o.is_zero
    assert np.array_equal(to_dense(o), np.zeros((3, 2)))


def test_right_orthonormalize_identity_selector_unchanged(rng):
    # Unit-vector last core (the unweighted sample selector) is already
    # row-orthonormal.
    lead = rng.standard_normal((1, 3, 4))
    sel = np.eye(4).reshape(4, 4, 1)
    t = TensorTrain((lead, sel))
    o = right_orthonormalize_last_core(t)
    last = o.cores[-1].reshape(o.cores[-1].shape[0], -1)
    assert np.allclose(last @ last.T, np.eye(last.shape[0]), atol=1e-12)
    assert np.allclose(to_dense(o), to_dense(t), atol=1e-12)


def test_right_orthonormalize_uniform_weights_absorbed(rng):
    lead = rng.standard_normal((1, 3, 4))
    sel = 0.5 * np.eye(4).reshape(4, 4, 1)  # constant sqrt-weight scaling
    t = TensorTrain((lead, sel))
    o = right_orthonormalize_last_core(t)
    last = o.cores[-1].reshape(o.cores[-1].shape[0], -1)
    assert np.allclose(last @ last.T, np.eye(last.shape[0]), atol=1e-12)
    assert np.allclose(to_dense(o), to_dense(t), atol=1e-12)


def test_right_orthonormalize_random_weights(rng):
    lead = rng.standard_normal((1, 3, 4))
    sel = np.zeros((4, 4, 1))
    sel[np.arange(4), np.arange(4), 0] = np.sqrt(rng.uniform(0.2, 2.0, 4))
    t = TensorTrain((lead, sel))
    o = right_orthonormalize_last_core(t)
    last = o.cores[-1].reshape(o.cores[-1].shape[0], -1)
    assert np.allclose(last @ last.T, np.eye(last.shape[0]), atol=1e-12)
    assert np.allclose(to_dense(o), to_dense(t), atol=1e-12)


# -- contraction ----------------------------------------------------------------


def brute_force_contract(t, u):
    """Full index sum over all shared modes (trailing ranks kept)."""
    dt = to_dense(t)
    du = to_dense(u)
    st = t.ranks[-1]
    ru = u.ranks[-1]
    return np.tensordot(dt.reshape(-1, st), du.reshape(-1, ru), axes=(0, 0))


def test_contract_self_inner_product_of_unit_rank_one():
    v = np.array([0.6, 0.8])
    w = np.array([1.0, 0.0])
    t = rank_one([v, w])
    res = contract(t, t)
    assert res.shape == (1, 1)
    assert res[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_contract_matches_index_sum(rng):
    t = random_tt(rng, (2, 3, 2), (1, 2, 3, 2))
    u = random_tt(rng, (2, 3, 2), (1, 3, 2, 4))
    assert np.allclose(contract(t, u), brute_force_contract(t, u), atol=1e-11)


def test_contract_unfolding_identity(rng):
    # contract(t, u) equals to_dense(t)|_p^T . to_dense(u)|_p
    t = random_tt(rng, (3, 2, 2), (1, 3, 2, 1))
    u = random_tt(rng, (3, 2, 2), (1, 2, 3, 2))
    lhs = contract(t, u)
    rhs = to_dense(t).reshape(-1, 1).T @ to_dense(u).reshape(-1, 2)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def _random_generator_spec(rng, p, d, n):
    return StructuredSumSpec(
        base=tuple(rng.standard_normal(n) for _ in range(p)),
        single=tuple(rng.standard_normal(n) for _ in range(p)),
        pair_left=tuple(rng.standard_normal((d, n)) for _ in range(p)),
        pair_right=tuple(rng.standard_normal((d, n)) for _ in range(p)),
    )


def test_contract_sparse_equals_dense_on_structured(rng):
    t = build_structured_tt(_random_generator_spec(rng, 3, 2, 3))
    u = left_orthonormalize(random_tt(rng, (3, 3, 3), (1, 3, 4, 5)))
    dense_counter, sparse_counter = OpCounter(), OpCounter()
    r_dense = contract(t, u, counter=dense_counter)
    r_sparse = contract(t, u, sparse_pattern="generator", counter=sparse_counter)
    assert np.allclose(r_dense, r_sparse, rtol=1e-13, atol=1e-13)
    assert sparse_counter.multiplies < dense_counter.multiplies


@pytest.mark.parametrize("p,d,n,r", [(3, 1, 3, 4), (3, 2, 4, 6), (4, 3, 3, 5), (4, 4, 2, 8)])
def test_sparse_op_count_bound(rng, p, d, n, r):
    # multiply count <= c * sum_k n_k (d+2) r_{k-1} r_k with a small fixed c
    t = build_structured_tt(_random_generator_spec(rng, p, d, n))
    ranks = (1,) + (r,) * (p - 1) + (r,)
    u = left_orthonormalize(random_tt(rng, (n,) * p, ranks))
    counter = OpCounter()
    contract(t, u, sparse_pattern="generator", counter=counter)
    bound = 2.0 * sum(
        n * (d + 2) * u.ranks[k] * u.ranks[k + 1] for k in range(p)
    )
    assert counter.multiplies <= bound


def test_contract_shape_errors(rng):
    t = random_tt(rng, (2, 2), (1, 2, 1))
    u = random_tt(rng, (2, 3), (1, 2, 1))
    with pytest.raises(ValueError):
        contract(t, u)
    with pytest.raises(ValueError):
        contract(t, random_tt(rng, (2, 2), (1, 2, 1)), sparse_pattern="bogus")


# -- invariants -----------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_roundtrip_dense_entry_agreement(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 4))
    modes = tuple(int(rng.integers(1, 4)) for _ in range(p))
    ranks = (1,) + tuple(int(rng.integers(1, 4)) for _ in range(p - 1)) + (1,)
    t = random_tt(rng, modes, ranks)
    dense = to_dense(t)
    for idx in np.ndindex(*modes):
        assert entry(t, idx) == pytest.approx(dense[idx], rel=1e-12, abs=1e-12)


# -- construction validation ------------------------------------------------------


def test_rank_chain_validation():
    with pytest.raises(ValueError):
        TensorTrain((np.zeros((1, 2, 2)), np.zeros((3, 2, 1))))
    with pytest.raises(ValueError):
        TensorTrain(())


def test_cores_frozen(rng):
    t = random_tt(rng, (2, 2), (1, 2, 1))
    with pytest.raises(ValueError):
        t.cores[0][0, 0, 0] = 5.0


# -- serialization -----------------------------------------------------------------


def test_save_load_bit_exact(rng, tmp_path):
    t = random_tt(rng, (3, 2, 4), (1, 3, 2, 1))
    path = tmp_path / "train.tt"
    save_tt(t, path)
    back = load_tt(path)
    assert back.mode_sizes == t.mode_sizes
    assert back.ranks == t.ranks
    for a, b in zip(t.cores, back.cores):
        assert a.tobytes() == b.tobytes()

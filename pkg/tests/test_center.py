import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgat.center import (
    CapabilityError,
    DegenerateCenterError,
    ORACLE_MAX_BITS,
    all_codes,
    balanced_weights,
    batch_center_codes,
    center_for_sample,
    center_objective,
    chcm,
    hamming,
    oracle_center,
    partition,
)


def _random_instance(seed, max_bits=10):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, max_bits + 1))
    n_pos = int(rng.integers(1, 20))
    n_neg = int(rng.integers(0, 20))
    pos = rng.choice([-1, 1], size=(n_pos, k)).astype(np.int8)
    neg = rng.choice([-1, 1], size=(n_neg, k)).astype(np.int8)
    w_pos = rng.uniform(0, 5, size=n_pos)
    w_neg = rng.uniform(0, 5, size=n_neg)
    return pos, neg, w_pos, w_neg


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_closed_form_center_attains_exhaustive_minimum(seed):
    pos, neg, w_pos, w_neg = _random_instance(seed)
    closed = chcm(pos, neg, w_pos, w_neg)
    psi_closed = center_objective(closed, pos, neg, w_pos, w_neg)
    _, psi_best = oracle_center(pos, neg, w_pos, w_neg)
    assert abs(psi_closed - psi_best) <= 1e-9


def test_hamming_counts_mismatches():
    a = np.array([1, -1, 1, -1])
    b = np.array([1, 1, -1, -1])
    assert hamming(a, b) == 2
    assert hamming(a, a) == 0
    with pytest.raises(ValueError):
        hamming(a, np.array([1, -1]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hamming_equals_half_k_minus_inner_product(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 64))
    a = rng.choice([-1, 1], size=k)
    b = rng.choice([-1, 1], size=k)
    assert hamming(a, b) == (k - int(a @ b)) / 2


def test_sign_zero_resolves_to_plus_one():
    pos = np.array([[1, -1], [-1, 1]])
    code = chcm(pos, np.empty((0, 2)), np.ones(2), np.empty(0))
    np.testing.assert_array_equal(code, [1, 1])


def test_chcm_requires_a_positive():
    with pytest.raises(DegenerateCenterError):
        chcm(np.empty((0, 4)), np.empty((0, 4)), np.empty(0), np.empty(0))


def test_chcm_without_negatives():
    pos = np.array([[1, 1, -1], [1, -1, -1], [1, 1, -1]])
    code = chcm(pos, np.empty((0, 3)), np.ones(3), np.empty(0))
    np.testing.assert_array_equal(code, [1, 1, -1])


def test_oracle_rejects_infeasible_code_length():
    k = ORACLE_MAX_BITS + 1
    pos = np.ones((1, k))
    with pytest.raises(CapabilityError):
        oracle_center(pos, np.empty((0, k)), np.ones(1), np.empty(0))


def test_all_codes_enumerates_exactly():
    codes = all_codes(3)
    assert codes.shape == (8, 3)
    assert len({tuple(c) for c in codes}) == 8
    assert set(np.unique(codes)) == {-1, 1}


def test_partition_splits_on_shared_classes():
    labels = np.array([[1, 0], [0, 1], [1, 1]])
    pos, neg = partition(labels, np.array([1, 0]))
    np.testing.assert_array_equal(pos, [0, 2])
    np.testing.assert_array_equal(neg, [1])


def test_balanced_weights_scale_by_side_size():
    w_pos, w_neg = balanced_weights(10, 2, 8)
    assert w_pos == pytest.approx(5.0)
    assert w_neg == pytest.approx(1.25)
    assert balanced_weights(10, 10, 0) == (1.0, 0.0)
    with pytest.raises(DegenerateCenterError):
        balanced_weights(10, 0, 10)


def test_center_for_sample_matches_oracle():
    rng = np.random.default_rng(11)
    codebook = rng.choice([-1, 1], size=(30, 6)).astype(np.int8)
    labels = np.zeros((30, 3))
    labels[np.arange(30), rng.integers(0, 3, size=30)] = 1
    cc = center_for_sample(codebook, labels, 0)
    pos, neg = partition(labels, labels[0])
    w_pos, w_neg = balanced_weights(30, len(pos), len(neg))
    psi = center_objective(cc.code, codebook[pos], codebook[neg],
                           np.full(len(pos), w_pos), np.full(len(neg), w_neg))
    _, psi_best = oracle_center(codebook[pos], codebook[neg],
                                np.full(len(pos), w_pos), np.full(len(neg), w_neg))
    assert psi == pytest.approx(psi_best, abs=1e-9)
    assert cc.n_pos == len(pos) and cc.n_neg == len(neg)


def test_batch_center_codes_agree_with_per_sample_path():
    rng = np.random.default_rng(12)
    codebook = rng.choice([-1, 1], size=(40, 8)).astype(np.int8)
    labels = np.zeros((40, 4))
    labels[np.arange(40), rng.integers(0, 4, size=40)] = 1
    batch = batch_center_codes(codebook, labels, labels[:10])
    for i in range(10):
        np.testing.assert_array_equal(batch[i], center_for_sample(codebook, labels, i).code)


def test_batch_center_codes_require_positives():
    codebook = np.ones((4, 8), dtype=np.int8)
    labels = np.tile([1, 0], (4, 1))
    with pytest.raises(DegenerateCenterError):
        batch_center_codes(codebook, labels, np.array([[0, 1]]))

"""Center codes: closed-form computation and the exhaustive oracle.

A center code for a sample is the binary code minimizing

    psi(b) = sum_i w_i * D_H(b, pos_i) - sum_j w_j * D_H(b, neg_j)

over {-1,+1}^K. The closed form is the elementwise sign of the weighted
positive sum minus the weighted negative sum; ``oracle_center`` verifies
it by enumerating all 2^K candidates with literal bit counting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateCenterError(ValueError):
    """No positive codes: the center would be unanchored."""


class CapabilityError(ValueError):
    """Exhaustive enumeration was requested for an infeasible code length."""


ORACLE_MAX_BITS = 16


@dataclass(frozen=True)
class CenterCode:
    code: np.ndarray
    source_index: int
    n_pos: int
    n_neg: int


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Number of differing positions between two +/-1 codes."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"code length mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def partition(labels: np.ndarray, target: np.ndarray):
    """Split sample ids into positives (share >=1 class) and negatives."""
    labels = np.asarray(labels, dtype=np.float64)
    positive = labels @ np.asarray(target, dtype=np.float64) > 0
    ids = np.arange(labels.shape[0])
    return ids[positive], ids[~positive]


def balanced_weights(n_total: int, n_pos: int, n_neg: int):
    """Per-side weights (n_total / side size) balancing the class skew.

    Similarity is binary here, so every positive carries the same weight
    and likewise every negative; an empty negative side gets weight 0.
    """
    if n_pos < 1:
        raise DegenerateCenterError("center code needs at least one positive")
    w_pos = n_total / n_pos
    w_neg = n_total / n_neg if n_neg > 0 else 0.0
    return w_pos, w_neg


def chcm(pos_codes: np.ndarray, neg_codes: np.ndarray, pos_weights, neg_weights) -> np.ndarray:
    """Closed-form center code, with sign(0) -> +1.

    ``pos_codes``/``neg_codes`` are (P, K) and (Q, K) arrays over
    {-1,+1}; weights are per-code nonnegative scalars (broadcastable
    1-D arrays). Q may be zero, P may not.
    """
    pos_codes = np.atleast_2d(np.asarray(pos_codes, dtype=np.float64))
    if pos_codes.shape[0] == 0:
        raise DegenerateCenterError("center code needs at least one positive")
    score = np.asarray(pos_weights, dtype=np.float64) @ pos_codes
    neg_codes = np.atleast_2d(np.asarray(neg_codes, dtype=np.float64))
    if neg_codes.size:
        score = score - np.asarray(neg_weights, dtype=np.float64) @ neg_codes
    return np.where(score >= 0, 1, -1).astype(np.int8)


def center_objective(code, pos_codes, neg_codes, pos_weights, neg_weights) -> float:
    """psi(code): weighted positive distances minus weighted negative ones."""
    total = 0.0
    for b, w in zip(np.atleast_2d(pos_codes), np.atleast_1d(pos_weights)):
        total += w * hamming(code, b)
    for b, w in zip(np.atleast_2d(neg_codes), np.atleast_1d(neg_weights)):
        total -= w * hamming(code, b)
    return float(total)


def all_codes(n_bits: int) -> np.ndarray:
    """Every +/-1 code of the given length, in lexicographic order."""
    grid = ((np.arange(2**n_bits)[:, None] >> np.arange(n_bits - 1, -1, -1)) & 1).astype(np.int8)
    return (2 * grid - 1).astype(np.int8)


def oracle_center(pos_codes, neg_codes, pos_weights, neg_weights):
    """Exact minimizer of psi by brute force over all 2^K codes.

    Distances are literal mismatch counts, independent of the closed
    form. Returns ``(code, psi)`` for the first minimizer in
    lexicographic order.
    """
    pos_codes = np.atleast_2d(np.asarray(pos_codes))
    neg_codes = np.atleast_2d(np.asarray(neg_codes))
    n_bits = pos_codes.shape[1]
    if n_bits > ORACLE_MAX_BITS:
        raise CapabilityError(f"exhaustive search supports K <= {ORACLE_MAX_BITS}, got {n_bits}")
    candidates = all_codes(n_bits)
    mismatch_pos = (candidates[:, None, :] != pos_codes[None, :, :]).sum(axis=2)
    psi = mismatch_pos @ np.asarray(pos_weights, dtype=np.float64)
    if neg_codes.size:
        mismatch_neg = (candidates[:, None, :] != neg_codes[None, :, :]).sum(axis=2)
        psi = psi - mismatch_neg @ np.asarray(neg_weights, dtype=np.float64)
    best = int(np.argmin(psi))
    return candidates[best].copy(), float(psi[best])


def center_for_sample(codebook: np.ndarray, labels: np.ndarray, index: int) -> CenterCode:
    """Center code of one training sample against the whole codebook."""
    pos, neg = partition(labels, labels[index])
    w_pos, w_neg = balanced_weights(len(labels), len(pos), len(neg))
    code = chcm(
        codebook[pos],
        codebook[neg],
        np.full(len(pos), w_pos),
        np.full(len(neg), w_neg),
    )
    return CenterCode(code, index, len(pos), len(neg))


def batch_center_codes(codebook: np.ndarray, codebook_labels: np.ndarray, target_labels: np.ndarray) -> np.ndarray:
    """Center codes for a batch of label vectors against the codebook.

    Vectorized CHCM: each row of the returned (n, K) array is the sign of
    the weighted sum of positives minus the weighted sum of negatives,
    with the per-side balance weights folded into a signed coefficient
    matrix.
    """
    codebook_labels = np.asarray(codebook_labels, dtype=np.float64)
    target_labels = np.atleast_2d(np.asarray(target_labels, dtype=np.float64))
    n_total = codebook_labels.shape[0]
    positive = target_labels @ codebook_labels.T > 0  # (n, N)
    n_pos = positive.sum(axis=1)
    if np.any(n_pos < 1):
        raise DegenerateCenterError("every sample needs at least one positive in the codebook")
    n_neg = n_total - n_pos
    w_pos = (n_total / n_pos)[:, None]
    w_neg = np.divide(n_total, n_neg, out=np.zeros_like(w_pos[:, 0]), where=n_neg > 0)[:, None]
    coeff = np.where(positive, w_pos, -w_neg)
    score = coeff @ np.asarray(codebook, dtype=np.float64)
    return np.where(score >= 0, 1, -1).astype(np.int8)

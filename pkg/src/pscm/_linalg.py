"""Small numerical helpers used across modules."""

import numpy as np
from scipy.optimize import linear_sum_assignment

RANK_RTOL = 1e-8


def numerical_rank(M, rtol=RANK_RTOL):
    """Rank counting singular values above ``rtol * sigma_max``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def normalize_columns(W):
    """Scale each column so its largest-magnitude entry equals +1.

    All-zero columns are left untouched.
    """
    W = np.array(W, dtype=float, copy=True)
    if W.size == 0:
        return W
    idx = np.argmax(np.abs(W), axis=0)
    pivot = W[idx, np.arange(W.shape[1])]
    scale = np.where(pivot == 0.0, 1.0, pivot)
    return W / scale


def column_cost(target, candidate):
    """Squared Euclidean distance between every column pair.

    ``cost[i, j] = ||target[:, i] - candidate[:, j]||^2``.
    """
    target = np.asarray(target, dtype=float)
    candidate = np.asarray(candidate, dtype=float)
    diff = target[:, :, None] - candidate[:, None, :]
    return np.einsum("pij,pij->ij", diff, diff)


def align_columns(target, candidate):
    """Column permutation of ``candidate`` closest to ``target`` in Frobenius norm.

    Returns ``perm`` such that ``candidate[:, perm]`` is the aligned matrix.
    The Frobenius objective separates over column pairs, so the Hungarian
    solution is exact.
    """
    cost = column_cost(target, candidate)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def align_columns_signed(target, candidate):
    """Like :func:`align_columns` but each column may also be negated.

    Returns ``(perm, signs)`` so that ``candidate[:, perm] * signs`` is closest
    to ``target``.
    """
    plus = column_cost(target, candidate)
    minus = column_cost(target, -np.asarray(candidate, dtype=float))
    rows, cols = linear_sum_assignment(np.minimum(plus, minus))
    perm = np.empty(plus.shape[0], dtype=int)
    perm[rows] = cols
    signs = np.where(minus[rows, cols] < plus[rows, cols], -1.0, 1.0)
    out = np.empty_like(signs)
    out[rows] = signs
    return perm, out

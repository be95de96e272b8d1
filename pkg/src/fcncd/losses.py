"""Pairwise and listwise block losses.

The scalar functions are the reference forms. :func:`batch_block_loss`
builds the same losses on a graph for a batch of blocks.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from . import numerics as nx
from .data import BlockType, validate_rank_values

__all__ = [
    "LOSS_KINDS",
    "neg_log_sigmoid",
    "weighted_bpr_pair",
    "original_bpr_pair",
    "ranknet_pair_loss",
    "block_loss_rank",
    "block_loss_mole",
    "block_loss_pairs",
    "block_loss_list",
    "list_order",
    "batch_block_loss",
]

LOSS_KINDS = ("weighted-bpr", "original-bpr", "list", "cross-entropy")


def neg_log_sigmoid(z: float) -> float:
    """``-ln(sigmoid(z))`` evaluated as ``softplus(-z)``."""
    z = -float(z)
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def weighted_bpr_pair(y_i, y_j, r_i, r_j, lam) -> float:
    if r_i == r_j:
        raise ValueError("weighted BPR is undefined for tied ranks")
    return neg_log_sigmoid(lam / (r_i - r_j) * (y_i - y_j))


def original_bpr_pair(y_i, y_j, r_i, r_j) -> float:
    if r_i == r_j:
        raise ValueError("BPR is undefined for tied ranks")
    return neg_log_sigmoid(math.copysign(1.0, r_i - r_j) * (y_i - y_j))


def ranknet_pair_loss(y_i, y_j, i_preferred: bool) -> float:
    """Cross-entropy of ``P(i > j) = sigmoid(y_i - y_j)`` against the true order."""
    z = y_i - y_j
    return neg_log_sigmoid(z) if i_preferred else neg_log_sigmoid(-z)


def _pairs(t):
    return [(i, j) for i in range(t) for j in range(i + 1, t)]


def block_loss_pairs(scores, ranks, lam=None) -> float:
    """Mean pair loss over pairs with distinct ranks.

    ``lam=None`` selects the unweighted (original) BPR pair loss.
    """
    terms = []
    for i, j in _pairs(len(scores)):
        if ranks[i] == ranks[j]:
            continue
        if lam is None:
            terms.append(original_bpr_pair(scores[i], scores[j], ranks[i], ranks[j]))
        else:
            terms.append(weighted_bpr_pair(scores[i], scores[j], ranks[i], ranks[j], lam))
    if not terms:
        raise ValueError("block has no pair with distinct ranks")
    return math.fsum(terms) / len(terms)


def block_loss_rank(scores, ranks, lam) -> float:
    if validate_rank_values(BlockType.RANK, ranks):
        raise ValueError(f"{list(ranks)} is not a RANK vector")
    return block_loss_pairs(scores, ranks, lam)


def block_loss_mole(scores, ranks, lam) -> float:
    if validate_rank_values(BlockType.MOLE, ranks):
        raise ValueError(f"{list(ranks)} is not a MOLE vector")
    t = len(ranks)
    total = math.fsum(
        weighted_bpr_pair(scores[i], scores[j], ranks[i], ranks[j], lam)
        for i, j in _pairs(t)
        if ranks[i] != ranks[j]
    )
    return total / (math.comb(t, 2) - math.comb(t - 2, 2))


def list_order(ranks) -> np.ndarray:
    """Item order by descending rank; tied ranks keep item index order."""
    ranks = np.asarray(ranks)
    return np.argsort(-ranks, axis=-1, kind="stable")


def block_loss_list(scores, ranks) -> float:
    y = np.asarray(scores, dtype=np.float64)[list_order(ranks)]
    T = len(y)
    terms = []
    for i in range(T):
        tail = y[i:]
        c = tail.max()
        terms.append(y[i] - (c + math.log(math.fsum(np.exp(tail - c)))))
    return -math.fsum(terms) / T


# --------------------------------------------------------------------------
# batched graph versions


@lru_cache(maxsize=None)
def _pair_index(t):
    i, j = np.triu_indices(t, k=1)
    return i, j


def batch_block_loss(scores: nx.Node, ranks: np.ndarray, kind: str, lam: float = 1.0) -> nx.Node:
    """Mean block loss over a batch.

    ``scores`` is a ``(B, t)`` node and ``ranks`` the matching rank values.
    Pairwise kinds average over pairs with distinct ranks in each block.
    """
    ranks = np.asarray(ranks)
    B, t = ranks.shape
    if kind == "list":
        order = list_order(ranks)
        ys = nx.take_along(scores, order)
        upper = np.triu(np.ones((t, t), dtype=bool))
        per_item = ys - nx.masked_logsumexp(ys, upper)
        return -nx.mean(per_item)
    I, J = _pair_index(t)
    dr = (ranks[:, I] - ranks[:, J]).astype(np.float64)
    mask = dr != 0
    counts = mask.sum(axis=1)
    if (counts == 0).any():
        raise ValueError("block without any pair of distinct ranks")
    weight = mask / counts[:, None] / B
    diff = nx.take_cols(scores, I) - nx.take_cols(scores, J)
    if kind == "weighted-bpr":
        coef = np.where(mask, lam / np.where(mask, dr, 1.0), 0.0)
        return nx.total(nx.softplus(-(diff * coef)) * weight)
    if kind == "original-bpr":
        return nx.total(nx.softplus(-(diff * np.sign(dr))) * weight)
    if kind == "cross-entropy":
        label = (dr > 0).astype(np.float64)
        ce = nx.softplus(-diff) * label + nx.softplus(diff) * (1.0 - label)
        return nx.total(ce * weight)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")

"""Ranking accuracy and interpretability metrics."""
from __future__ import annotations

import numpy as np

from .data import BlockType, RankVector, ResponseDataset

__all__ = [
    "rank_scores",
    "rank_matrix",
    "pair_accuracy",
    "pra",
    "lra",
    "rank_sums",
    "doa",
    "doa_per_participant",
]


def rank_matrix(scores, block_type) -> np.ndarray:
    """Rank values for each row of ``scores`` (higher score, higher rank).

    Ties are broken by index: the lower index gets the lower rank.
    """
    block_type = BlockType(block_type)
    s = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    t = s.shape[1]
    full = np.argsort(np.argsort(s, axis=1, kind="stable"), axis=1, kind="stable") + 1
    if block_type is BlockType.RANK:
        return full
    if block_type is BlockType.PICK:
        return np.where(full == t, t, 1)
    if t < 3:
        raise ValueError("MOLE blocks need at least 3 items")
    return np.where(full == t, 3, np.where(full == 1, 1, 2))


def rank_scores(scores, block_type) -> RankVector:
    return RankVector(block_type, rank_matrix(scores, block_type)[0])


def _check_aligned(scores, ranks):
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    ranks = np.atleast_2d(np.asarray(ranks))
    if scores.shape != ranks.shape:
        raise ValueError(f"predictions {scores.shape} not aligned with records {ranks.shape}")
    return scores, ranks


def pair_accuracy(scores, ranks) -> np.ndarray:
    """Per-record share of distinct-rank pairs whose score order agrees."""
    scores, ranks = _check_aligned(scores, ranks)
    I, J = np.triu_indices(scores.shape[1], k=1)
    dr = ranks[:, I] - ranks[:, J]
    ds = scores[:, I] - scores[:, J]
    valid = dr != 0
    agree = valid & (np.sign(ds) == np.sign(dr))
    n = valid.sum(axis=1)
    return np.divide(agree.sum(axis=1), n, out=np.full(len(n), np.nan), where=n > 0)


def pra(scores, ranks) -> float:
    acc = pair_accuracy(scores, ranks)
    acc = acc[~np.isnan(acc)]
    if len(acc) == 0:
        raise ValueError("no record has a pair with distinct ranks")
    return float(acc.mean())


def lra(predicted_ranks, ranks) -> float:
    """Share of records whose predicted rank vector equals the true one."""
    p, r = _check_aligned(predicted_ranks, ranks)
    if len(r) == 0:
        raise ValueError("no records")
    return float((p == r).all(axis=1).mean())


def rank_sums(dataset: ResponseDataset) -> np.ndarray:
    """``(N, K)`` sums of rank values per participant and dimension."""
    ds = dataset
    dims = ds.item_dims[ds.record_items()]
    S = np.zeros((ds.n_participants, ds.n_dims))
    np.add.at(S, (np.repeat(ds.participants, ds.t), dims.reshape(-1)), ds.ranks.reshape(-1))
    return S


def doa_per_participant(abilities, dataset: ResponseDataset) -> np.ndarray:
    """Agreement of ability order with rank-sum order, per participant.

    Dimension pairs tied on either side are left out. Participants without
    any usable pair get NaN.
    """
    F = np.asarray(abilities, dtype=np.float64)
    ds = dataset
    if F.shape != (ds.n_participants, ds.n_dims):
        raise ValueError(f"abilities shape {F.shape} != ({ds.n_participants}, {ds.n_dims})")
    answered = np.zeros(ds.n_participants, dtype=bool)
    answered[ds.participants] = True
    if not answered.all():
        raise ValueError(f"participant {int(np.flatnonzero(~answered)[0])} has no responses")
    S = rank_sums(ds)
    A, B = np.triu_indices(ds.n_dims, k=1)
    dF = np.sign(F[:, A] - F[:, B])
    dS = np.sign(S[:, A] - S[:, B])
    valid = (dF != 0) & (dS != 0)
    n = valid.sum(axis=1)
    agree = (valid & (dF == dS)).sum(axis=1)
    return np.divide(agree, n, out=np.full(len(n), np.nan), where=n > 0)


def doa(abilities, dataset: ResponseDataset) -> float:
    per = doa_per_participant(abilities, dataset)
    per = per[~np.isnan(per)]
    if len(per) == 0:
        raise ValueError("no participant has a usable dimension pair")
    return float(per.mean())

"""The FCNCD network and its ablation variants.

Each participant holds one ``d``-wide proficiency embedding per dimension.
For an item of dimension ``k`` the model reads the participant's row ``k``
and the item's difficulty and discrimination embeddings, maps all three
through sigmoid layers, combines them as ``disc * (prof - diff)``, and
scores the result with a two-layer head whose weights are kept
non-negative so the score never falls as proficiency rises.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from . import numerics as nx
from .base import BlockRanker
from .data import ResponseDataset

__all__ = ["FCNCD", "fcncd_init", "fcncd_item_scores", "fcncd_representations", "fcncd_head", "forward",
           "ability_profile", "build_variant", "VARIANTS"]

MONOTONE_WEIGHTS = ("W_4", "W_5")

VARIANTS = {
    "full": {},
    "eb": {"skip_mapping": True},
    "mo": {"no_monotone": True},
    "bpr": {"loss": "original-bpr"},
    "list": {"loss": "list"},
}


def fcncd_init(N, K, M, d, h1, h2, rng, skip_mapping=False) -> dict:
    """Xavier-uniform weights (torch fan convention), zero biases."""
    p = {
        "W_s": nx.xavier_uniform(K * d, N * d, rng, shape=(N, K, d)),
        "W_diff": nx.xavier_uniform(d, M, rng, shape=(M, d)),
        "W_disc": nx.xavier_uniform(d, M, rng, shape=(M, d)),
    }
    width = d
    if not skip_mapping:
        for i in (1, 2, 3):
            p[f"W_{i}"] = nx.xavier_uniform(d, h1, rng)
            p[f"b_{i}"] = np.zeros(h1)
        width = h1
    p["W_4"] = nx.xavier_uniform(width, h2, rng)
    p["b_4"] = np.zeros(h2)
    p["W_5"] = nx.xavier_uniform(h2, 1, rng)
    p["b_5"] = np.zeros(1)
    return p


def fcncd_representations(P: dict, participants, items, dims, skip_mapping=False):
    """``(prof, diff, disc)`` rows fed to the interaction, one per item."""
    W_s = P["W_s"]
    N, K, d = W_s.value.shape
    table = nx.reshape(W_s, (N * K, d))
    prof = nx.take_rows(table, np.asarray(participants) * K + np.asarray(dims))
    diff = nx.take_rows(P["W_diff"], items)
    disc = nx.take_rows(P["W_disc"], items)
    if skip_mapping:
        return prof, diff, disc
    return (
        nx.sigmoid(nx.affine(prof, P["W_1"], P["b_1"])),
        nx.sigmoid(nx.affine(diff, P["W_2"], P["b_2"])),
        nx.sigmoid(nx.affine(disc, P["W_3"], P["b_3"])),
    )


def fcncd_head(P: dict, prof: nx.Node, diff: nx.Node, disc: nx.Node) -> nx.Node:
    x = disc * (prof - diff)
    f1 = nx.sigmoid(nx.affine(x, P["W_4"], P["b_4"]))
    y = nx.sigmoid(nx.affine(f1, P["W_5"], P["b_5"]))
    return nx.reshape(y, (-1,))


def fcncd_item_scores(P: dict, participants, items, dims, skip_mapping=False) -> nx.Node:
    return fcncd_head(P, *fcncd_representations(P, participants, items, dims, skip_mapping))


def _const_graph(params):
    g = nx.Graph()
    return g, {k: g.const(v) for k, v in params.items()}


def forward(params: dict, participant: int, item: int, q_row, skip_mapping=False) -> float:
    """Score of one item for one participant; ``q_row`` is the item's one-hot Q row."""
    q = np.asarray(q_row)
    if q.ndim != 1 or set(np.unique(q).tolist()) - {0, 1} or q.sum() != 1:
        raise ValueError("Q row must be one-hot")
    N, K, _ = params["W_s"].shape
    if not 0 <= participant < N or not 0 <= item < params["W_diff"].shape[0]:
        raise IndexError("participant or item id out of range")
    if len(q) != K:
        raise ValueError(f"Q row has {len(q)} entries, model has {K} dimensions")
    _, P = _const_graph(params)
    y = fcncd_item_scores(P, [participant], [item], [int(q.argmax())], skip_mapping)
    return float(y.value[0])


def ability_profile(params: dict, participant=None, skip_mapping=False, source="mapped") -> np.ndarray:
    """Per-dimension ability values in (0, 1).

    ``source="mapped"`` averages the proficiency representation that
    enters the interaction (the mapping layer output, or ``sigmoid`` of the
    raw embedding when the mapping is skipped). Non-negative head weights
    make the item score non-decreasing in each of these features, so a
    higher value always means a higher predicted endorsement.
    ``source="embedding"`` averages ``sigmoid`` of the raw embedding.
    """
    if source not in ("mapped", "embedding"):
        raise ValueError(f"source must be 'mapped' or 'embedding', got {source!r}")
    W_s = params["W_s"]
    rows = W_s if participant is None else W_s[participant][None]
    n, K, d = rows.shape
    flat = rows.reshape(n * K, d)
    if skip_mapping or source == "embedding":
        h = expit(flat)
    else:
        h = expit(flat @ params["W_1"] + params["b_1"])
    out = h.mean(axis=1).reshape(n, K)
    return out[0] if participant is not None else out


class FCNCD(BlockRanker):
    """Forced-choice neural cognitive diagnosis model.

    Parameters
    ----------
    d, h1, h2 : int
        Embedding width, mapping width and head width.
    skip_mapping : bool
        Feed raw embeddings to the interaction (the EB ablation).
    no_monotone : bool
        Leave ``W_4`` and ``W_5`` unconstrained (the MO ablation).
    loss : {"weighted-bpr", "original-bpr", "list"}
        Block loss; the last two are the BPR and List ablations.
    lam : float
        Weight of the rank-weighted BPR loss.
    """

    def __init__(self, d=64, h1=256, h2=128, skip_mapping=False, no_monotone=False, loss="weighted-bpr",
                 lam=10.0, batch_size=32, lr=5e-4, max_epochs=100, patience=5, train_fraction=0.8,
                 split="response", weight_decay=1e-2, seed=0):
        self.d = d
        self.h1 = h1
        self.h2 = h2
        self.skip_mapping = skip_mapping
        self.no_monotone = no_monotone
        self.loss = loss
        self.lam = lam
        self.batch_size = batch_size
        self.lr = lr
        self.max_epochs = max_epochs
        self.patience = patience
        self.train_fraction = train_fraction
        self.split = split
        self.weight_decay = weight_decay
        self.seed = seed

    def _init_params(self, dataset: ResponseDataset, rng):
        if min(self.d, self.h1, self.h2) < 1:
            raise ValueError("layer widths must be at least 1")
        return fcncd_init(dataset.n_participants, dataset.n_dims, dataset.n_items,
                          self.d, self.h1, self.h2, rng, self.skip_mapping)

    def _item_scores(self, graph, P, participants, items, dims):
        return fcncd_item_scores(P, participants, items, dims, self.skip_mapping)

    def _project(self, params):
        if self.no_monotone:
            return
        for name in MONOTONE_WEIGHTS:
            np.maximum(params[name], 0.0, out=params[name])

    def _abilities(self):
        return ability_profile(self.params_, skip_mapping=self.skip_mapping)


def build_variant(name: str = "full", **kwargs) -> FCNCD:
    """FCNCD with the flags of a named ablation (``full``, ``eb``, ``mo``, ``bpr``, ``list``)."""
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
    return FCNCD(**{**VARIANTS[name], **kwargs})

"""Comparison models trained with the same loop as FCNCD.

All pairwise data handling goes through the block losses: a block with
``t`` items contributes its pairs of distinct rank, which is the same as
converting it to two-item (PICK-2) comparisons.
"""
from __future__ import annotations

import enum
import math

import numpy as np

from . import numerics as nx
from .base import BlockRanker, check_compatible, check_dataset
from .data import ResponseDataset
from .losses import neg_log_sigmoid

__all__ = [
    "BaselineKind",
    "RandomRanker",
    "MFRanker",
    "RankNetRanker",
    "NCDMRanker",
    "MUPP2PL",
    "make_baseline",
    "to_pairs",
    "mupp_2pl_probability",
    "mf_item_scores",
    "ranknet_item_scores",
    "ncdm_item_scores",
    "mupp_item_scores",
]


class BaselineKind(str, enum.Enum):
    RANDOM = "random"
    MF = "mf"
    RANKNET = "ranknet"
    NCDM_R = "ncdm-r"
    MUPP_2PL = "mupp-2pl"


def to_pairs(ranks) -> list[tuple[int, int]]:
    """Ordered ``(winner, loser)`` item positions of one block; ties dropped."""
    t = len(ranks)
    out = []
    for i in range(t):
        for j in range(i + 1, t):
            if ranks[i] > ranks[j]:
                out.append((i, j))
            elif ranks[j] > ranks[i]:
                out.append((j, i))
    return out


_TRAIN_DEFAULTS = dict(lam=10.0, batch_size=32, lr=5e-4, max_epochs=100, patience=5, train_fraction=0.8,
                       split="response", weight_decay=1e-2, seed=0)


class _Trainable(BlockRanker):
    def _set_train(self, lam, batch_size, lr, max_epochs, patience, train_fraction, split, weight_decay, seed):
        self.lam = lam
        self.batch_size = batch_size
        self.lr = lr
        self.max_epochs = max_epochs
        self.patience = patience
        self.train_fraction = train_fraction
        self.split = split
        self.weight_decay = weight_decay
        self.seed = seed


# --------------------------------------------------------------------------
# Random


class RandomRanker(BlockRanker):
    """Uniform(0, 1) item scores and abilities."""

    def __init__(self, seed=0):
        self.seed = seed

    def fit(self, X, y=None):
        X = check_dataset(X)
        self._remember_shapes(X)
        self.params_ = {}
        self.history_ = []
        self.train_mask_ = np.zeros(X.n_records, dtype=bool)
        return self

    def decision_function(self, X):
        X = check_dataset(X)
        check_compatible(self, X)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 1]))
        return rng.uniform(0.0, 1.0, size=(X.n_records, X.t))

    def _abilities(self):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 2]))
        return rng.uniform(0.0, 1.0, size=(self.n_participants_, self.n_dims_))


# --------------------------------------------------------------------------
# MF and RankNet: latent vectors, elementwise product, MLP head


def _mlp_init(width, h1, h2, rng):
    return {
        "W_1": nx.xavier_uniform(width, h1, rng), "b_1": np.zeros(h1),
        "W_2": nx.xavier_uniform(h1, h2, rng), "b_2": np.zeros(h2),
        "W_3": nx.xavier_uniform(h2, 1, rng), "b_3": np.zeros(1),
    }


def _mlp(P, x, hidden):
    f1 = hidden(nx.affine(x, P["W_1"], P["b_1"]))
    f2 = hidden(nx.affine(f1, P["W_2"], P["b_2"]))
    return nx.reshape(nx.sigmoid(nx.affine(f2, P["W_3"], P["b_3"])), (-1,))


def _latent_init(N, M, width, h1, h2, rng):
    p = {
        "H_s": nx.xavier_uniform(width, N, rng, shape=(N, width)),
        "H_e": nx.xavier_uniform(width, M, rng, shape=(M, width)),
    }
    p.update(_mlp_init(width, h1, h2, rng))
    return p


def mf_item_scores(P, participants, items) -> nx.Node:
    x = nx.take_rows(P["H_e"], items) * nx.take_rows(P["H_s"], participants)
    return _mlp(P, x, nx.sigmoid)


def ranknet_item_scores(P, participants, items) -> nx.Node:
    x = nx.take_rows(P["H_e"], items) * nx.take_rows(P["H_s"], participants)
    return _mlp(P, x, nx.relu)


class MFRanker(_Trainable):
    """Matrix factorization scorer trained with the rank-weighted BPR loss."""

    pair_loss = "weighted-bpr"
    interpretable = False

    def __init__(self, width=64, h1=256, h2=128, lam=10.0, batch_size=32, lr=5e-4, max_epochs=100, patience=5,
                 train_fraction=0.8, split="response", weight_decay=1e-2, seed=0):
        self.width = width
        self.h1 = h1
        self.h2 = h2
        self._set_train(lam, batch_size, lr, max_epochs, patience, train_fraction, split, weight_decay, seed)

    def _init_params(self, dataset, rng):
        return _latent_init(dataset.n_participants, dataset.n_items, self.width, self.h1, self.h2, rng)

    def _item_scores(self, graph, P, participants, items, dims):
        return mf_item_scores(P, participants, items)


class RankNetRanker(MFRanker):
    """MF-shaped scorer with ReLU hidden layers and a pairwise cross-entropy loss."""

    pair_loss = "cross-entropy"

    def _item_scores(self, graph, P, participants, items, dims):
        return ranknet_item_scores(P, participants, items)


# --------------------------------------------------------------------------
# NCDM-R


def ncdm_item_scores(P, participants, items, dims) -> nx.Node:
    """``MLP(q * (sigmoid(h_s) - sigmoid(h_diff)) * sigmoid(h_disc))`` with a one-hot ``q``."""
    K = P["H_s"].value.shape[1]
    q = np.zeros((len(items), K))
    q[np.arange(len(items)), dims] = 1.0
    prof = nx.sigmoid(nx.take_rows(P["H_s"], participants))
    diff = nx.sigmoid(nx.take_rows(P["H_diff"], items))
    disc = nx.sigmoid(nx.take_rows(P["H_disc"], items))
    x = (prof - diff) * disc * q
    return _mlp(P, x, nx.sigmoid)


class NCDMRanker(_Trainable):
    """Neural cognitive diagnosis scorer with RankNet pair probabilities.

    Proficiency and difficulty are ``K``-wide, discrimination is scalar,
    and the MLP weights are kept non-negative.
    """

    pair_loss = "cross-entropy"

    def __init__(self, h1=256, h2=128, lam=10.0, batch_size=32, lr=5e-4, max_epochs=100, patience=5,
                 train_fraction=0.8, split="response", weight_decay=1e-2, seed=0):
        self.h1 = h1
        self.h2 = h2
        self._set_train(lam, batch_size, lr, max_epochs, patience, train_fraction, split, weight_decay, seed)

    def _init_params(self, dataset, rng):
        N, K, M = dataset.n_participants, dataset.n_dims, dataset.n_items
        p = {
            "H_s": nx.xavier_uniform(K, N, rng, shape=(N, K)),
            "H_diff": nx.xavier_uniform(K, M, rng, shape=(M, K)),
            "H_disc": nx.xavier_uniform(1, M, rng, shape=(M, 1)),
        }
        p.update(_mlp_init(K, self.h1, self.h2, rng))
        return p

    def _item_scores(self, graph, P, participants, items, dims):
        return ncdm_item_scores(P, participants, items, dims)

    def _project(self, params):
        for name in ("W_1", "W_2", "W_3"):
            np.maximum(params[name], 0.0, out=params[name])

    def _abilities(self):
        return 1.0 / (1.0 + np.exp(-self.params_["H_s"]))


# --------------------------------------------------------------------------
# MUPP-2PL


def _softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def mupp_2pl_probability(theta_i, theta_j, a_i, a_j, b_i, b_j) -> float:
    """``P(i > j) = sigmoid(a_i theta_i - a_j theta_j + a_i b_i - a_j b_j)``."""
    z = a_i * theta_i - a_j * theta_j + a_i * b_i - a_j * b_j
    return math.exp(-neg_log_sigmoid(z))


def mupp_item_scores(P, participants, items, dims) -> nx.Node:
    """Item utilities ``a (theta_q + b)``; their differences are the pair logits."""
    N, K = P["theta"].value.shape
    theta = nx.take_rows(nx.reshape(P["theta"], (N * K, 1)), np.asarray(participants) * K + np.asarray(dims))
    a = nx.softplus(nx.take_rows(P["a_raw"], items))
    b = nx.take_rows(P["b"], items)
    return nx.reshape(a * (theta + b), (-1,))


_A_RAW_ONE = math.log(math.e - 1.0)  # softplus^-1(1)


class MUPP2PL(_Trainable):
    """Pairwise 2PL dominance model fit by penalized maximum likelihood.

    Discriminations are ``softplus`` of free parameters, so they stay
    positive; AdamW's weight decay acts as a shrinkage prior on traits.
    """

    pair_loss = "cross-entropy"

    def __init__(self, lam=10.0, batch_size=32, lr=5e-3, max_epochs=100, patience=5, train_fraction=0.8,
                 split="response", weight_decay=1e-2, seed=0):
        self._set_train(lam, batch_size, lr, max_epochs, patience, train_fraction, split, weight_decay, seed)

    def _init_params(self, dataset, rng):
        N, K, M = dataset.n_participants, dataset.n_dims, dataset.n_items
        return {
            "theta": rng.normal(0.0, 0.01, size=(N, K)),
            "a_raw": np.full((M, 1), _A_RAW_ONE),
            "b": np.zeros((M, 1)),
        }

    def _item_scores(self, graph, P, participants, items, dims):
        return mupp_item_scores(P, participants, items, dims)

    @property
    def a_(self):
        return _softplus(self.params_["a_raw"][:, 0])

    @property
    def b_(self):
        return self.params_["b"][:, 0].copy()

    @property
    def theta_(self):
        return self.params_["theta"].copy()

    def predict_pair(self, participant, item_i, item_j) -> float:
        d = self.item_dims_
        th = self.params_["theta"][participant]
        return mupp_2pl_probability(th[d[item_i]], th[d[item_j]], self.a_[item_i], self.a_[item_j],
                                    self.b_[item_i], self.b_[item_j])

    def _abilities(self):
        return self.params_["theta"].copy()


_REGISTRY = {
    BaselineKind.RANDOM: RandomRanker,
    BaselineKind.MF: MFRanker,
    BaselineKind.RANKNET: RankNetRanker,
    BaselineKind.NCDM_R: NCDMRanker,
    BaselineKind.MUPP_2PL: MUPP2PL,
}


def make_baseline(kind, **kwargs) -> BlockRanker:
    cls = _REGISTRY[BaselineKind(kind)]
    accepted = cls().get_params()
    return cls(**{k: v for k, v in kwargs.items() if k in accepted})

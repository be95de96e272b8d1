"""Estimator plumbing shared by FCNCD and the comparison models."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import numerics as nx
from .data import ResponseDataset, load_dataset, validate
from .losses import batch_block_loss
from .metrics import doa, pra, rank_matrix
from .training import EvalReport, TrainConfig, evaluate, predict_scores, train

__all__ = ["BlockRanker", "check_dataset", "check_compatible"]


def check_dataset(X) -> ResponseDataset:
    """Accept a dataset or a manifest path; reject invalid datasets."""
    if isinstance(X, (str, Path)):
        X = load_dataset(X)
    if not isinstance(X, ResponseDataset):
        raise TypeError(f"expected a ResponseDataset or manifest path, got {type(X).__name__}")
    problems = validate(X)
    if problems:
        more = f" (+{len(problems) - 3} more)" if len(problems) > 3 else ""
        raise ValueError("invalid dataset: " + "; ".join(problems[:3]) + more)
    return X


def check_compatible(estimator, X: ResponseDataset) -> None:
    check_is_fitted(estimator, "params_")
    if X.n_participants != estimator.n_participants_ or X.n_dims != estimator.n_dims_ or X.n_items != estimator.n_items_:
        raise ValueError(
            f"dataset shape (N={X.n_participants}, K={X.n_dims}, M={X.n_items}) does not match the fitted "
            f"model (N={estimator.n_participants_}, K={estimator.n_dims_}, M={estimator.n_items_})"
        )


class BlockRanker(BaseEstimator):
    """Base for models that score every item of a block and rank by score.

    Subclasses implement ``_init_params``, ``_item_scores`` and, when they
    constrain weights, ``_project``. ``fit`` takes a :class:`ResponseDataset`
    and trains on a seeded split of its records; held-out records drive
    early stopping.
    """

    pair_loss = None  # fixed loss kind; None means use the ``loss`` parameter
    interpretable = True

    # hyperparameters every trainable model shares; subclasses list them in __init__
    _train_fields = ("lam", "batch_size", "lr", "max_epochs", "patience", "train_fraction",
                     "split", "weight_decay", "seed")

    def train_config(self) -> TrainConfig:
        params = self.get_params()
        kw = {k: params[k] for k in self._train_fields if k in params}
        kw["loss"] = self.pair_loss or params.get("loss", "weighted-bpr")
        return TrainConfig(**kw)

    # -- subclass hooks -------------------------------------------------

    def _init_params(self, dataset: ResponseDataset, rng: np.random.Generator) -> dict:
        raise NotImplementedError

    def _item_scores(self, graph: nx.Graph, P: dict, participants, items, dims) -> nx.Node:
        raise NotImplementedError

    def _project(self, params: dict) -> None:
        pass

    def _block_loss(self, scores: nx.Node, ranks, config: TrainConfig) -> nx.Node:
        return batch_block_loss(scores, ranks, config.loss, config.lam)

    def _abilities(self) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no per-dimension abilities")

    # -- public API -----------------------------------------------------

    def _remember_shapes(self, X: ResponseDataset):
        self.n_participants_ = X.n_participants
        self.n_dims_ = X.n_dims
        self.n_items_ = X.n_items
        self.item_dims_ = np.asarray(X.item_dims)
        self.block_type_ = X.block_type

    def fit(self, X, y=None):
        X = check_dataset(X)
        config = self.train_config()
        self._remember_shapes(X)
        result = train(self, X, config)
        self.params_ = result.params
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.train_mask_ = result.train_mask
        self.stopped_early_ = result.stopped_early
        return self

    def decision_function(self, X) -> np.ndarray:
        """Item scores per record, ``(n_records, t)``."""
        X = check_dataset(X)
        check_compatible(self, X)
        return predict_scores(self, self.params_, X)

    def predict(self, X) -> np.ndarray:
        """Predicted rank values per record."""
        X = check_dataset(X)
        return rank_matrix(self.decision_function(X), X.block_type)

    def score(self, X, y=None) -> float:
        X = check_dataset(X)
        return pra(self.decision_function(X), X.ranks)

    def transform(self, X=None) -> np.ndarray:
        """Per-dimension ability values, ``(n_participants, n_dims)``."""
        check_is_fitted(self, "params_")
        return self._abilities()

    def held_out(self, X) -> ResponseDataset:
        """Records of ``X`` that were not used for training."""
        check_is_fitted(self, "train_mask_")
        if len(self.train_mask_) != X.n_records:
            raise ValueError("dataset differs from the one the model was fitted on")
        return X.subset(~self.train_mask_)

    def evaluate(self, X, doa_dataset=None, per_block=False) -> EvalReport:
        """PRA/LRA on ``X`` and, for interpretable models, DOA on ``doa_dataset`` (default ``X``)."""
        X = check_dataset(X)
        abilities = self.transform() if self.interpretable else None
        return evaluate(self.decision_function(X), X, abilities, doa_dataset or X, per_block)

    def doa(self, X) -> float:
        return doa(self.transform(), check_dataset(X))

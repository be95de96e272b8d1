"""Mini-batch training with AdamW, weight projection and early stopping."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as nx
from .data import ResponseDataset, block_split_mask, response_split_mask
from .losses import LOSS_KINDS
from .metrics import doa, lra, pra, rank_matrix

logger = logging.getLogger(__name__)

__all__ = ["TrainConfig", "PROFILES", "TrainResult", "EvalReport", "train", "evaluate", "make_split"]

# per-dataset presets: lambda, batch size, learning rate
PROFILES = {
    "map": {"lam": 8.0, "batch_size": 256, "lr": 1e-2},
    "bfi": {"lam": 5.0, "batch_size": 64, "lr": 5e-3},
    "sim-mole": {"lam": 10.0, "batch_size": 32, "lr": 5e-4},
}

SPLITS = ("response", "block")


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 10.0
    batch_size: int = 32
    lr: float = 5e-4
    max_epochs: int = 100
    patience: int = 5
    train_fraction: float = 0.8
    split: str = "response"
    weight_decay: float = 1e-2
    seed: int = 0
    loss: str = "weighted-bpr"

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")
        if self.loss == "weighted-bpr" and self.lam <= 0:
            raise ValueError("lambda must be positive for the weighted BPR loss")

    @classmethod
    def from_profile(cls, name: str, **overrides) -> "TrainConfig":
        if name not in PROFILES:
            raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
        return cls(**{**PROFILES[name], **overrides})


@dataclass
class TrainResult:
    params: dict
    history: list
    best_epoch: int
    train_mask: np.ndarray
    stopped_early: bool


@dataclass
class EvalReport:
    pra: float
    lra: float
    doa: float | None
    n_records: int
    per_block: list = field(default_factory=list)

    def to_dict(self, per_block: bool = False) -> dict:
        out = asdict(self)
        if not per_block:
            out.pop("per_block")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _seeds(seed: int):
    split_seq, init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(s) for s in (split_seq, init_seq, shuffle_seq))


def make_split(dataset: ResponseDataset, config: TrainConfig) -> np.ndarray:
    """Boolean training mask over records, as :func:`train` draws it."""
    split_rng, _, _ = _seeds(config.seed)
    splitter = response_split_mask if config.split == "response" else block_split_mask
    return splitter(dataset, config.train_fraction, split_rng)


def predict_scores(model, params, dataset: ResponseDataset, chunk: int = 4096) -> np.ndarray:
    """Item scores per record, ``(n_records, t)``, without building gradients."""
    items = dataset.record_items()
    t = dataset.t
    out = np.empty(items.shape)
    for start in range(0, dataset.n_records, chunk):
        sl = slice(start, start + chunk)
        g = nx.Graph()
        leaves = {k: g.const(v) for k, v in params.items()}
        p = np.repeat(dataset.participants[sl], t)
        it = items[sl].reshape(-1)
        out[sl] = model._item_scores(g, leaves, p, it, model.item_dims_[it]).value.reshape(-1, t)
    return out


def train(model, dataset: ResponseDataset, config: TrainConfig) -> TrainResult:
    """Fit ``model`` parameters on a seeded split of ``dataset``.

    Each epoch shuffles the training records, takes one AdamW step per
    mini-batch of blocks and projects constrained weights. Held-out PRA is
    tracked after every epoch and the best epoch's parameters are returned.
    """
    train_mask = make_split(dataset, config)
    train_set = dataset.subset(train_mask)
    test_set = dataset.subset(~train_mask)
    if train_set.n_records == 0:
        raise ValueError("empty training split")
    monitor = test_set if test_set.n_records else train_set
    _, init_rng, shuffle_rng = _seeds(config.seed)

    params = model._init_params(dataset, init_rng)
    model._project(params)
    opt = nx.AdamW(lr=config.lr, weight_decay=config.weight_decay)

    items = train_set.record_items()
    parts = train_set.participants
    ranks = train_set.ranks
    t = dataset.t
    n = train_set.n_records

    history = []
    best_pra, best_epoch, stale = -np.inf, 0, 0
    best_params = {k: v.copy() for k, v in params.items()}
    stopped = False
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            p = np.repeat(parts[idx], t)
            it = items[idx].reshape(-1)
            dims = model.item_dims_[it]

            def build(g, leaves, p=p, it=it, dims=dims, r=ranks[idx]):
                scores = nx.reshape(model._item_scores(g, leaves, p, it, dims), r.shape)
                return model._block_loss(scores, r, config)

            loss, grads = nx.forward_backward(build, params, check_inputs=False, sparse=True)
            opt.update(params, grads)
            model._project(params)
            total += loss * len(idx)
        scores = predict_scores(model, params, monitor)
        epoch_pra = pra(scores, monitor.ranks)
        epoch_lra = lra(rank_matrix(scores, monitor.block_type), monitor.ranks)
        history.append({"epoch": epoch, "loss": total / n, "pra": epoch_pra, "lra": epoch_lra})
        logger.info("epoch %d loss %.5f pra %.4f lra %.4f", epoch, total / n, epoch_pra, epoch_lra)
        if epoch_pra > best_pra:
            best_pra, best_epoch, stale = epoch_pra, epoch, 0
            best_params = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
            if stale >= config.patience:
                stopped = True
                break
    return TrainResult(best_params, history, best_epoch, train_mask, stopped)


def evaluate(scores, dataset: ResponseDataset, abilities=None, doa_dataset=None, per_block=False) -> EvalReport:
    """PRA and LRA on ``dataset``; DOA on ``doa_dataset`` when abilities are given."""
    predicted = rank_matrix(scores, dataset.block_type)
    report = EvalReport(
        pra=pra(scores, dataset.ranks),
        lra=lra(predicted, dataset.ranks),
        doa=None if abilities is None else doa(abilities, doa_dataset if doa_dataset is not None else dataset),
        n_records=dataset.n_records,
    )
    if per_block:
        from .metrics import pair_accuracy

        acc = pair_accuracy(scores, dataset.ranks)
        exact = (predicted == dataset.ranks).all(axis=1)
        report.per_block = [
            {
                "participant_id": int(dataset.participants[r]),
                "block_id": int(dataset.block_ids[r]),
                "pair_accuracy": float(acc[r]),
                "exact": bool(exact[r]),
            }
            for r in range(dataset.n_records)
        ]
    return report

"""Synthetic forced-choice data with known traits and item parameters.

Two Luce response laws are available. ``"logit"`` (default) uses item
utilities ``u = a (theta - b)``: the most-conforming item is drawn with
probability proportional to ``exp(u)`` and the least-conforming one among
the rest proportionally to ``exp(-u)``, so any item pair follows the
logistic pairwise law of MUPP-2PL. ``"endorsement"`` uses 2PL endorsement
probabilities ``p = sigmoid(u)`` as Luce strengths for "most" and
``1 - p`` for "least".
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import BlockType, RankVector, ResponseDataset, save_dataset

__all__ = [
    "SimConfig",
    "SimTruth",
    "sample_item_params",
    "sample_traits",
    "luce_strengths",
    "mole_probabilities",
    "simulate_mole_response",
    "simulate_rank_response",
    "simulate_responses",
    "build_blocks",
    "generate",
    "write_simulation",
]

RESPONSE_MODELS = ("logit", "endorsement")


@dataclass(frozen=True)
class SimConfig:
    n_participants: int = 1000
    n_dims: int = 24
    n_items: int = 480
    n_blocks: int = 120
    items_per_block: int = 4
    block_type: str = "MOLE"
    disc_low: float = 0.75
    disc_high: float = 2.25
    diff_mean: float = 0.0
    diff_sd: float = 0.5
    trait_cov: float = 0.5
    response_model: str = "logit"
    seed: int = 0

    def __post_init__(self):
        if min(self.n_participants, self.n_dims, self.n_items, self.n_blocks) < 1:
            raise ValueError("counts must be positive")
        if self.n_items != self.n_blocks * self.items_per_block:
            raise ValueError(f"n_items ({self.n_items}) must equal n_blocks * items_per_block "
                             f"({self.n_blocks} * {self.items_per_block})")
        if self.items_per_block > self.n_dims:
            raise ValueError("a block needs items from distinct dimensions, so t <= n_dims")
        if not 0 < self.disc_low < self.disc_high:
            raise ValueError("need 0 < disc_low < disc_high")
        if self.diff_sd <= 0:
            raise ValueError("diff_sd must be positive")
        if not -1 < self.trait_cov < 1:
            raise ValueError("trait_cov must lie in (-1, 1)")
        if self.response_model not in RESPONSE_MODELS:
            raise ValueError(f"response_model must be one of {RESPONSE_MODELS}")
        bt = BlockType(self.block_type)
        if bt is BlockType.PICK:
            raise ValueError("PICK simulation is not supported")
        if bt is BlockType.MOLE and self.items_per_block < 3:
            raise ValueError("MOLE blocks need at least 3 items")
        if self.items_per_block < 2:
            raise ValueError("blocks need at least 2 items")

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        raw = json.loads(Path(path).read_text())
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True, eq=False)
class SimTruth:
    theta: np.ndarray  # (N, K)
    a: np.ndarray  # (M,)
    b: np.ndarray  # (M,)


def sample_item_params(config: SimConfig, rng: np.random.Generator):
    """Discrimination ~ Uniform(low, high); difficulty ~ Normal(mean, sd)."""
    a = rng.uniform(config.disc_low, config.disc_high, size=config.n_items)
    b = rng.normal(config.diff_mean, config.diff_sd, size=config.n_items)
    return a, b


def sample_traits(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Rows from MVN(0, S) with unit variances and constant covariance."""
    K = config.n_dims
    cov = np.full((K, K), config.trait_cov)
    np.fill_diagonal(cov, 1.0)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError(f"trait covariance {config.trait_cov} is not positive definite for K={K}") from None
    z = rng.standard_normal((config.n_participants, K))
    return z @ chol.T


def luce_strengths(utility, response_model: str = "logit"):
    """Luce weights ``(most, least)`` for item utilities ``a (theta - b)``."""
    u = np.asarray(utility, dtype=np.float64)
    if response_model == "logit":
        # shift for stability; Luce ratios are scale free
        c = u.max(axis=-1, keepdims=True)
        return np.exp(u - c), np.exp(-(u - u.min(axis=-1, keepdims=True)))
    if response_model == "endorsement":
        p = 1.0 / (1.0 + np.exp(-u))
        return p, 1.0 - p
    raise ValueError(f"unknown response model {response_model!r}")


def mole_probabilities(most_w, least_w):
    """Closed-form ``P(most = i)`` and ``P(least = j)`` marginals.

    ``most_w`` and ``least_w`` are Luce weights over the block items; the
    least item is drawn from the items other than the most one.
    """
    most_w = np.asarray(most_w, dtype=np.float64)
    least_w = np.asarray(least_w, dtype=np.float64)
    p_most = most_w / most_w.sum()
    t = len(most_w)
    p_least = np.zeros(t)
    for i in range(t):
        rest = least_w.copy()
        rest[i] = 0.0
        p_least += p_most[i] * rest / rest.sum()
    return p_most, p_least


def _block_utilities(theta_row, items, item_dims, a, b):
    items = np.asarray(items)
    return a[items] * (np.asarray(theta_row)[item_dims[items]] - b[items])


def simulate_mole_response(theta_row, items, item_dims, a, b, rng, response_model="logit") -> RankVector:
    """One MOLE response for a participant and block."""
    t = len(items)
    if t < 3:
        raise ValueError("MOLE blocks need at least 3 items")
    most_w, least_w = luce_strengths(_block_utilities(theta_row, items, item_dims, a, b), response_model)
    most = rng.choice(t, p=most_w / most_w.sum())
    rest = least_w.copy()
    rest[most] = 0.0
    least = rng.choice(t, p=rest / rest.sum())
    values = [2] * t
    values[most] = 3
    values[least] = 1
    return RankVector(BlockType.MOLE, values)


def simulate_rank_response(theta_row, items, item_dims, a, b, rng, response_model="logit") -> RankVector:
    """Full ranking by sequential Luce draws, best first."""
    t = len(items)
    if t < 2:
        raise ValueError("RANK blocks need at least 2 items")
    w, _ = luce_strengths(_block_utilities(theta_row, items, item_dims, a, b), response_model)
    w = w.copy()
    values = [0] * t
    for pos in range(t):
        i = rng.choice(t, p=w / w.sum())
        values[i] = t - pos
        w[i] = 0.0
    return RankVector(BlockType.RANK, values)


def build_blocks(item_dims: np.ndarray, n_blocks: int, t: int, rng: np.random.Generator) -> np.ndarray:
    """Group items into blocks whose items come from distinct dimensions.

    Each block takes one unused item from each of the ``t`` dimensions with
    the most unused items left (random tie-break), which always succeeds
    when items are spread evenly over dimensions.
    """
    K = int(item_dims.max()) + 1
    pools = [list(rng.permutation(np.flatnonzero(item_dims == k))) for k in range(K)]
    blocks = np.empty((n_blocks, t), dtype=np.int64)
    for l in range(n_blocks):
        remaining = np.array([len(p) for p in pools])
        order = np.lexsort((rng.random(K), -remaining))
        dims = order[:t]
        if (remaining[dims] == 0).any():
            raise ValueError("not enough dimensions with unused items to fill a block")
        blocks[l] = [pools[k].pop() for k in sorted(dims)]
    return blocks


def generate(config: SimConfig) -> tuple[ResponseDataset, SimTruth]:
    """Sample parameters, traits, blocks and one response per (participant, block)."""
    cfg = config
    root = np.random.SeedSequence(cfg.seed)
    s_items, s_traits, s_blocks, s_resp = root.spawn(4)
    a, b = sample_item_params(cfg, np.random.default_rng(s_items))
    theta = sample_traits(cfg, np.random.default_rng(s_traits))
    item_dims = np.arange(cfg.n_items) % cfg.n_dims
    blocks = build_blocks(item_dims, cfg.n_blocks, cfg.items_per_block, np.random.default_rng(s_blocks))

    block_type = BlockType(cfg.block_type)
    N, L, t = cfg.n_participants, cfg.n_blocks, cfg.items_per_block
    ranks = np.empty((N, L, t), dtype=np.int64)
    for n, seq in enumerate(s_resp.spawn(N)):
        rng = np.random.default_rng(seq)
        ranks[n] = simulate_responses(theta[n], blocks, item_dims, a, b, rng, block_type, cfg.response_model)
    dataset = ResponseDataset(
        n_participants=N,
        n_dims=cfg.n_dims,
        item_dims=item_dims,
        blocks=blocks,
        block_type=block_type,
        participants=np.repeat(np.arange(N), L),
        block_ids=np.tile(np.arange(L), N),
        ranks=ranks.reshape(N * L, t),
    )
    return dataset, SimTruth(theta=theta, a=a, b=b)


def _sample_rows(weights, rng):
    """One categorical draw per row of ``weights``."""
    cdf = np.cumsum(weights / weights.sum(axis=1, keepdims=True), axis=1)
    u = rng.random((weights.shape[0], 1))
    return np.minimum((cdf < u).sum(axis=1), weights.shape[1] - 1)


def simulate_responses(theta_row, blocks, item_dims, a, b, rng, block_type=BlockType.MOLE, response_model="logit"):
    """Rank values of one participant for every row of ``blocks`` (``(L, t)`` item ids)."""
    block_type = BlockType(block_type)
    u = a[blocks] * (theta_row[item_dims[blocks]] - b[blocks])
    most_w, least_w = luce_strengths(u, response_model)
    L, t = blocks.shape
    rows = np.arange(L)
    out = np.empty((L, t), dtype=np.int64)
    if block_type is BlockType.MOLE:
        most = _sample_rows(most_w, rng)
        rest = least_w.copy()
        rest[rows, most] = 0.0
        least = _sample_rows(rest, rng)
        out[:] = 2
        out[rows, most] = 3
        out[rows, least] = 1
        return out
    w = most_w.copy()
    for pos in range(t):
        pick = _sample_rows(w, rng)
        out[rows, pick] = t - pos
        w[rows, pick] = 0.0
    return out


def write_simulation(config: SimConfig, out_dir) -> Path:
    """Generate and write dataset files, truth CSVs and the manifest."""
    dataset, truth = generate(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "truth_theta.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant_id"] + [f"theta_{k}" for k in range(config.n_dims)])
        for n, row in enumerate(truth.theta):
            w.writerow([n] + [repr(float(x)) for x in row])
    with open(out / "truth_items.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "a", "b"])
        for m in range(config.n_items):
            w.writerow([m, repr(float(truth.a[m])), repr(float(truth.b[m]))])
    (out / "sim_config.json").write_text(json.dumps(asdict(config), indent=2, sort_keys=True) + "\n")
    return save_dataset(
        dataset, out, name="simulated",
        truth={"theta": "truth_theta.csv", "items": "truth_items.csv", "config": "sim_config.json"},
    )


def load_truth(manifest_path) -> SimTruth | None:
    """Ground truth referenced by a manifest, or ``None``."""
    manifest_path = Path(manifest_path)
    man = json.loads(manifest_path.read_text())
    truth = man.get("truth")
    if not truth:
        return None
    base = manifest_path.parent
    theta = np.loadtxt(base / truth["theta"], delimiter=",", skiprows=1, ndmin=2)[:, 1:]
    items = np.loadtxt(base / truth["items"], delimiter=",", skiprows=1, ndmin=2)
    return SimTruth(theta=theta, a=items[:, 1], b=items[:, 2])

"""Participants, items, blocks and forced-choice responses.

A dataset keeps its responses as three aligned arrays (participant ids,
block ids, and a ``(n_records, t)`` matrix of rank values) so models can
batch over them directly. Rank values follow the block item order.
"""
from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "BlockType",
    "DatasetError",
    "RankVector",
    "ResponseDataset",
    "encode_response",
    "validate",
    "validate_rank_values",
    "split_by_block",
    "split_responses",
    "block_split_mask",
    "response_split_mask",
    "load_dataset",
    "save_dataset",
]


class DatasetError(ValueError):
    """Malformed dataset files or contents."""


class BlockType(str, enum.Enum):
    PICK = "PICK"
    RANK = "RANK"
    MOLE = "MOLE"


def validate_rank_values(block_type: BlockType, values) -> list[str]:
    """Rule violations of a single rank vector (empty when valid)."""
    block_type = BlockType(block_type)
    v = [int(x) for x in values]
    t = len(v)
    if t < 2:
        return ["block needs at least 2 items"]
    if block_type is BlockType.RANK:
        if sorted(v) != list(range(1, t + 1)):
            return ["RANK values are not a permutation of 1..t"]
        return []
    if block_type is BlockType.PICK:
        if v.count(t) != 1:
            return ["PICK needs exactly one chosen item"]
        if v.count(1) != t - 1:
            return ["PICK non-chosen items must be 1"]
        return []
    out = []
    if t < 3:
        return ["MOLE needs t >= 3"]
    if v.count(3) > 1:
        out.append("duplicate most-conforming")
    elif v.count(3) == 0:
        out.append("missing most-conforming")
    if v.count(1) > 1:
        out.append("duplicate least-conforming")
    elif v.count(1) == 0:
        out.append("missing least-conforming")
    if any(x not in (1, 2, 3) for x in v):
        out.append("MOLE values must be 1, 2 or 3")
    return out


@dataclass(frozen=True)
class RankVector:
    """Encoded ranking of one block; higher value means more conforming."""

    block_type: BlockType
    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "block_type", BlockType(self.block_type))
        object.__setattr__(self, "values", tuple(int(x) for x in self.values))
        problems = validate_rank_values(self.block_type, self.values)
        if problems:
            raise ValueError(f"invalid {self.block_type.value} rank vector {list(self.values)}: {problems[0]}")

    def __len__(self):
        return len(self.values)


def encode_response(block_type: BlockType, t: int, raw) -> RankVector:
    """Turn a raw choice into a rank vector.

    ``raw`` is the chosen item index for PICK, the full preference order
    (best first) for RANK, and ``(most, least)`` for MOLE.
    """
    block_type = BlockType(block_type)

    def check(i):
        if not 0 <= int(i) < t:
            raise ValueError(f"item index {i} out of range for t={t}")
        return int(i)

    if block_type is BlockType.PICK:
        choice = check(raw)
        return RankVector(block_type, [t if i == choice else 1 for i in range(t)])
    if block_type is BlockType.RANK:
        order = [check(i) for i in raw]
        if sorted(order) != list(range(t)):
            raise ValueError(f"preference order {order} is not a permutation of 0..{t - 1}")
        values = [0] * t
        for pos, item in enumerate(order):
            values[item] = t - pos
        return RankVector(block_type, values)
    most, least = (check(i) for i in raw)
    if most == least:
        raise ValueError("MOLE most and least must differ")
    values = [2] * t
    values[most] = 3
    values[least] = 1
    return RankVector(block_type, values)


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ResponseDataset:
    """Counts, Q-matrix (as one dimension id per item), blocks and responses.

    ``blocks`` is an ``(L, t)`` item-id matrix. ``participants``,
    ``block_ids`` and ``ranks`` are aligned per record.
    """

    n_participants: int
    n_dims: int
    item_dims: np.ndarray
    blocks: np.ndarray
    block_type: BlockType
    participants: np.ndarray
    block_ids: np.ndarray
    ranks: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "block_type", BlockType(self.block_type))
        object.__setattr__(self, "item_dims", _readonly(self.item_dims, np.int64))
        blocks = np.asarray(self.blocks, dtype=np.int64)
        if blocks.ndim != 2:
            raise DatasetError("blocks must be an (L, t) matrix")
        object.__setattr__(self, "blocks", _readonly(blocks, np.int64))
        object.__setattr__(self, "participants", _readonly(self.participants, np.int64))
        object.__setattr__(self, "block_ids", _readonly(self.block_ids, np.int64))
        ranks = np.asarray(self.ranks, dtype=np.int64).reshape(-1, blocks.shape[1])
        object.__setattr__(self, "ranks", _readonly(ranks, np.int64))
        if not (len(self.participants) == len(self.block_ids) == len(self.ranks)):
            raise DatasetError("record arrays have different lengths")

    @property
    def n_items(self) -> int:
        return len(self.item_dims)

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def t(self) -> int:
        return self.blocks.shape[1]

    @property
    def n_records(self) -> int:
        return len(self.participants)

    @property
    def q_matrix(self) -> np.ndarray:
        q = np.zeros((self.n_items, self.n_dims), dtype=np.int64)
        q[np.arange(self.n_items), self.item_dims] = 1
        return q

    def record_items(self) -> np.ndarray:
        """Item ids per record, ``(n_records, t)``."""
        return self.blocks[self.block_ids]

    def rank_vector(self, i: int) -> RankVector:
        return RankVector(self.block_type, self.ranks[i])

    def subset(self, mask_or_index) -> "ResponseDataset":
        idx = np.asarray(mask_or_index)
        return ResponseDataset(
            self.n_participants, self.n_dims, self.item_dims, self.blocks, self.block_type,
            self.participants[idx], self.block_ids[idx], self.ranks[idx], dict(self.meta),
        )

    def equals(self, other: "ResponseDataset") -> bool:
        return (
            self.n_participants == other.n_participants
            and self.n_dims == other.n_dims
            and self.block_type == other.block_type
            and np.array_equal(self.item_dims, other.item_dims)
            and np.array_equal(self.blocks, other.blocks)
            and np.array_equal(self.participants, other.participants)
            and np.array_equal(self.block_ids, other.block_ids)
            and np.array_equal(self.ranks, other.ranks)
        )

    @classmethod
    def from_q_matrix(cls, q, blocks, block_type, n_participants, records) -> "ResponseDataset":
        """Build from a Q-matrix and ``(participant, block, values)`` records.

        Multi-hot Q rows are rejected since each item measures one dimension.
        """
        q = np.asarray(q)
        bad = np.flatnonzero(q.sum(axis=1) != 1)
        if len(bad):
            raise DatasetError(f"item {bad[0]} not unidimensional")
        blocks = np.asarray(blocks)
        records = list(records)
        return cls(
            n_participants=n_participants,
            n_dims=q.shape[1],
            item_dims=q.argmax(axis=1),
            blocks=blocks,
            block_type=block_type,
            participants=[r[0] for r in records],
            block_ids=[r[1] for r in records],
            ranks=np.array([list(r[2]) for r in records], dtype=np.int64).reshape(-1, blocks.shape[1]),
        )


def validate(dataset: ResponseDataset, q_matrix=None) -> list[str]:
    """All invariant violations, one message per problem."""
    out = []
    if q_matrix is not None:
        q = np.asarray(q_matrix)
        for m, s in enumerate(q.sum(axis=1)):
            if s != 1:
                out.append(f"Q row {m}: item not unidimensional")
    ds = dataset
    if ds.t < 2:
        out.append("blocks need at least 2 items")
    if ds.n_dims < 1 or ds.n_participants < 1:
        out.append("counts must be positive")
    bad_dims = np.flatnonzero((ds.item_dims < 0) | (ds.item_dims >= ds.n_dims))
    for m in bad_dims:
        out.append(f"item {m}: dimension {ds.item_dims[m]} out of range")
    for l, items in enumerate(ds.blocks):
        if ((items < 0) | (items >= ds.n_items)).any():
            out.append(f"block {l}: item id out of range")
            continue
        if len(set(items.tolist())) != len(items):
            out.append(f"block {l}: duplicate item")
        dims = ds.item_dims[items]
        if len(set(dims.tolist())) != len(dims):
            out.append(f"block {l}: items share a dimension")
    bad_p = (ds.participants < 0) | (ds.participants >= ds.n_participants)
    bad_b = (ds.block_ids < 0) | (ds.block_ids >= ds.n_blocks)
    for r in np.flatnonzero(bad_p):
        out.append(f"record {r}: participant {ds.participants[r]} out of range")
    for r in np.flatnonzero(bad_b):
        out.append(f"record {r}: block {ds.block_ids[r]} out of range")
    key = ds.participants * max(ds.n_blocks, 1) + ds.block_ids
    _, first, counts = np.unique(key, return_index=True, return_counts=True)
    for r in first[counts > 1]:
        out.append(f"record {r}: duplicate response for participant {ds.participants[r]}, block {ds.block_ids[r]}")
    # validate each distinct rank pattern once
    patterns, inverse = np.unique(ds.ranks, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for k, pat in enumerate(patterns):
        problems = validate_rank_values(ds.block_type, pat)
        if problems:
            r = int(np.flatnonzero(inverse == k)[0])
            out.extend(f"record {r}: {p}" for p in problems)
    return out


def block_split_mask(dataset: ResponseDataset, train_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Training-record mask for a random partition of block ids."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    L = dataset.n_blocks
    if L < 2:
        raise ValueError("need at least two blocks to split")
    n_train = min(max(int(round(train_fraction * L)), 1), L - 1)
    perm = rng.permutation(L)
    in_train = np.zeros(L, dtype=bool)
    in_train[perm[:n_train]] = True
    return in_train[dataset.block_ids]


def response_split_mask(dataset: ResponseDataset, train_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Training-record mask splitting each participant's block responses.

    Whole block responses move together. A participant with at least two
    responses keeps at least one on each side.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    n = dataset.n_records
    if n < 2:
        raise ValueError("need at least two records to split")
    keys = rng.random(n)
    order = np.lexsort((keys, dataset.participants))
    parts = dataset.participants[order]
    starts = np.r_[0, np.flatnonzero(np.diff(parts)) + 1]
    sizes = np.diff(np.r_[starts, n])
    pos = np.arange(n) - np.repeat(starts, sizes)
    n_train = np.clip(np.rint(train_fraction * sizes), 1, np.maximum(sizes - 1, 1))
    mask = np.zeros(n, dtype=bool)
    mask[order] = pos < np.repeat(n_train, sizes)
    return mask


def split_by_block(dataset: ResponseDataset, train_fraction: float, rng: np.random.Generator):
    """Partition block ids at random; every record follows its block."""
    mask = block_split_mask(dataset, train_fraction, rng)
    return dataset.subset(mask), dataset.subset(~mask)


def split_responses(dataset: ResponseDataset, train_fraction: float, rng: np.random.Generator):
    """Split each participant's block responses ``train_fraction : rest``."""
    mask = response_split_mask(dataset, train_fraction, rng)
    return dataset.subset(mask), dataset.subset(~mask)


# --------------------------------------------------------------------------
# files


def _read_csv(path: Path, min_cols: int):
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh]
    data_lines = [(i + 1, ln) for i, ln in enumerate(lines) if not ln.startswith("#")]
    reader = csv.reader(ln for _, ln in data_lines)
    header = None
    for (lineno, _), row in zip(data_lines, reader):
        if not row:
            continue
        if header is None:
            header = row
            continue
        if len(row) != len(header):
            raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            rows.append((lineno, [int(x) for x in row]))
        except ValueError:
            bad = next(j for j, x in enumerate(row) if not x.strip().lstrip("-").isdigit())
            raise DatasetError(f"{path}:{lineno}: field {header[bad]!r} is not an integer: {row[bad]!r}") from None
    if header is None or len(header) < min_cols:
        raise DatasetError(f"{path}: missing or short header")
    return header, lines, rows


def load_dataset(manifest_path) -> ResponseDataset:
    """Load a dataset from its JSON manifest and CSV files."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"dataset manifest not found: {manifest_path}")
    try:
        man = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetError(f"{manifest_path}: invalid JSON ({e})") from None
    base = manifest_path.parent
    files = man.get("files", {})
    try:
        paths = {k: base / files[k] for k in ("items", "blocks", "responses")}
        N, K, M, L, t = (int(man[k]) for k in ("n_participants", "n_dims", "n_items", "n_blocks", "items_per_block"))
        block_type = BlockType(man["block_type"])
    except (KeyError, ValueError) as e:
        raise DatasetError(f"{manifest_path}: bad or missing manifest field {e}") from None
    for p in paths.values():
        if not p.exists():
            raise FileNotFoundError(f"dataset file not found: {p}")

    _, _, item_rows = _read_csv(paths["items"], 2)
    item_dims = np.full(M, -1, dtype=np.int64)
    for lineno, (item, dim) in item_rows:
        if not 0 <= item < M:
            raise DatasetError(f"{paths['items']}:{lineno}: item id {item} outside 0..{M - 1}")
        if not 0 <= dim < K:
            raise DatasetError(f"{paths['items']}:{lineno}: dimension {dim} outside 0..{K - 1} (manifest n_dims={K})")
        item_dims[item] = dim
    if (item_dims < 0).any():
        raise DatasetError(f"{paths['items']}: no dimension for item {int(np.flatnonzero(item_dims < 0)[0])}")
    if len(np.unique(item_dims)) != K:
        raise DatasetError(f"{paths['items']}: Q-matrix covers {len(np.unique(item_dims))} dimensions, manifest says {K}")

    header, lines, block_rows = _read_csv(paths["blocks"], 2)
    declared = [ln.split("=", 1)[1].strip() for ln in lines if ln.startswith("#block_type=")]
    if declared and declared[0] != block_type.value:
        raise DatasetError(f"{paths['blocks']}: block type {declared[0]} differs from manifest {block_type.value}")
    if len(header) - 1 != t:
        raise DatasetError(f"{paths['blocks']}: {len(header) - 1} item columns, manifest says t={t}")
    blocks = np.full((L, t), -1, dtype=np.int64)
    for lineno, row in block_rows:
        if not 0 <= row[0] < L:
            raise DatasetError(f"{paths['blocks']}:{lineno}: block id {row[0]} outside 0..{L - 1}")
        blocks[row[0]] = row[1:]
    if (blocks < 0).any():
        raise DatasetError(f"{paths['blocks']}: missing block {int(np.flatnonzero((blocks < 0).any(axis=1))[0])}")

    header, _, resp_rows = _read_csv(paths["responses"], 3)
    if len(header) - 2 != t:
        raise DatasetError(f"{paths['responses']}: {len(header) - 2} rank columns, manifest says t={t}")
    arr = np.array([r for _, r in resp_rows], dtype=np.int64).reshape(-1, t + 2)
    for (lineno, row) in resp_rows:
        if not 0 <= row[1] < L:
            raise DatasetError(f"{paths['responses']}:{lineno}: unknown block id {row[1]}")
        if not 0 <= row[0] < N:
            raise DatasetError(f"{paths['responses']}:{lineno}: unknown participant id {row[0]}")
    return ResponseDataset(
        n_participants=N, n_dims=K, item_dims=item_dims, blocks=blocks, block_type=block_type,
        participants=arr[:, 0], block_ids=arr[:, 1], ranks=arr[:, 2:],
        meta={k: v for k, v in man.items() if k in ("name", "truth")},
    )


def save_dataset(dataset: ResponseDataset, out_dir, name: str = "dataset", truth: dict | None = None) -> Path:
    """Write items/blocks/responses CSVs plus ``manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = dataset
    with open(out / "items.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "dimension_id"])
        w.writerows([m, int(k)] for m, k in enumerate(ds.item_dims))
    with open(out / "blocks.csv", "w", newline="") as fh:
        fh.write(f"#block_type={ds.block_type.value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block_id"] + [f"item_id_{i + 1}" for i in range(ds.t)])
        w.writerows([l] + row.tolist() for l, row in enumerate(ds.blocks))
    with open(out / "responses.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant_id", "block_id"] + [f"v_{i + 1}" for i in range(ds.t)])
        table = np.column_stack([ds.participants, ds.block_ids, ds.ranks])
        w.writerows(table.tolist())
    manifest = {
        "name": name,
        "n_participants": ds.n_participants,
        "n_dims": ds.n_dims,
        "n_items": ds.n_items,
        "n_blocks": ds.n_blocks,
        "items_per_block": ds.t,
        "block_type": ds.block_type.value,
        "n_records": ds.n_records,
        "files": {"items": "items.csv", "blocks": "blocks.csv", "responses": "responses.csv"},
    }
    if truth:
        manifest["truth"] = truth
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path

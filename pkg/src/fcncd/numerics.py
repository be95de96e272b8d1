"""Dense float64 arrays with a small reverse-mode autodiff tape.

Arrays are plain ``numpy.ndarray`` objects in float64. A :class:`Graph`
records every primitive applied to its nodes in creation order, which is
already a topological order, so the backward pass is a single reverse sweep.

Only the primitives the ranking models need are provided.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

__all__ = [
    "NonFiniteError",
    "as_array",
    "Graph",
    "Node",
    "affine",
    "sigmoid",
    "relu",
    "softplus",
    "log",
    "mean",
    "total",
    "concat",
    "take_rows",
    "take_cols",
    "take_along",
    "reshape",
    "masked_logsumexp",
    "forward_backward",
    "xavier_uniform",
    "AdamW",
    "adamw_step",
    "clip_nonnegative",
]


class NonFiniteError(FloatingPointError):
    """Raised when an array holds NaN or Inf."""


class RowGrad:
    """Gradient that is zero except on some rows of ``shape``.

    Rows are indexed in the ``(-1, shape[-1])`` view; ``index`` may repeat.
    """

    __slots__ = ("index", "rows", "shape")
    __array_ufunc__ = None  # make ndarray + RowGrad defer to __radd__

    def __init__(self, index, rows, shape):
        self.index = index
        self.rows = rows
        self.shape = tuple(shape)

    def __add__(self, other):
        if isinstance(other, RowGrad):
            return RowGrad(np.concatenate([self.index, other.index]),
                           np.concatenate([self.rows, other.rows]), self.shape)
        return other + self.dense()

    __radd__ = __add__

    def reshape(self, shape):
        if tuple(shape)[-1] != self.shape[-1]:
            return self.dense().reshape(shape)
        return RowGrad(self.index, self.rows, shape)

    def coalesce(self):
        """Unique sorted row ids and their summed rows."""
        uniq, inv = np.unique(self.index, return_inverse=True)
        summed = np.zeros((len(uniq), self.rows.shape[1]))
        np.add.at(summed, inv, self.rows)
        return uniq, summed

    def dense(self) -> np.ndarray:
        full = np.zeros((int(np.prod(self.shape[:-1])), self.shape[-1]))
        np.add.at(full, self.index, self.rows)
        return full.reshape(self.shape)


def as_array(x, name: str = "array") -> np.ndarray:
    """Convert to a float64 array and reject non-finite values."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


# --------------------------------------------------------------------------
# graph


class Node:
    __slots__ = ("graph", "value", "parents", "backward_fn", "name", "index")

    def __init__(self, graph, value, parents=(), backward_fn=None, name=None):
        self.graph = graph
        self.value = value
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name
        self.index = len(graph.nodes)
        graph.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Node(#{self.index}, shape={self.value.shape}, name={self.name!r})"


class Graph:
    """A recorded computation.

    Leaves created with :meth:`param` receive gradients; leaves created
    with :meth:`const` do not.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}

    def param(self, name: str, value, check: bool = True) -> Node:
        if name in self.params:
            raise ValueError(f"parameter {name!r} bound twice")
        value = as_array(value, name) if check else value
        node = Node(self, value, name=name)
        self.params[name] = node
        return node

    def const(self, value) -> Node:
        return Node(self, as_array(value))

    def _wrap(self, x) -> Node:
        if isinstance(x, Node):
            if x.graph is not self:
                raise ValueError("node belongs to a different graph")
            return x
        return self.const(x)

    def backward(self, output: Node, sparse: bool = False) -> dict[str, np.ndarray]:
        """Gradients of a scalar ``output`` for every parameter leaf.

        With ``sparse=True`` embedding gradients stay :class:`RowGrad`.
        """
        if output.value.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {output.value.shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[output.index] = np.ones_like(output.value)
        for node in reversed(self.nodes[: output.index + 1]):
            g = grads[node.index]
            if g is None or node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None:
                    continue
                if grads[parent.index] is None:
                    grads[parent.index] = pg
                else:
                    grads[parent.index] = grads[parent.index] + pg
        out = {}
        for name, node in self.params.items():
            g = grads[node.index]
            if g is None:
                g = np.zeros_like(node.value)
            elif isinstance(g, RowGrad):
                g = g if sparse else g.dense()
            out[name] = g
        return out


def _op(graph: Graph, value, parents, backward_fn) -> Node:
    if not np.isfinite(value).all():
        raise NonFiniteError("primitive produced NaN or Inf")
    return Node(graph, value, tuple(parents), backward_fn)


def _graph_of(*xs) -> Graph:
    for x in xs:
        if isinstance(x, Node):
            return x.graph
    raise TypeError("at least one operand must be a Node")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --------------------------------------------------------------------------
# primitives


def add(a, b) -> Node:
    g = _graph_of(a, b)
    a, b = g._wrap(a), g._wrap(b)
    sa, sb = a.value.shape, b.value.shape
    return _op(g, a.value + b.value, (a, b), lambda gr: (_unbroadcast(gr, sa), _unbroadcast(gr, sb)))


def sub(a, b) -> Node:
    g = _graph_of(a, b)
    a, b = g._wrap(a), g._wrap(b)
    sa, sb = a.value.shape, b.value.shape
    return _op(g, a.value - b.value, (a, b), lambda gr: (_unbroadcast(gr, sa), -_unbroadcast(gr, sb)))


def mul(a, b) -> Node:
    """Elementwise product with numpy broadcasting."""
    g = _graph_of(a, b)
    a, b = g._wrap(a), g._wrap(b)
    av, bv = a.value, b.value
    return _op(
        g,
        av * bv,
        (a, b),
        lambda gr: (_unbroadcast(gr * bv, av.shape), _unbroadcast(gr * av, bv.shape)),
    )


def neg(a: Node) -> Node:
    return _op(a.graph, -a.value, (a,), lambda gr: (-gr,))


def affine(x: Node, w: Node, b: Node | None = None) -> Node:
    """``x @ w + b`` for a batch ``x`` of shape (n, fan_in)."""
    if x.value.ndim != 2 or w.value.ndim != 2 or x.value.shape[1] != w.value.shape[0]:
        raise ValueError(f"affine shape mismatch: {x.value.shape} @ {w.value.shape}")
    xv, wv = x.value, w.value
    out = xv @ wv
    if b is None:
        return _op(x.graph, out, (x, w), lambda gr: (gr @ wv.T, xv.T @ gr))
    if b.value.shape != (wv.shape[1],):
        raise ValueError(f"bias shape {b.value.shape} does not match {wv.shape[1]}")
    return _op(
        x.graph,
        out + b.value,
        (x, w, b),
        lambda gr: (gr @ wv.T, xv.T @ gr, gr.sum(axis=0)),
    )


_sigmoid = expit


def sigmoid(x: Node) -> Node:
    s = _sigmoid(x.value)
    return _op(x.graph, s, (x,), lambda gr: (gr * s * (1.0 - s),))


def relu(x: Node) -> Node:
    mask = x.value > 0
    return _op(x.graph, np.where(mask, x.value, 0.0), (x,), lambda gr: (gr * mask,))


def softplus(x: Node) -> Node:
    """``ln(1 + e^x)``; ``softplus(-z)`` is the stable form of ``-ln sigmoid(z)``."""
    v = x.value
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    return _op(x.graph, out, (x,), lambda gr: (gr * _sigmoid(v),))


def log(x: Node) -> Node:
    if (x.value <= 0).any():
        raise ValueError("log of a non-positive value")
    v = x.value
    return _op(x.graph, np.log(v), (x,), lambda gr: (gr / v,))


def total(x: Node, axis=None) -> Node:
    shape = x.value.shape
    out = x.value.sum(axis=axis)

    def back(gr):
        if axis is None:
            return (np.broadcast_to(gr, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(gr, axis), shape).copy(),)

    return _op(x.graph, np.asarray(out, dtype=np.float64), (x,), back)


def mean(x: Node, axis=None) -> Node:
    n = x.value.size if axis is None else x.value.shape[axis]
    return total(x, axis) * (1.0 / n)


def concat(xs: list[Node], axis: int = -1) -> Node:
    g = xs[0].graph
    sizes = [x.value.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return _op(
        g,
        np.concatenate([x.value for x in xs], axis=axis),
        xs,
        lambda gr: tuple(np.split(gr, splits, axis=axis)),
    )


def reshape(x: Node, shape) -> Node:
    old = x.value.shape
    return Node(x.graph, x.value.reshape(shape), (x,), lambda gr: (gr.reshape(old),))


def take_rows(table: Node, index) -> Node:
    """Embedding lookup: rows ``table[index]`` of a 2-d table."""
    index = np.asarray(index, dtype=np.intp)
    shape = table.value.shape
    if table.value.ndim != 2:
        raise ValueError("take_rows expects a 2-d table")

    def back(gr):
        return (RowGrad(index, gr, shape),)

    return _op(table.graph, table.value[index], (table,), back)


def take_cols(x: Node, cols) -> Node:
    """``x[:, cols]`` for a 2-d node."""
    cols = np.asarray(cols, dtype=np.intp)
    shape = x.value.shape

    def back(gr):
        full = np.zeros(shape)
        np.add.at(full, (slice(None), cols), gr)
        return (full,)

    return _op(x.graph, x.value[:, cols], (x,), back)


def take_along(x: Node, index) -> Node:
    """Per-row gather along the last axis, as ``np.take_along_axis``."""
    index = np.asarray(index, dtype=np.intp)
    shape = x.value.shape

    if x.value.ndim != 2 or index.ndim != 2:
        raise ValueError("take_along expects 2-d operands")
    rows = np.arange(shape[0])[:, None]

    def back(gr):
        full = np.zeros(shape)
        np.add.at(full, (rows, index), gr)
        return (full,)

    return _op(x.graph, np.take_along_axis(x.value, index, axis=-1), (x,), back)


def masked_logsumexp(x: Node, mask) -> Node:
    """For each row of ``x`` (n, T) and each ``i``, log-sum-exp of
    ``x[:, j]`` over ``j`` with ``mask[i, j]`` true. Returns (n, T)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=1).all():
        raise ValueError("every mask row needs at least one entry")
    v = x.value
    z = np.where(mask[None, :, :], v[:, None, :], -np.inf)
    zmax = z.max(axis=2, keepdims=True)
    w = np.exp(z - zmax)
    s = w.sum(axis=2, keepdims=True)
    out = (np.log(s) + zmax)[:, :, 0]
    soft = w / s

    def back(gr):
        return ((gr[:, :, None] * soft).sum(axis=1),)

    return _op(x.graph, out, (x,), back)


def forward_backward(
    build: Callable[[Graph, dict[str, Node]], Node],
    params: Mapping[str, np.ndarray],
    check_inputs: bool = True,
    sparse: bool = False,
) -> tuple[float, dict[str, np.ndarray]]:
    """Record ``build`` on fresh parameter leaves and differentiate it.

    ``build`` receives the graph and a dict of leaf nodes and returns the
    scalar output node. Parameters are never mutated.
    """
    graph = Graph()
    leaves = {name: graph.param(name, value, check_inputs) for name, value in params.items()}
    out = build(graph, leaves)
    grads = graph.backward(out, sparse=sparse)
    return float(out.value.reshape(())), grads


# --------------------------------------------------------------------------
# initialization and optimization


def xavier_uniform(fan_in: int, fan_out: int, rng: np.random.Generator, shape=None) -> np.ndarray:
    """Glorot uniform draws on ``[-g, g]`` with ``g = sqrt(6 / (fan_in + fan_out))``."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError("fan_in and fan_out must be at least 1")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-bound, bound, size=shape)


def clip_nonnegative(weights: np.ndarray) -> np.ndarray:
    return np.maximum(weights, 0.0)


def _adamw_rows_py(p, where, rows, m, v, lr, b1, b2, eps, wd, bc1, bc2):
    n, w = p.shape
    g = np.zeros((n, w))
    hit = where >= 0
    g[hit] = rows[where[hit]]
    p *= 1.0 - lr * wd
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    p -= (lr / bc1) * m / (np.sqrt(v * (1.0 / bc2)) + eps)


def _adamw_rows_impl(p, where, rows, m, v, lr, b1, b2, eps, wd, bc1, bc2):
    # rows without a gradient entry (where < 0) still decay and take the
    # momentum step, exactly as a dense zero gradient would
    n, w = p.shape
    decay = 1.0 - lr * wd
    step = lr / bc1
    inv_bc2 = 1.0 / bc2
    c1 = 1.0 - b1
    c2 = 1.0 - b2
    for r in range(n):
        j = where[r]
        pr = p[r]
        mr = m[r]
        vr = v[r]
        if j < 0:
            for c in range(w):
                mi = b1 * mr[c]
                vi = b2 * vr[c]
                mr[c] = mi
                vr[c] = vi
                pr[c] = pr[c] * decay - step * mi / (np.sqrt(vi * inv_bc2) + eps)
        else:
            g = rows[j]
            for c in range(w):
                gi = g[c]
                mi = b1 * mr[c] + c1 * gi
                vi = b2 * vr[c] + c2 * gi * gi
                mr[c] = mi
                vr[c] = vi
                pr[c] = pr[c] * decay - step * mi / (np.sqrt(vi * inv_bc2) + eps)


# dense gradients go through the same kernel with every row present
_adamw_rows = njit(cache=True)(_adamw_rows_impl) if njit is not None else _adamw_rows_py


@dataclass
class AdamW:
    """Decoupled weight decay Adam with bias correction.

    ``m`` and ``v`` are created lazily per parameter name on first update.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def copy(self) -> "AdamW":
        return AdamW(
            self.lr, self.beta1, self.beta2, self.eps, self.weight_decay, self.step,
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
        )

    def update(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        """Apply one step in place to ``params`` (arrays must be C-contiguous float64)."""
        missing = set(params) - set(grads)
        if missing:
            raise KeyError(f"missing gradient for {sorted(missing)}")
        self.step += 1
        bc1 = 1.0 - self.beta1 ** self.step
        bc2 = 1.0 - self.beta2 ** self.step
        for name, p in params.items():
            g = grads[name]
            if tuple(g.shape) != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            width = p.shape[-1] if p.ndim else 1
            p2 = p.reshape(-1, width)
            if isinstance(g, RowGrad):
                uniq, rows = g.coalesce()
                where = np.full(p2.shape[0], -1, dtype=np.int64)
                where[uniq] = np.arange(len(uniq))
            else:
                rows = np.ascontiguousarray(g, dtype=np.float64).reshape(-1, width)
                where = np.arange(p2.shape[0], dtype=np.int64)
            if not np.isfinite(rows).all():
                raise NonFiniteError(f"gradient for {name!r} is non-finite")
            _adamw_rows(
                p2, where, rows, self.m[name].reshape(-1, width), self.v[name].reshape(-1, width),
                self.lr, self.beta1, self.beta2, self.eps, self.weight_decay, bc1, bc2,
            )
            # finite gradients keep finite rows finite, so only touched rows need a look
            touched = p2[uniq] if isinstance(g, RowGrad) else p2
            if not np.isfinite(touched).all():
                raise NonFiniteError(f"parameter {name!r} became non-finite")


def adamw_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamW):
    """Pure AdamW update: returns ``(new_params, new_state)``."""
    new_state = state.copy()
    new_params = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    new_state.update(new_params, grads)
    return new_params, new_state

"""Minimal reverse-mode autodiff over dense numpy arrays.

Define-by-run: each op immediately computes its value and appends a node to
the graph, so creation order is already a topological order.  Backward walks
the node list in reverse, dispatching through a module-level registry keyed
by op name.  Keeping forward rules in the same registry lets ``recompute``
re-evaluate the whole graph after a parameter has been perturbed in place,
which is what the finite-difference checker needs.

Supported shapes are scalars, vectors and matrices; no broadcasting beyond
the bias row in ``affine`` and no GPU paths.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np


class ShapeError(Exception):
    pass


class NonFiniteGradient(Exception):
    pass


class Node:
    __slots__ = ("op", "parents", "ctx", "value", "grad", "id")

    def __init__(self, op: str, parents: tuple, ctx, value: np.ndarray, id: int):
        self.op = op
        self.parents = parents
        self.ctx = ctx
        self.value = value
        self.grad: Optional[np.ndarray] = None
        self.id = id

    @property
    def shape(self):
        return self.value.shape


_FORWARD: dict[str, Callable] = {}
_BACKWARD: dict[str, Callable] = {}


def register_op(name: str, forward: Callable, backward: Callable) -> None:
    """Register a custom op: forward(node) -> ndarray, backward(node) -> None
    (accumulate into parents via ``accumulate``)."""
    _FORWARD[name] = forward
    _BACKWARD[name] = backward


def accumulate(node: Node, g: np.ndarray) -> None:
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += g


def _op(name):
    def deco(fn):
        _FORWARD[name] = fn
        return fn
    return deco


def _bk(name):
    def deco(fn):
        _BACKWARD[name] = fn
        return fn
    return deco


# --- forward rules ---------------------------------------------------------

@_op("input")
def _f_input(node):
    return node.value


@_op("param")
def _f_param(node):
    store, pname = node.ctx
    return store.values[pname]


@_op("lookup")
def _f_lookup(node):
    (table,) = node.parents
    return table.value[np.asarray(node.ctx)]


@_op("select_row")
def _f_select_row(node):
    (x,) = node.parents
    return x.value[node.ctx]


@_op("slice_cols")
def _f_slice_cols(node):
    (x,) = node.parents
    a, b = node.ctx
    return x.value[..., a:b]


@_op("concat")
def _f_concat(node):
    return np.concatenate([p.value for p in node.parents])


@_op("concat_cols")
def _f_concat_cols(node):
    return np.concatenate([p.value for p in node.parents], axis=1)


@_op("stack_rows")
def _f_stack_rows(node):
    return np.stack([p.value for p in node.parents])


@_op("tile_rows")
def _f_tile_rows(node):
    (x,) = node.parents
    return np.tile(x.value, (node.ctx, 1))


@_op("add")
def _f_add(node):
    a, b = node.parents
    return a.value + b.value


@_op("add_n")
def _f_add_n(node):
    out = node.parents[0].value.copy()
    for p in node.parents[1:]:
        out += p.value
    return out


@_op("sub")
def _f_sub(node):
    a, b = node.parents
    return a.value - b.value


@_op("mul")
def _f_mul(node):
    a, b = node.parents
    return a.value * b.value


@_op("scale")
def _f_scale(node):
    (x,) = node.parents
    return node.ctx * x.value


@_op("tanh")
def _f_tanh(node):
    return np.tanh(node.parents[0].value)


@_op("sigmoid")
def _f_sigmoid(node):
    x = node.parents[0].value
    out = np.empty_like(x)
    np.exp(-np.abs(x), out=out)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + out[pos])
    out[~pos] = out[~pos] / (1.0 + out[~pos])
    return out


@_op("abs")
def _f_abs(node):
    return np.abs(node.parents[0].value)


@_op("sum")
def _f_sum(node):
    return np.asarray(node.parents[0].value.sum())


@_op("row_sums")
def _f_row_sums(node):
    return node.parents[0].value.sum(axis=1)


@_op("inner")
def _f_inner(node):
    a, b = node.parents
    return np.asarray(a.value @ b.value)


@_op("matvec")
def _f_matvec(node):
    w, x = node.parents
    return w.value @ x.value


@_op("matmul")
def _f_matmul(node):
    a, b = node.parents
    return a.value @ b.value


@_op("affine")
def _f_affine(node):
    x, w, b = node.parents
    return x.value @ w.value + b.value


@_op("transpose")
def _f_transpose(node):
    return node.parents[0].value.T


@_op("flatten")
def _f_flatten(node):
    return node.parents[0].value.reshape(-1)


@_op("col_sums")
def _f_col_sums(node):
    return node.parents[0].value.sum(axis=0)


@_op("gather_entries")
def _f_gather_entries(node):
    (x,) = node.parents
    rows, cols = node.ctx
    return x.value[rows, cols]


@_op("softplus")
def _f_softplus(node):
    x = node.parents[0].value
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


# --- backward rules --------------------------------------------------------

@_bk("input")
def _b_input(node):
    pass


@_bk("param")
def _b_param(node):
    pass


@_bk("lookup")
def _b_lookup(node):
    (table,) = node.parents
    if table.grad is None:
        table.grad = np.zeros_like(table.value)
    np.add.at(table.grad, np.asarray(node.ctx), node.grad)


@_bk("select_row")
def _b_select_row(node):
    (x,) = node.parents
    if x.grad is None:
        x.grad = np.zeros_like(x.value)
    x.grad[node.ctx] += node.grad


@_bk("slice_cols")
def _b_slice_cols(node):
    (x,) = node.parents
    a, b = node.ctx
    if x.grad is None:
        x.grad = np.zeros_like(x.value)
    x.grad[..., a:b] += node.grad


@_bk("concat")
def _b_concat(node):
    off = 0
    for p in node.parents:
        k = p.value.shape[0]
        accumulate(p, node.grad[off:off + k])
        off += k


@_bk("concat_cols")
def _b_concat_cols(node):
    off = 0
    for p in node.parents:
        k = p.value.shape[1]
        accumulate(p, node.grad[:, off:off + k])
        off += k


@_bk("stack_rows")
def _b_stack_rows(node):
    for i, p in enumerate(node.parents):
        accumulate(p, node.grad[i])


@_bk("tile_rows")
def _b_tile_rows(node):
    accumulate(node.parents[0], node.grad.sum(axis=0))


@_bk("add")
def _b_add(node):
    accumulate(node.parents[0], node.grad)
    accumulate(node.parents[1], node.grad)


@_bk("add_n")
def _b_add_n(node):
    for p in node.parents:
        accumulate(p, node.grad)


@_bk("sub")
def _b_sub(node):
    accumulate(node.parents[0], node.grad)
    accumulate(node.parents[1], -node.grad)


@_bk("mul")
def _b_mul(node):
    a, b = node.parents
    accumulate(a, node.grad * b.value)
    accumulate(b, node.grad * a.value)


@_bk("scale")
def _b_scale(node):
    accumulate(node.parents[0], node.ctx * node.grad)


@_bk("tanh")
def _b_tanh(node):
    accumulate(node.parents[0], node.grad * (1.0 - node.value ** 2))


@_bk("sigmoid")
def _b_sigmoid(node):
    accumulate(node.parents[0], node.grad * node.value * (1.0 - node.value))


@_bk("abs")
def _b_abs(node):
    # subgradient at 0 is 0
    accumulate(node.parents[0], node.grad * np.sign(node.parents[0].value))


@_bk("sum")
def _b_sum(node):
    x = node.parents[0]
    accumulate(x, np.full_like(x.value, float(node.grad)))


@_bk("row_sums")
def _b_row_sums(node):
    x = node.parents[0]
    accumulate(x, np.repeat(node.grad[:, None], x.value.shape[1], axis=1))


@_bk("inner")
def _b_inner(node):
    a, b = node.parents
    g = float(node.grad)
    accumulate(a, g * b.value)
    accumulate(b, g * a.value)


@_bk("matvec")
def _b_matvec(node):
    w, x = node.parents
    accumulate(w, np.outer(node.grad, x.value))
    accumulate(x, w.value.T @ node.grad)


@_bk("matmul")
def _b_matmul(node):
    a, b = node.parents
    accumulate(a, node.grad @ b.value.T)
    accumulate(b, a.value.T @ node.grad)


@_bk("affine")
def _b_affine(node):
    x, w, b = node.parents
    g = node.grad
    if x.value.ndim == 1:
        accumulate(x, g @ w.value.T)
        accumulate(w, np.outer(x.value, g))
        accumulate(b, g)
    else:
        accumulate(x, g @ w.value.T)
        accumulate(w, x.value.T @ g)
        accumulate(b, g.sum(axis=0))


@_bk("transpose")
def _b_transpose(node):
    accumulate(node.parents[0], node.grad.T)


@_bk("flatten")
def _b_flatten(node):
    x = node.parents[0]
    accumulate(x, node.grad.reshape(x.value.shape))


@_bk("col_sums")
def _b_col_sums(node):
    x = node.parents[0]
    accumulate(x, np.repeat(node.grad[None, :], x.value.shape[0], axis=0))


@_bk("gather_entries")
def _b_gather_entries(node):
    (x,) = node.parents
    rows, cols = node.ctx
    if x.grad is None:
        x.grad = np.zeros_like(x.value)
    np.add.at(x.grad, (rows, cols), node.grad)


@_bk("softplus")
def _b_softplus(node):
    x = node.parents[0].value
    out = np.empty_like(x)
    np.exp(-np.abs(x), out=out)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + out[pos])
    out[~pos] = out[~pos] / (1.0 + out[~pos])
    accumulate(node.parents[0], node.grad * out)


class Graph:
    """One per decoding/training instance; never shared between threads."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._param_cache: dict[tuple[int, str], Node] = {}

    def _push(self, op: str, parents: tuple, ctx=None) -> Node:
        node = Node(op, parents, ctx, None, len(self.nodes))
        node.value = np.asarray(_FORWARD[op](node), dtype=float)
        self.nodes.append(node)
        return node

    # leaves
    def input(self, value) -> Node:
        node = Node("input", (), None, np.asarray(value, dtype=float),
                    len(self.nodes))
        self.nodes.append(node)
        return node

    def param(self, store: "ParameterStore", name: str) -> Node:
        key = (id(store), name)
        if key not in self._param_cache:
            node = Node("param", (), (store, name), store.values[name],
                        len(self.nodes))
            self.nodes.append(node)
            self._param_cache[key] = node
        return self._param_cache[key]

    # ops
    def lookup(self, table: Node, indices: Sequence[int]) -> Node:
        if table.value.ndim != 2:
            raise ShapeError(f"lookup table must be a matrix, got {table.shape}")
        return self._push("lookup", (table,), tuple(int(i) for i in indices))

    def select_row(self, x: Node, i: int) -> Node:
        if x.value.ndim != 2:
            raise ShapeError(f"select_row needs a matrix, got {x.shape}")
        return self._push("select_row", (x,), int(i))

    def slice_cols(self, x: Node, a: int, b: int) -> Node:
        return self._push("slice_cols", (x,), (a, b))

    def concat(self, *xs: Node) -> Node:
        for x in xs:
            if x.value.ndim != 1:
                raise ShapeError(f"concat needs vectors, got {x.shape}")
        return self._push("concat", tuple(xs))

    def concat_cols(self, *xs: Node) -> Node:
        rows = {x.value.shape[0] for x in xs}
        if any(x.value.ndim != 2 for x in xs) or len(rows) != 1:
            raise ShapeError(f"concat_cols needs matrices with equal rows, got "
                             f"{[x.shape for x in xs]}")
        return self._push("concat_cols", tuple(xs))

    def stack_rows(self, xs: Sequence[Node]) -> Node:
        shapes = {x.value.shape for x in xs}
        if len(shapes) != 1 or any(x.value.ndim != 1 for x in xs):
            raise ShapeError(f"stack_rows needs equal-length vectors, got {shapes}")
        return self._push("stack_rows", tuple(xs))

    def tile_rows(self, x: Node, m: int) -> Node:
        if x.value.ndim != 1:
            raise ShapeError(f"tile_rows needs a vector, got {x.shape}")
        return self._push("tile_rows", (x,), int(m))

    def add(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise ShapeError(f"add: {a.shape} vs {b.shape}")
        return self._push("add", (a, b))

    def add_n(self, xs: Sequence[Node]) -> Node:
        if len({x.value.shape for x in xs}) != 1:
            raise ShapeError("add_n: mismatched shapes")
        return self._push("add_n", tuple(xs))

    def sub(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise ShapeError(f"sub: {a.shape} vs {b.shape}")
        return self._push("sub", (a, b))

    def mul(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise ShapeError(f"mul: {a.shape} vs {b.shape}")
        return self._push("mul", (a, b))

    def scale(self, x: Node, c: float) -> Node:
        return self._push("scale", (x,), float(c))

    def tanh(self, x: Node) -> Node:
        return self._push("tanh", (x,))

    def sigmoid(self, x: Node) -> Node:
        return self._push("sigmoid", (x,))

    def abs(self, x: Node) -> Node:
        return self._push("abs", (x,))

    def sum(self, x: Node) -> Node:
        return self._push("sum", (x,))

    def row_sums(self, x: Node) -> Node:
        if x.value.ndim != 2:
            raise ShapeError(f"row_sums needs a matrix, got {x.shape}")
        return self._push("row_sums", (x,))

    def inner(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape or a.value.ndim != 1:
            raise ShapeError(f"inner: {a.shape} vs {b.shape}")
        return self._push("inner", (a, b))

    def matvec(self, w: Node, x: Node) -> Node:
        if w.value.ndim != 2 or x.value.ndim != 1 or w.value.shape[1] != x.value.shape[0]:
            raise ShapeError(f"matvec: {w.shape} vs {x.shape}")
        return self._push("matvec", (w, x))

    def matmul(self, a: Node, b: Node) -> Node:
        if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
            raise ShapeError(f"matmul: {a.shape} vs {b.shape}")
        return self._push("matmul", (a, b))

    def affine(self, x: Node, w: Node, b: Node) -> Node:
        if w.value.ndim != 2 or x.value.shape[-1] != w.value.shape[0] \
                or b.value.shape != (w.value.shape[1],):
            raise ShapeError(f"affine: x{x.shape} w{w.shape} b{b.shape}")
        return self._push("affine", (x, w, b))

    def transpose(self, x: Node) -> Node:
        if x.value.ndim != 2:
            raise ShapeError(f"transpose needs a matrix, got {x.shape}")
        return self._push("transpose", (x,))

    def flatten(self, x: Node) -> Node:
        if x.value.ndim != 2:
            raise ShapeError(f"flatten needs a matrix, got {x.shape}")
        return self._push("flatten", (x,))

    def col_sums(self, x: Node) -> Node:
        if x.value.ndim != 2:
            raise ShapeError(f"col_sums needs a matrix, got {x.shape}")
        return self._push("col_sums", (x,))

    def gather_entries(self, x: Node, pairs: Sequence[tuple[int, int]]) -> Node:
        """Pick entries x[i, j] for each (i, j) in ``pairs`` as a vector.
        Repeated pairs are fine; their gradients accumulate."""
        if x.value.ndim != 2:
            raise ShapeError(f"gather_entries needs a matrix, got {x.shape}")
        rows = np.fromiter((p[0] for p in pairs), dtype=int, count=len(pairs))
        cols = np.fromiter((p[1] for p in pairs), dtype=int, count=len(pairs))
        return self._push("gather_entries", (x,), (rows, cols))

    def softplus(self, x: Node) -> Node:
        return self._push("softplus", (x,))

    def apply(self, op: str, parents: Sequence[Node], ctx=None) -> Node:
        """Entry point for ops installed with ``register_op``."""
        return self._push(op, tuple(parents), ctx)

    # engine
    def recompute(self) -> None:
        """Re-run forward in construction order (parameters may have changed
        in place)."""
        for node in self.nodes:
            if node.op == "param":
                store, pname = node.ctx
                node.value = store.values[pname]
            elif node.op != "input":
                node.value = np.asarray(_FORWARD[node.op](node), dtype=float)

    def zero_grad(self) -> None:
        for node in self.nodes:
            node.grad = None

    def backward(self, loss: Node) -> None:
        """Accumulate d(loss)/d(param) into each parameter store touched by
        the graph.  ``loss`` must be scalar."""
        if loss.value.shape != ():
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        self.zero_grad()
        loss.grad = np.asarray(1.0)
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            _BACKWARD[node.op](node)
            if node.op == "param":
                store, pname = node.ctx
                store.grads[pname] += node.grad


class ParameterStore:
    """Named dense parameters with gradient accumulators.

    Single writer during training; inference readers never mutate.  The ℓ2
    penalty is λ‖w‖² with gradient 2λw (note the factor 2).
    """

    def __init__(self, l2: float = 1e-6, clip: float = 1.0):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.l2 = float(l2)
        self.clip = float(clip)

    def add(self, name: str, shape: tuple[int, ...],
            rng: Optional[np.random.Generator] = None,
            init: str | np.ndarray = "auto") -> np.ndarray:
        if name in self.values:
            raise ValueError(f"duplicate parameter {name!r}")
        if isinstance(init, np.ndarray):
            value = np.array(init, dtype=float)
            if value.shape != tuple(shape):
                raise ShapeError(f"{name}: init shape {value.shape} != {shape}")
        elif init == "zeros" or (init == "auto" and len(shape) == 1):
            value = np.zeros(shape)
        else:
            # matrices: uniform in +-sqrt(6 / (fan_in + fan_out))
            fan_in, fan_out = shape[0], shape[-1]
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            if rng is None:
                raise ValueError(f"{name}: random init needs an rng")
            value = rng.uniform(-bound, bound, size=shape)
        self.values[name] = value
        self.grads[name] = np.zeros(shape)
        return value

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def names(self) -> list[str]:
        return list(self.values)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def grad_norm(self) -> float:
        total = 0.0
        for g in self.grads.values():
            total += float((g * g).sum())
        return math.sqrt(total)

    def scale_grads(self, c: float) -> None:
        for g in self.grads.values():
            g *= c


def clip_and_step(store: ParameterStore, learning_rate: float) -> None:
    """Clip the global gradient norm to ``store.clip``, take an SGD step with
    the ℓ2 penalty folded in, and zero the accumulators."""
    for name, g in store.grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
    norm = store.grad_norm()
    if norm > store.clip > 0:
        store.scale_grads(store.clip / norm)
    for name, w in store.values.items():
        w -= learning_rate * (store.grads[name] + 2.0 * store.l2 * w)
    store.zero_grads()


def lstm_cell(g: Graph, x: Node, h_prev: Node, c_prev: Node,
              w: Node, b: Node) -> tuple[Node, Node]:
    """One LSTM step.  ``w`` has shape (dim_x + dim_h, 4*dim_h), gate order
    input/forget/output/candidate; forget bias starts at 0 like the rest."""
    hdim = h_prev.value.shape[0]
    z = g.affine(g.concat(x, h_prev), w, b)
    i = g.sigmoid(g.slice_cols(z, 0, hdim))
    f = g.sigmoid(g.slice_cols(z, hdim, 2 * hdim))
    o = g.sigmoid(g.slice_cols(z, 2 * hdim, 3 * hdim))
    cand = g.tanh(g.slice_cols(z, 3 * hdim, 4 * hdim))
    c = g.add(g.mul(f, c_prev), g.mul(i, cand))
    h = g.mul(o, g.tanh(c))
    return h, c


def collect_grads(store: ParameterStore) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in store.grads.items()}


def grad_check(graph: Graph, loss: Node, store: ParameterStore,
               tolerance: float = 1e-4, eps: float = 1e-4,
               max_entries: int = 40,
               rng: Optional[np.random.Generator] = None) -> dict:
    """Compare analytic gradients against central finite differences.

    Returns {"pass": bool, "max_rel_err": float, "per_param": {...}}.  The
    graph is recomputable, so parameters are perturbed in place and restored.
    """
    rng = rng or np.random.default_rng(0)
    store.zero_grads()
    graph.recompute()
    graph.backward(loss)
    analytic = collect_grads(store)
    store.zero_grads()

    per_param: dict[str, float] = {}
    worst = 0.0
    for name, w in store.values.items():
        flat = w.reshape(-1)
        idxs = np.arange(flat.size)
        if flat.size > max_entries:
            idxs = rng.choice(flat.size, size=max_entries, replace=False)
        err = 0.0
        for i in idxs:
            keep = flat[i]
            flat[i] = keep + eps
            graph.recompute()
            up = float(loss.value)
            flat[i] = keep - eps
            graph.recompute()
            down = float(loss.value)
            flat[i] = keep
            fd = (up - down) / (2.0 * eps)
            an = analytic[name].reshape(-1)[i]
            rel = abs(an - fd) / max(1.0, abs(an), abs(fd))
            err = max(err, rel)
        per_param[name] = err
        worst = max(worst, err)
    graph.recompute()
    return {"pass": worst < tolerance, "max_rel_err": worst, "per_param": per_param}

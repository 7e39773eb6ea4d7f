"""Minimal reverse-mode autodiff over float64 numpy arrays.

Values are computed eagerly when a node is built, so ``forward`` only hands
back the cached value of the root. ``backward`` walks the graph in reverse
topological order and returns gradients keyed by parameter name.

Broadcasting is deliberately narrow: same shape, scalar-with-tensor, or a
row vector of shape ``(n,)`` against an ``(m, n)`` matrix.
"""

from __future__ import annotations

import enum
from typing import Callable, Iterable

import numpy as np


class ShapeError(ValueError):
    pass


class Op(enum.Enum):
    LEAF = "leaf"
    ADD = "add"
    MUL = "mul"
    MATMUL = "matmul"
    CONCAT = "concat"
    SUM = "sum"
    MEAN = "mean"
    MSE = "mse"
    TANH = "tanh"
    SILU = "silu"
    SCALE = "scale"
    TRANSPOSE = "transpose"
    NORMALIZE_ROWS = "normalize_rows"


class Node:
    __slots__ = ("value", "op", "parents", "aux", "requires_grad", "name")

    def __init__(self, value, op=Op.LEAF, parents=(), aux=None, name=None, requires_grad=None):
        value = np.asarray(value, dtype=np.float64).view()
        value.setflags(write=False)
        self.value = value
        self.op = op
        self.parents = tuple(parents)
        self.aux = aux
        self.name = name
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Node({self.op.value}{tag}, shape={self.shape})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    @property
    def T(self):
        return transpose(self)


def _lift(x) -> Node:
    return x if isinstance(x, Node) else const(x)


def const(value) -> Node:
    return Node(value, requires_grad=False)


def param(value, name: str) -> Node:
    return Node(np.array(value, dtype=np.float64), name=name, requires_grad=True)


def detach(node: Node) -> Node:
    """Stop-gradient: same value, no path back to ``node``'s ancestors."""
    return Node(node.value, requires_grad=False)


# -- broadcasting helpers ----------------------------------------------------

def _broadcast_kind(op: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return
    if b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum())
    # row vector against matrix
    return grad.sum(axis=0)


# -- primitive ops -----------------------------------------------------------

def add(a: Node, b: Node) -> Node:
    _broadcast_kind("add", a.value, b.value)
    return Node(a.value + b.value, Op.ADD, (a, b))


def sub(a: Node, b: Node) -> Node:
    return add(a, scale(b, -1.0))


def mul(a: Node, b: Node) -> Node:
    _broadcast_kind("mul", a.value, b.value)
    return Node(a.value * b.value, Op.MUL, (a, b))


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return Node(a.value @ b.value, Op.MATMUL, (a, b))


def concat(nodes: Iterable[Node], axis: int = 1) -> Node:
    nodes = tuple(nodes)
    shapes = [n.shape for n in nodes]
    try:
        value = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat(axis={axis}): incompatible shapes {shapes}") from exc
    sizes = np.cumsum([n.shape[axis] for n in nodes])[:-1]
    return Node(value, Op.CONCAT, nodes, aux=(axis, sizes))


def sum_(a: Node) -> Node:
    return Node(a.value.sum(), Op.SUM, (a,))


def mean(a: Node) -> Node:
    return Node(a.value.mean(), Op.MEAN, (a,))


def mse(a: Node, b: Node) -> Node:
    """Mean over all elements of ``(a - b)**2``."""
    if a.shape != b.shape:
        raise ShapeError(f"mse: incompatible shapes {a.shape} and {b.shape}")
    diff = a.value - b.value
    return Node(np.mean(diff * diff), Op.MSE, (a, b), aux=diff)


def tanh(a: Node) -> Node:
    return Node(np.tanh(a.value), Op.TANH, (a,))


def silu(a: Node) -> Node:
    sig = np.tanh(0.5 * a.value)
    sig += 1.0
    sig *= 0.5
    return Node(a.value * sig, Op.SILU, (a,), aux=sig)


def scale(a: Node, s: float) -> Node:
    return Node(a.value * s, Op.SCALE, (a,), aux=float(s))


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return Node(a.value.T, Op.TRANSPOSE, (a,))


def normalize_rows(a: Node) -> Node:
    """Divide every row by its L2 norm."""
    if a.value.ndim != 2:
        raise ShapeError(f"normalize_rows: expected a matrix, got shape {a.shape}")
    norms = np.sqrt(np.sum(a.value * a.value, axis=1, keepdims=True))
    if np.any(norms == 0.0):
        raise FloatingPointError("normalize_rows: zero-norm row")
    out = a.value / norms
    return Node(out, Op.NORMALIZE_ROWS, (a,), aux=norms)


# -- evaluation --------------------------------------------------------------

def forward(root: Node) -> np.ndarray:
    return root.value


def _topological(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _local_grads(node: Node, g: np.ndarray) -> list[np.ndarray | None]:
    op = node.op
    ps = node.parents
    if op is Op.ADD:
        a, b = ps
        return [_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)]
    if op is Op.MUL:
        a, b = ps
        return [_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)]
    if op is Op.MATMUL:
        a, b = ps
        ga = g @ b.value.T if a.requires_grad else None
        gb = a.value.T @ g if b.requires_grad else None
        return [ga, gb]
    if op is Op.CONCAT:
        axis, sizes = node.aux
        return np.split(g, sizes, axis=axis)
    if op is Op.SUM:
        return [np.full(ps[0].shape, float(g))]
    if op is Op.MEAN:
        return [np.full(ps[0].shape, float(g) / ps[0].value.size)]
    if op is Op.MSE:
        diff = node.aux
        ga = diff * (2.0 * float(g) / diff.size)
        return [ga, -ga]
    if op is Op.TANH:
        return [g * (1.0 - node.value * node.value)]
    if op is Op.SILU:
        sig = node.aux
        # d/dx x*sig(x) = sig + x*sig*(1-sig) = sig + y*(1-sig)
        d = 1.0 - sig
        d *= node.value
        d += sig
        d *= g
        return [d]
    if op is Op.SCALE:
        return [g * node.aux]
    if op is Op.TRANSPOSE:
        return [g.T]
    if op is Op.NORMALIZE_ROWS:
        y = node.value
        dot = np.sum(g * y, axis=1, keepdims=True)
        return [(g - y * dot) / node.aux]
    raise AssertionError(f"no backward rule for {op}")


def backward(root: Node) -> dict[str, np.ndarray]:
    """Gradients of a scalar root w.r.t. every named parameter leaf it depends on."""
    if root.value.size != 1 or root.value.ndim != 0:
        raise ShapeError(f"backward: root must be a scalar, got shape {root.shape}")
    grads: dict[int, np.ndarray] = {id(root): np.ones(())}
    out: dict[str, np.ndarray] = {}
    if not root.requires_grad:
        return out
    for node in reversed(_topological(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.op is Op.LEAF:
            if node.name is not None:
                out[node.name] = out[node.name] + g if node.name in out else np.array(g)
            continue
        for parent, pg in zip(node.parents, _local_grads(node, g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    return out


def grad_check(
    f: Callable[[dict[str, Node]], Node],
    params: dict[str, np.ndarray],
    eps: float = 1e-5,
    coords: dict[str, np.ndarray] | None = None,
) -> float:
    """Largest relative disagreement between ``backward`` and central differences.

    ``f`` builds a scalar graph from parameter nodes. ``coords`` optionally
    restricts the check to flat indices per parameter; by default every
    coordinate is checked. The error for each coordinate is
    ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    analytic = backward(f({k: param(v, k) for k, v in base.items()}))

    def value_at(name: str, flat_index: int, delta: float) -> float:
        shifted = dict(base)
        arr = base[name].copy()
        arr.reshape(-1)[flat_index] += delta
        shifted[name] = arr
        return float(forward(f({k: const(v) for k, v in shifted.items()})))

    worst = 0.0
    for name, arr in base.items():
        grad = analytic.get(name, np.zeros_like(arr)).reshape(-1)
        indices = range(arr.size) if coords is None or name not in coords else coords[name]
        for i in indices:
            numeric = (value_at(name, i, eps) - value_at(name, i, -eps)) / (2.0 * eps)
            err = abs(grad[i] - numeric) / max(1.0, abs(grad[i]))
            worst = max(worst, err)
    return worst

"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every differentiable quantity is a :class:`Node` wrapping a numpy array.
Operations build an acyclic graph; :func:`backward` walks it once in
reverse topological order and accumulates gradients into each node's
``grad`` buffer.  Gradients accumulate across calls, so callers zero
parameter grads between optimization steps.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NumericError


class Node:
    """A value in the computation graph plus its gradient slot.

    ``grad`` always has the same shape as ``value``.  Leaf nodes (op
    ``"leaf"``) are parameters or inputs; interior nodes carry a closure
    that pushes the upstream gradient into their parents.
    """

    __slots__ = ("value", "grad", "op", "parents", "_backward")

    def __init__(self, value, parents: Sequence["Node"] = (), op: str = "leaf",
                 backward: Callable[[np.ndarray], None] | None = None):
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericError(f"non-finite values produced by op '{op}'")
        self.value = value
        self.grad = np.zeros_like(value)
        self.op = op
        self.parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.value.shape})"


def constant(value) -> Node:
    """A graph leaf that never receives gradient updates of interest."""
    return Node(value, op="const")


def _topo_order(root: Node) -> list[Node]:
    """Iterative post-order DFS; each node appears exactly once."""
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into every node reachable from ``loss``.

    ``loss`` must be a scalar (size-1) node.
    """
    if loss.value.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# ops


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        prod = a.value @ b.value
    out = Node(prod, (a, b), "matmul")

    def _bw(g):
        a.grad += g @ b.value.T
        b.grad += a.value.T @ g

    out._backward = _bw
    return out


def add(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise ContractError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Node(a.value + b.value, (a, b), "add")

    def _bw(g):
        a.grad += g
        b.grad += g

    out._backward = _bw
    return out


def add_bias(m: Node, bias: Node) -> Node:
    """Row-wise bias addition: (n, k) + (k,)."""
    if m.value.ndim != 2 or bias.value.ndim != 1 or m.shape[1] != bias.shape[0]:
        raise ContractError(f"add_bias shape mismatch: {m.shape} + {bias.shape}")
    out = Node(m.value + bias.value, (m, bias), "add_bias")

    def _bw(g):
        m.grad += g
        bias.grad += g.sum(axis=0)

    out._backward = _bw
    return out


def affine(a: Node, scale: float = 1.0, shift: float = 0.0) -> Node:
    """Elementwise scale * a + shift with constant coefficients."""
    out = Node(scale * a.value + shift, (a,), "affine")

    def _bw(g):
        a.grad += scale * g

    out._backward = _bw
    return out


def relu(a: Node) -> Node:
    out = Node(np.maximum(a.value, 0.0), (a,), "relu")
    mask = a.value > 0.0  # subgradient at 0 is 0

    def _bw(g):
        a.grad += g * mask

    out._backward = _bw
    return out


def sigmoid(a: Node) -> Node:
    """Logistic function, branch-wise for stability; output in (0, 1)."""
    x = a.value
    val = np.empty_like(x)
    pos = x >= 0
    val[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    val[~pos] = ex / (1.0 + ex)
    out = Node(val, (a,), "sigmoid")

    def _bw(g):
        a.grad += g * val * (1.0 - val)

    out._backward = _bw
    return out


def softmax_rows(a: Node) -> Node:
    """Row-wise softmax with max-subtraction; rows sum to 1."""
    if a.value.ndim != 2:
        raise ContractError("softmax_rows expects a 2-d node")
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    out = Node(s, (a,), "softmax")

    def _bw(g):
        # J^T g = s * (g - <g, s> per row)
        dot = (g * s).sum(axis=1, keepdims=True)
        a.grad += s * (g - dot)

    out._backward = _bw
    return out


def grad_reverse(a: Node, lam: float) -> Node:
    """Identity forward; backward multiplies the upstream gradient by -lam."""
    if lam < 0:
        raise ContractError(f"grad_reverse lambda must be >= 0, got {lam}")
    out = Node(a.value, (a,), "grad_reverse")

    def _bw(g):
        a.grad += -lam * g

    out._backward = _bw
    return out


def log(a: Node) -> Node:
    """Natural log; pair with clamp_min to keep inputs positive."""
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.log(a.value)
    out = Node(val, (a,), "log")

    def _bw(g):
        a.grad += g / a.value

    out._backward = _bw
    return out


def clamp_min(a: Node, lo: float) -> Node:
    out = Node(np.maximum(a.value, lo), (a,), "clamp_min")
    mask = a.value > lo

    def _bw(g):
        a.grad += g * mask

    out._backward = _bw
    return out


def take_rows(a: Node, idx: np.ndarray) -> Node:
    """Select rows by index; backward scatters gradients back."""
    idx = np.asarray(idx, dtype=np.intp)
    out = Node(a.value[idx], (a,), "take_rows")

    def _bw(g):
        np.add.at(a.grad, idx, g)

    out._backward = _bw
    return out


def concat_rows(nodes: Sequence[Node]) -> Node:
    if not nodes:
        raise ContractError("concat_rows requires at least one node")
    out = Node(np.concatenate([n.value for n in nodes], axis=0), tuple(nodes), "concat")
    sizes = [n.shape[0] for n in nodes]

    def _bw(g):
        off = 0
        for n, sz in zip(nodes, sizes):
            n.grad += g[off:off + sz]
            off += sz

    out._backward = _bw
    return out


def gather(a: Node, rows: np.ndarray, cols: np.ndarray) -> Node:
    """Pick one entry per (row, col) pair into a 1-d node."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = Node(a.value[rows, cols], (a,), "gather")

    def _bw(g):
        np.add.at(a.grad, (rows, cols), g)

    out._backward = _bw
    return out


def mean_rows(a: Node) -> Node:
    """Column means of a 2-d node: (n, k) -> (k,)."""
    if a.value.ndim != 2 or a.shape[0] == 0:
        raise ContractError("mean_rows expects a non-empty 2-d node")
    n = a.shape[0]
    out = Node(a.value.mean(axis=0), (a,), "mean_rows")

    def _bw(g):
        a.grad += g[None, :] / n

    out._backward = _bw
    return out


def square(a: Node) -> Node:
    out = Node(a.value * a.value, (a,), "square")

    def _bw(g):
        a.grad += 2.0 * a.value * g

    out._backward = _bw
    return out


def sum_all(a: Node) -> Node:
    out = Node(np.asarray(a.value.sum()), (a,), "sum")

    def _bw(g):
        a.grad += g

    out._backward = _bw
    return out


def mean_all(a: Node) -> Node:
    if a.value.size == 0:
        raise ContractError("mean_all of an empty node")
    n = a.value.size
    out = Node(np.asarray(a.value.mean()), (a,), "mean")

    def _bw(g):
        a.grad += g / n

    out._backward = _bw
    return out

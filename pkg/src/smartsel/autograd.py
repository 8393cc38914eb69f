"""Reverse-mode differentiation for the fixed scorer/classifier graphs.

A deliberately small tape: only the operations those graphs need (dense
algebra, gates, prefix sums, row bookkeeping, the two losses).  Values are
2-D float64 arrays throughout; every op returns a new :class:`Var` whose
``vjp`` scatters the incoming cotangent to its parents.

Gradient correctness of each op is pinned by finite differences in the
test suite, and end to end by the package-level gradient check.
"""

from __future__ import annotations

import numpy as np

from . import nncore
from .nncore import ParamStore


class Var:
    """One node of the tape: a value, its cotangent, and parent links."""

    __slots__ = ("value", "grad", "parents", "vjp")

    def __init__(self, value: np.ndarray, parents: tuple = (), vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.value.shape


def leaf(value) -> Var:
    return Var(np.asarray(value, dtype=np.float64))


def _topo_order(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Var) -> None:
    """Populate ``grad`` on every node reachable from a scalar root."""
    if root.value.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    order = _topo_order(root)
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.vjp is None:
            continue
        for parent, contribution in zip(node.parents, node.vjp(node.grad)):
            parent.grad += contribution


class ParamVars:
    """Leaf Vars for a ParamStore, with gradient flush-back after backward."""

    def __init__(self, store: ParamStore):
        self.store = store
        self._vars: dict[str, Var] = {}

    def var(self, name: str) -> Var:
        if name not in self._vars:
            self._vars[name] = leaf(self.store[name])
        return self._vars[name]

    def flush_grads(self, scale: float = 1.0) -> None:
        for name, v in self._vars.items():
            if v.grad is not None:
                self.store.accumulate_grad(name, scale * v.grad)


# ---------------------------------------------------------------------------
# ops


def matmul(a: Var, b: Var) -> Var:
    def vjp(g):
        return g @ b.value.T, a.value.T @ g

    return Var(a.value @ b.value, (a, b), vjp)


def transpose(a: Var) -> Var:
    return Var(a.value.T, (a,), lambda g: (g.T,))


def add(a: Var, b: Var) -> Var:
    """Elementwise sum; ``b`` may be a 1 x K row broadcast over a's rows."""
    if a.shape == b.shape:
        return Var(a.value + b.value, (a, b), lambda g: (g, g))
    if b.shape == (1, a.shape[1]):
        return Var(
            a.value + b.value,
            (a, b),
            lambda g: (g, g.sum(axis=0, keepdims=True)),
        )
    raise ValueError(f"add: incompatible shapes {a.shape} and {b.shape}")


def mul(a: Var, b: Var) -> Var:
    if a.shape != b.shape:
        raise ValueError(f"mul: shapes differ, {a.shape} vs {b.shape}")
    return Var(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def scale(a: Var, c: float) -> Var:
    return Var(a.value * c, (a,), lambda g: (g * c,))


def scale_rows(a: Var, s: Var) -> Var:
    """Multiply each row of ``a`` (N x K) by the matching entry of ``s`` (N x 1)."""
    if s.shape != (a.shape[0], 1):
        raise ValueError(f"scale_rows: weights {s.shape} vs rows {a.shape}")

    def vjp(g):
        return g * s.value, (g * a.value).sum(axis=1, keepdims=True)

    return Var(a.value * s.value, (a, s), vjp)


def div_rows(a: Var, d: Var) -> Var:
    """Divide each row of ``a`` (N x K) by the matching entry of ``d`` (N x 1)."""
    if d.shape != (a.shape[0], 1):
        raise ValueError(f"div_rows: denominators {d.shape} vs rows {a.shape}")
    out = a.value / d.value

    def vjp(g):
        return g / d.value, -(g * out).sum(axis=1, keepdims=True) / d.value

    return Var(out, (a, d), vjp)


def div_by_scalar(a: Var, s: Var) -> Var:
    if s.value.size != 1:
        raise ValueError(f"div_by_scalar: divisor has shape {s.shape}")
    denom = float(s.value.reshape(()))
    out = a.value / denom

    def vjp(g):
        return g / denom, np.array([[-(g * out).sum() / denom]])

    return Var(out, (a, s), vjp)


def sigmoid(a: Var) -> Var:
    out = nncore.sigmoid(a.value)
    return Var(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Var) -> Var:
    out = np.tanh(a.value)
    return Var(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Var) -> Var:
    mask = a.value > 0
    return Var(a.value * mask, (a,), lambda g: (g * mask,))


def concat_cols(a: Var, b: Var) -> Var:
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"concat_cols: row counts differ, {a.shape} vs {b.shape}")
    split = a.shape[1]
    return Var(
        np.concatenate([a.value, b.value], axis=1),
        (a, b),
        lambda g: (g[:, :split], g[:, split:]),
    )


def repeat_rows(a: Var, n: int) -> Var:
    """Tile a 1 x K row into an n x K matrix."""
    if a.shape[0] != 1:
        raise ValueError(f"repeat_rows expects a single row, got {a.shape}")
    return Var(
        np.repeat(a.value, n, axis=0),
        (a,),
        lambda g: (g.sum(axis=0, keepdims=True),),
    )


def cumsum_rows(a: Var) -> Var:
    """Prefix sums down the rows: out[t] = sum_{i<=t} a[i]."""

    def vjp(g):
        return (np.flip(np.cumsum(np.flip(g, axis=0), axis=0), axis=0),)

    return Var(np.cumsum(a.value, axis=0), (a,), vjp)


def row(a: Var, i: int) -> Var:
    def vjp(g):
        out = np.zeros_like(a.value)
        out[i : i + 1] = g
        return (out,)

    return Var(a.value[i : i + 1], (a,), vjp)


def cols(a: Var, j0: int, j1: int) -> Var:
    def vjp(g):
        out = np.zeros_like(a.value)
        out[:, j0:j1] = g
        return (out,)

    return Var(a.value[:, j0:j1], (a,), vjp)


def vstack(rows: list[Var]) -> Var:
    heights = [r.shape[0] for r in rows]
    edges = np.concatenate([[0], np.cumsum(heights)])

    def vjp(g):
        return tuple(g[edges[k] : edges[k + 1]] for k in range(len(rows)))

    return Var(np.concatenate([r.value for r in rows], axis=0), tuple(rows), vjp)


def softmax_col(a: Var) -> Var:
    """Softmax down a single column (N x 1)."""
    if a.shape[1] != 1:
        raise ValueError(f"softmax_col expects an N x 1 column, got {a.shape}")
    out = nncore.softmax(a.value.reshape(-1)).reshape(-1, 1)

    def vjp(g):
        return (out * (g - (g * out).sum()),)

    return Var(out, (a,), vjp)


def sum_all(a: Var) -> Var:
    return Var(
        np.array([[a.value.sum()]]),
        (a,),
        lambda g: (np.full_like(a.value, float(g.reshape(()))),),
    )


def sum_sq(a: Var) -> Var:
    return Var(
        np.array([[(a.value**2).sum()]]),
        (a,),
        lambda g: (2.0 * float(g.reshape(())) * a.value,),
    )


def cross_entropy_mean(logits: Var, labels) -> Var:
    """Mean softmax cross-entropy of B x C logits against integer labels."""
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    batch, n_classes = logits.shape
    if labels.size != batch:
        raise ValueError(f"{labels.size} labels for {batch} logit rows")
    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(batch), labels].mean()

    def vjp(g):
        probs = np.exp(log_probs)
        probs[np.arange(batch), labels] -= 1.0
        return (float(g.reshape(())) * probs / batch,)

    return Var(np.array([[loss]]), (logits,), vjp)


def mse_mean(pred: Var, target: np.ndarray) -> Var:
    """Mean squared error against a constant target of the same shape."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.shape:
        raise ValueError(f"mse_mean: target {target.shape} vs pred {pred.shape}")
    diff = pred.value - target
    loss = (diff**2).mean()

    def vjp(g):
        return (float(g.reshape(())) * 2.0 * diff / diff.size,)

    return Var(np.array([[loss]]), (pred,), vjp)


def dense(x: Var, w: Var, b: Var) -> Var:
    return add(matmul(x, w), b)


def lstm_step(x: Var, h_prev: Var, m_prev: Var, wx: Var, wh: Var, b: Var) -> tuple[Var, Var]:
    """Tape twin of :func:`smartsel.nncore.lstm_step`; same gate order."""
    hidden = wh.shape[0]
    z = add(add(matmul(x, wx), matmul(h_prev, wh)), b)
    i = sigmoid(cols(z, 0, hidden))
    f = sigmoid(cols(z, hidden, 2 * hidden))
    g = tanh(cols(z, 2 * hidden, 3 * hidden))
    o = sigmoid(cols(z, 3 * hidden, 4 * hidden))
    m = add(mul(f, m_prev), mul(i, g))
    h = mul(o, tanh(m))
    return h, m

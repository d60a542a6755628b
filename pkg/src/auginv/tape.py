"""Minimal reverse-mode autodiff over numpy arrays.

The op set is exactly what the losses need: affine maps, ReLU, elementwise
arithmetic, powers, exp/log, axis reductions, and row/element gathers whose
index arrays (sort and shuffle permutations) are constants in the backward
pass. Values are float64 throughout.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` to undo numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # Sum over prepended axes.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    # Operator sugar; constants are wrapped on the fly.
    def __add__(self, other):
        return add(self, wrap(other))

    def __radd__(self, other):
        return add(wrap(other), self)

    def __sub__(self, other):
        return sub(self, wrap(other))

    def __rsub__(self, other):
        return sub(wrap(other), self)

    def __mul__(self, other):
        return mul(self, wrap(other))

    def __rmul__(self, other):
        return mul(wrap(other), self)

    def __truediv__(self, other):
        return mul(self, power(wrap(other), -1.0))

    def __neg__(self):
        return mul(self, wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, wrap(other))


def wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def param(value) -> Tensor:
    return Tensor(value, requires_grad=True)


def _accumulate(t: Tensor, g: np.ndarray):
    g = _unbroadcast(np.asarray(g, dtype=np.float64), t.value.shape)
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def backward(out: Tensor, seed=None):
    """Reverse sweep from ``out``; gradients land in ``.grad`` of every node
    with ``requires_grad``."""
    topo: list[Tensor] = []
    seen = set()
    stack = [(out, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))

    out.grad = np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=np.float64)
    for node in reversed(topo):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)


# --- primitive ops ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value + b.value, (a, b))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, g)

    out.backward_fn = bw
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value - b.value, (a, b))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, -g)

    out.backward_fn = bw
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value * b.value, (a, b))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * b.value)
        if b.requires_grad:
            _accumulate(b, g * a.value)

    out.backward_fn = bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value @ b.value, (a, b))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.value.T)
        if b.requires_grad:
            _accumulate(b, a.value.T @ g)

    out.backward_fn = bw
    return out


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    out = Tensor(a.value * mask, (a,))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * mask)

    out.backward_fn = bw
    return out


def power(a: Tensor, exponent: float) -> Tensor:
    out = Tensor(np.power(a.value, exponent), (a,))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * exponent * np.power(a.value, exponent - 1.0))

    out.backward_fn = bw
    return out


def absolute(a: Tensor) -> Tensor:
    """|a| with sign subgradient (0 at 0)."""
    sign = np.sign(a.value)
    out = Tensor(np.abs(a.value), (a,))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * sign)

    out.backward_fn = bw
    return out


def square(a: Tensor) -> Tensor:
    return power(a, 2.0)


def exp(a: Tensor) -> Tensor:
    val = np.exp(a.value)
    out = Tensor(val, (a,))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * val)

    out.backward_fn = bw
    return out


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.value), (a,))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g / a.value)

    out.backward_fn = bw
    return out


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = Tensor(a.value.sum(axis=axis, keepdims=keepdims), (a,))

    def bw(g):
        if not a.requires_grad:
            return
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.value.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(gg, a.value.shape))

    out.backward_fn = bw
    return out


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = a.value.size
    else:
        n = a.value.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), wrap(1.0 / n))


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather; ``idx`` is a constant index vector."""
    idx = np.asarray(idx)
    out = Tensor(a.value[idx], (a,))

    def bw(g):
        if a.requires_grad:
            acc = np.zeros_like(a.value)
            np.add.at(acc, idx, g)
            _accumulate(a, acc)

    out.backward_fn = bw
    return out


def take_along_cols(a: Tensor, idx: np.ndarray) -> Tensor:
    """Per-column row gather: out[i, j] = a[idx[i, j], j].

    Used to apply a fixed per-projection sort permutation.
    """
    idx = np.asarray(idx)
    out = Tensor(np.take_along_axis(a.value, idx, axis=0), (a,))

    def bw(g):
        if a.requires_grad:
            acc = np.zeros_like(a.value)
            cols = np.broadcast_to(np.arange(a.value.shape[1]), idx.shape)
            np.add.at(acc, (idx, cols), g)
            _accumulate(a, acc)

    out.backward_fn = bw
    return out


def concat_rows(tensors: list[Tensor]) -> Tensor:
    sizes = [t.value.shape[0] for t in tensors]
    out = Tensor(np.concatenate([t.value for t in tensors], axis=0), tuple(tensors))

    def bw(g):
        start = 0
        for t, n in zip(tensors, sizes):
            if t.requires_grad:
                _accumulate(t, g[start:start + n])
            start += n

    out.backward_fn = bw
    return out


# --- composites ------------------------------------------------------------


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w.T + b for a (out, in) weight block and (out,) bias."""
    return add(matmul(x, transpose(w)), b)


def transpose(a: Tensor) -> Tensor:
    out = Tensor(a.value.T, (a,))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g.T)

    out.backward_fn = bw
    return out


def row_normalize(a: Tensor, eps: float = 1e-12) -> Tensor:
    """L2-normalize rows."""
    sq = tsum(square(a), axis=1, keepdims=True)
    inv = power(add(sq, wrap(eps)), -0.5)
    return mul(a, inv)


def logsumexp_rows(a: Tensor) -> Tensor:
    """Row-wise log-sum-exp, stabilized with a constant max shift."""
    shift = np.max(a.value, axis=1, keepdims=True)
    return add(log(tsum(exp(sub(a, wrap(shift))), axis=1)), wrap(shift[:, 0]))

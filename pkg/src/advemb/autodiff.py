"""Reverse-mode autodiff on dense float64 arrays.

A :class:`Tape` records forward operations as they execute; calling
:meth:`Tape.backward` on a scalar output replays the recording in reverse
and accumulates d(output)/d(parameter) into each participating
:class:`Parameter`'s ``grad`` buffer.  Matrices are plain 2-D numpy arrays,
vectors are 1-D, scalars are 0-D.  Everything is double precision.

Plain (untaped) versions of the numeric kernels live at module level so
inference code can call them without building a graph.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateInputError, DimensionMismatch, NumericError, TapeStateError


# ---------------------------------------------------------------------------
# plain numeric kernels


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    if a.shape[-1] != b.shape[0]:
        raise DimensionMismatch(f"matmul: {a.shape} x {b.shape}")
    return a @ b


def scaled_softmax(logits: np.ndarray, scale: float) -> np.ndarray:
    """softmax(logits / scale), stabilized by max subtraction.

    ``scale`` must be positive; non-finite logits are rejected.
    """
    if scale <= 0:
        raise ValueError(f"softmax scale must be positive, got {scale}")
    logits = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise NumericError("scaled_softmax: non-finite logits")
    z = logits / scale
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def masked_scaled_softmax(logits: np.ndarray, scale: float, keep: np.ndarray) -> np.ndarray:
    """Softmax over the entries where ``keep`` is true; zeros elsewhere."""
    keep = np.asarray(keep, dtype=bool)
    if not keep.any():
        raise DegenerateInputError("softmax: all entries masked")
    out = np.zeros_like(np.asarray(logits, dtype=float))
    out[keep] = scaled_softmax(np.asarray(logits, dtype=float)[keep], scale)
    return out


def euclidean_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Plain (unsquared) Euclidean norm of u - v."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch(f"euclidean_distance: {u.shape} vs {v.shape}")
    return float(np.linalg.norm(u - v))


def hinge(x: float) -> float:
    """max(0, x)."""
    return x if x > 0 else 0.0


def xavier_uniform(rng: np.ndarray, fan_in: int, fan_out: int, shape) -> np.ndarray:
    """Uniform init in [-s, s] with s = sqrt(6 / (fan_in + fan_out))."""
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


# ---------------------------------------------------------------------------
# tape


class Parameter:
    """A trainable array with its gradient and Adam state.

    ``value``, ``grad``, ``adam_m`` and ``adam_v`` always share one shape;
    the moments and step count start at zero.
    """

    __slots__ = ("name", "value", "grad", "adam_m", "adam_v", "step")

    def __init__(self, value: np.ndarray, name: str = ""):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=float)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)
        self.step = 0

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name or '?'}, shape={self.value.shape}, step={self.step})"


class Node:
    """One recorded value in the computation graph."""

    __slots__ = ("value", "grad", "backward_fn", "param")

    def __init__(self, value: np.ndarray, backward_fn: Callable | None = None,
                 param: Parameter | None = None):
        self.value = value
        self.grad = None
        self.backward_fn = backward_fn
        self.param = param

    def _add_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value, dtype=float)
        self.grad += g


class Tape:
    """Records forward ops; replays them in reverse to populate gradients.

    Each backward call contributes each parameter's gradient exactly once
    (accumulating into ``Parameter.grad``); calling backward twice on the
    same tape is an error.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._param_nodes: dict[int, Node] = {}
        self._done = False

    # -- leaves ------------------------------------------------------------

    def param(self, p: Parameter) -> Node:
        node = self._param_nodes.get(id(p))
        if node is None:
            node = Node(p.value, param=p)
            self._param_nodes[id(p)] = node
            self.nodes.append(node)
        return node

    def constant(self, value) -> Node:
        node = Node(np.asarray(value, dtype=float))
        self.nodes.append(node)
        return node

    def _record(self, value: np.ndarray, backward_fn: Callable) -> Node:
        node = Node(value, backward_fn=backward_fn)
        self.nodes.append(node)
        return node

    # -- ops ---------------------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        out = matmul(a.value, b.value)
        av, bv = a.value, b.value

        def backward(g):
            if av.ndim == 2 and bv.ndim == 2:
                a._add_grad(g @ bv.T)
                b._add_grad(av.T @ g)
            elif av.ndim == 2 and bv.ndim == 1:
                a._add_grad(np.outer(g, bv))
                b._add_grad(av.T @ g)
            elif av.ndim == 1 and bv.ndim == 2:
                a._add_grad(bv @ g)
                b._add_grad(np.outer(av, g))
            else:  # vector dot
                a._add_grad(g * bv)
                b._add_grad(g * av)

        return self._record(out, backward)

    def add(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise DimensionMismatch(f"add: {a.value.shape} vs {b.value.shape}")
        return self._record(a.value + b.value,
                            lambda g: (a._add_grad(g), b._add_grad(g)))

    def sub(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise DimensionMismatch(f"sub: {a.value.shape} vs {b.value.shape}")
        return self._record(a.value - b.value,
                            lambda g: (a._add_grad(g), b._add_grad(-g)))

    def scale(self, a: Node, c: float) -> Node:
        return self._record(a.value * c, lambda g: a._add_grad(g * c))

    def shift(self, a: Node, c: float) -> Node:
        return self._record(a.value + c, lambda g: a._add_grad(g))

    def row(self, a: Node, i: int) -> Node:
        """Row i of a 2-D node, as a vector."""
        n = a.value.shape[0]
        if not 0 <= i < n:
            raise LookupError(f"row {i} out of range for shape {a.value.shape}")

        def backward(g):
            full = np.zeros_like(a.value, dtype=float)
            full[i] = g
            a._add_grad(full)

        return self._record(a.value[i].copy(), backward)

    def block(self, a: Node, i0: int, i1: int) -> Node:
        """Rows [i0, i1) of a 2-D node, or the slice of a 1-D node."""

        def backward(g):
            full = np.zeros_like(a.value, dtype=float)
            full[i0:i1] = g
            a._add_grad(full)

        return self._record(a.value[i0:i1].copy(), backward)

    def concat(self, parts: Sequence[Node]) -> Node:
        sizes = [p.value.shape[0] for p in parts]
        offs = np.cumsum([0] + sizes)

        def backward(g):
            for p, o0, o1 in zip(parts, offs[:-1], offs[1:]):
                p._add_grad(g[o0:o1])

        return self._record(np.concatenate([p.value for p in parts]), backward)

    def transpose(self, a: Node) -> Node:
        return self._record(a.value.T.copy(), lambda g: a._add_grad(g.T))

    def flatten(self, a: Node) -> Node:
        shape = a.value.shape
        return self._record(a.value.reshape(-1).copy(),
                            lambda g: a._add_grad(g.reshape(shape)))

    def relu(self, a: Node) -> Node:
        pos = a.value > 0
        return self._record(np.where(pos, a.value, 0.0),
                            lambda g: a._add_grad(g * pos))

    def tanh(self, a: Node) -> Node:
        t = np.tanh(a.value)
        return self._record(t, lambda g: a._add_grad(g * (1.0 - t * t)))

    def masked_softmax(self, logits: Node, scale: float, keep: np.ndarray) -> Node:
        keep = np.asarray(keep, dtype=bool)
        p = masked_scaled_softmax(logits.value, scale, keep)

        def backward(g):
            gk = g[keep]
            pk = p[keep]
            dl = np.zeros_like(p)
            dl[keep] = pk * (gk - float(pk @ gk)) / scale
            logits._add_grad(dl)

        return self._record(p, backward)

    def euclidean(self, a: Node, b: Node) -> Node:
        diff = a.value - b.value
        d = float(np.linalg.norm(diff))

        def backward(g):
            if d > 0.0:
                e = diff / d
                a._add_grad(g * e)
                b._add_grad(-g * e)
            # subgradient 0 at a == b

        return self._record(np.float64(d), backward)

    def sqnorm(self, a: Node) -> Node:
        return self._record(np.float64(np.sum(a.value * a.value)),
                            lambda g: a._add_grad(2.0 * g * a.value))

    def hinge(self, a: Node) -> Node:
        x = float(a.value)
        return self._record(np.float64(x if x > 0 else 0.0),
                            lambda g: a._add_grad(g if x > 0 else np.float64(0.0)))

    def mean(self, parts: Sequence[Node]) -> Node:
        n = len(parts)
        val = np.float64(math.fsum(float(p.value) for p in parts) / n)

        def backward(g):
            for p in parts:
                p._add_grad(g / n)

        return self._record(val, backward)

    # -- reverse pass --------------------------------------------------------

    def backward(self, output: Node) -> None:
        """Populate Parameter.grad with d(output)/d(param) for every leaf."""
        if self._done:
            raise TapeStateError("backward already called on this tape")
        if np.asarray(output.value).ndim != 0:
            raise TapeStateError(
                f"backward requires a scalar output, got shape {np.asarray(output.value).shape}")
        self._done = True
        output.grad = np.float64(1.0)
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            if node.backward_fn is not None:
                node.backward_fn(node.grad)
            elif node.param is not None:
                node.param.grad += node.grad

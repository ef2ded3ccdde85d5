"""A minimal float64 reverse-mode autodiff engine.

Design constraints, in order:
- correctness at 64-bit precision (every primitive is finite-difference
  checked in the test suite);
- analyzability: a Tape is an append-only list whose insertion order is
  already a topological order, and backward walks it once in reverse;
- speed through numpy: all heavy lifting happens inside BLAS calls on
  whole batches, never per-node Python loops.

A Tape is single-threaded; independent Tapes may run concurrently.
Tensors default to ``requires_grad=False``; gradients of detached
inputs are absent (``grad is None``), never zero-filled.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ParameterError, ShapeError

_STATE = threading.local()


def _tape_stack() -> list:
    if not hasattr(_STATE, "stack"):
        _STATE.stack = []
    return _STATE.stack


class Tensor:
    """A dense float64 array plus its place in the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bw")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._bw = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar over the functional primitives.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


class Tape:
    """Append-only record of primitive applications.

    Usage::

        with Tape() as tape:
            loss = forward(...)
            tape.backward(loss)

    Ops executed outside any active Tape (or with no differentiable
    input) run as plain numpy and record nothing.
    """

    def __init__(self):
        self._nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _tape_stack().pop()
        assert popped is self, "tapes must nest"

    @staticmethod
    def active() -> "Tape | None":
        stack = _tape_stack()
        return stack[-1] if stack else None

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every reachable leaf's .grad.

        Insertion order is a topological order, so one reverse sweep
        visits each node exactly once.
        """
        if loss._bw is None or loss not in self._nodes:
            raise ParameterError("backward target was not recorded on this tape")
        if loss.data.size != 1:
            raise ParameterError(f"backward needs a scalar, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        # ids of grad buffers this sweep allocated itself; only those may
        # be accumulated into in place (others might alias an op output)
        owned: set[int] = set()
        for node in reversed(self._nodes):
            if node.grad is None or node._bw is None:
                continue
            for parent, pgrad in zip(node._parents, node._bw(node.grad)):
                if pgrad is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    if pgrad.base is None:
                        parent.grad = pgrad
                    else:
                        parent.grad = pgrad.copy()
                        owned.add(id(parent.grad))
                elif id(parent.grad) in owned:
                    parent.grad += pgrad
                else:
                    parent.grad = parent.grad + pgrad
                    owned.add(id(parent.grad))
        # Interior results are one-shot; free their graph edges.
        for node in self._nodes:
            node._parents = ()
            node._bw = None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data: np.ndarray, parents: tuple, bw) -> Tensor:
    tape = Tape.active()
    track = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = parents
        out._bw = bw
        tape._nodes.append(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to ``shape`` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary_shapes_ok(a: np.ndarray, b: np.ndarray) -> bool:
    try:
        np.broadcast_shapes(a.shape, b.shape)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------- primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not _binary_shapes_ok(a.data, b.data):
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}")
    return _record(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not _binary_shapes_ok(a.data, b.data):
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}")
    return _record(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not _binary_shapes_ok(a.data, b.data):
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}")
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def maximum(a, b) -> Tensor:
    """Elementwise max; at exact ties the gradient flows to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if not _binary_shapes_ok(a.data, b.data):
        raise ShapeError(f"maximum: cannot broadcast {a.shape} with {b.shape}")
    a_wins = a.data >= b.data
    return _record(
        np.maximum(a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(g * a_wins, a.shape), _unbroadcast(g * ~a_wins, b.shape)),
    )


def minimum(a, b) -> Tensor:
    """Elementwise min; at exact ties the gradient flows to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if not _binary_shapes_ok(a.data, b.data):
        raise ShapeError(f"minimum: cannot broadcast {a.shape} with {b.shape}")
    a_wins = a.data <= b.data
    return _record(
        np.minimum(a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(g * a_wins, a.shape), _unbroadcast(g * ~a_wins, b.shape)),
    )


def _swap_last(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")

    def bw(g):
        return (
            _unbroadcast(np.matmul(g, _swap_last(b.data)), a.shape),
            _unbroadcast(np.matmul(_swap_last(a.data), g), b.shape),
        )

    return _record(np.matmul(a.data, b.data), (a, b), bw)


def concat(parts, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ParameterError("concat needs at least one part")
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(data, tuple(parts), bw)


def slice_(a, key) -> Tensor:
    a = as_tensor(a)
    data = a.data[key]

    def bw(g):
        gz = np.zeros_like(a.data)
        if isinstance(key, slice):
            # a plain slice never repeats an index
            gz[key] = g
        else:
            np.add.at(gz, key, g)
        return (gz,)

    return _record(data, (a,), bw)


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _record(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _record(s, (a,), lambda g: (g * s * (1.0 - s),))


def softmax(a, axis: int = -1) -> Tensor:
    """Row-stochastic softmax along ``axis``."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        inner = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - inner),)

    return _record(s, (a,), bw)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    lse = m_safe + np.log(np.exp(a.data - m_safe).sum(axis=axis, keepdims=True))
    out = lse if keepdims else np.squeeze(lse, axis=axis)

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        return (np.exp(a.data - lse) * gk,)

    return _record(out, (a,), bw)


def max_reduce(a, axis: int) -> Tensor:
    """Max along one axis; gradient flows to the first attaining index."""
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    hit = a.data == m
    first = hit & (np.cumsum(hit, axis=axis) == 1)

    def bw(g):
        return (first * np.expand_dims(g, axis),)

    return _record(np.squeeze(m, axis=axis), (a,), bw)


def sum_reduce(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gk = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gk, a.shape).copy(),)

    return _record(data, (a,), bw)


def mean_reduce(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        gk = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gk / count, a.shape).copy(),)

    return _record(data, (a,), bw)


def masked_fill(a, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is True by ``value`` (no grad there)."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    if not _binary_shapes_ok(a.data, mask):
        raise ShapeError(f"masked_fill: mask {mask.shape} does not broadcast to {a.shape}")
    keep = ~np.broadcast_to(mask, a.shape)
    return _record(np.where(keep, a.data, value), (a,), lambda g: (g * keep,))


def power(a, exponent: float) -> Tensor:
    """Elementwise x**exponent for a fixed real exponent."""
    a = as_tensor(a)
    data = np.power(a.data, exponent)

    def bw(g):
        return (g * exponent * np.power(a.data, exponent - 1.0),)

    return _record(data, (a,), bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inverse = tuple(np.argsort(axes))
    return _record(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    return _record(
        np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (_unbroadcast(g, a.shape),)
    )


class SegmentPlan:
    """Precomputed stable sort of an index array, shared by the sorted
    fast paths of gather_rows and segment_max.

    Building one costs a single argsort; reusing it replaces the slow
    ``np.ufunc.at`` scatter loops with contiguous ``reduceat`` calls.
    """

    __slots__ = ("index", "order", "starts", "present", "sorted_index")

    def __init__(self, index: np.ndarray):
        index = np.asarray(index, dtype=np.int64)
        self.index = index
        self.order = np.argsort(index, kind="stable")
        self.sorted_index = index[self.order]
        if index.size:
            change = np.empty(index.size, dtype=bool)
            change[0] = True
            np.not_equal(self.sorted_index[1:], self.sorted_index[:-1], out=change[1:])
            self.starts = np.flatnonzero(change)
        else:
            self.starts = np.zeros(0, dtype=np.int64)
        self.present = self.sorted_index[self.starts]


def gather_rows(a, index: np.ndarray, plan: SegmentPlan | None = None) -> Tensor:
    """Select rows along axis 0; duplicate indices sum their gradients.

    ``plan`` (built from the same index array) switches the backward
    scatter-add to a sorted reduceat; sums may associate differently.
    """
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)

    def bw(g):
        gz = np.zeros_like(a.data)
        if plan is not None and index.size:
            gz[plan.present] = np.add.reduceat(g[plan.order], plan.starts, axis=0)
        else:
            np.add.at(gz, index, g)
        return (gz,)

    return _record(a.data[index], (a,), bw)


def segment_max(a, segments: np.ndarray, num_segments: int,
                plan: SegmentPlan | None = None) -> Tensor:
    """Per-segment elementwise max over rows; empty segments yield zeros.

    The gradient of each output feature flows to the first row (lowest
    row index) attaining the maximum, matching max_reduce's subgradient
    convention.  ``plan`` must be built from ``segments``; it changes
    nothing numerically, only the scatter strategy.
    """
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=np.int64)
    if a.ndim != 2:
        raise ShapeError(f"segment_max expects (rows, features), got {a.shape}")
    if segments.shape != (a.shape[0],):
        raise ShapeError(f"segments {segments.shape} must index rows of {a.shape}")
    rows, feats = a.shape
    raw = np.full((num_segments, feats), -np.inf)
    sorted_rows = None
    if rows:
        if plan is not None:
            sorted_rows = a.data[plan.order]
            raw[plan.present] = np.maximum.reduceat(sorted_rows, plan.starts, axis=0)
        else:
            np.maximum.at(raw, segments, a.data)
    out = np.where(np.isfinite(raw), raw, 0.0)

    def bw(g):
        gz = np.zeros_like(a.data)
        if not rows:
            return (gz,)
        if plan is not None:
            hit = sorted_rows == raw[plan.sorted_index]
            rid = np.where(hit, plan.order[:, None], rows)
            first = np.minimum.reduceat(rid, plan.starts, axis=0)
            ok = first < rows
            cols = np.broadcast_to(np.arange(feats)[None, :], first.shape)
            gz[first[ok], cols[ok]] = g[plan.present][ok]
        else:
            hit = a.data == raw[segments]
            row_ids = np.where(hit, np.arange(rows)[:, None], rows)
            first = np.full((num_segments, feats), rows, dtype=np.int64)
            np.minimum.at(first, segments, row_ids)
            sel = hit & (first[segments] == np.arange(rows)[:, None])
            gz[sel] = g[segments][sel]
        return (gz,)

    return _record(out, (a,), bw)


# ------------------------------------------------------- shared composites


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    return add(out, b) if b is not None else out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale-shift."""
    mu = mean_reduce(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = mean_reduce(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, Tensor(eps)), -0.5)
    return add(mul(mul(centered, inv), gamma), beta)


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), computed stably as logsumexp([x, 0])."""
    expanded = reshape(x, x.shape + (1,))
    zeros = Tensor(np.zeros(x.shape + (1,)))
    return logsumexp(concat([expanded, zeros], axis=-1), axis=-1)

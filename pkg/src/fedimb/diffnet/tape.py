"""Reverse-mode differentiation on an explicit operation tape.

Every primitive applied while a :class:`Tape` is active appends one node
``(output, inputs, vjp)`` to the tape.  :meth:`Tape.gradient` walks the
node list backwards.  The vector-Jacobian products are themselves written
with tensor primitives, so passing ``create_graph=True`` records the
reverse sweep on the same tape and the resulting gradients can be
differentiated again (needed for the gradient penalty).
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when an engine operation produces NaN or Inf."""


class TapeError(RuntimeError):
    pass


_state = threading.local()


def _stack() -> list:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = _state.tapes = []
    return stack


def _active_tape() -> "Tape | None":
    stack = getattr(_state, "tapes", None)
    if not stack:
        return None
    tape = stack[-1]
    return None if tape._paused else tape


class Tensor:
    """A float64 array that may take part in taped computations."""

    __slots__ = ("value", "requires_grad", "__weakref__")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self) -> str:
        return f"Tensor({self.value!r}, requires_grad={self.requires_grad})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records primitive operations for reverse traversal.

    Use as a context manager; tapes are thread-local and nest (the
    innermost active tape records).
    """

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._paused = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        for i in range(len(stack) - 1, -1, -1):
            if stack[i] is self:
                del stack[i]
                break

    def watch(self, t: Tensor) -> Tensor:
        t.requires_grad = True
        return t

    def gradient(
        self,
        target: Tensor,
        sources: Sequence[Tensor],
        output_grad=None,
        create_graph: bool = False,
    ) -> list[Tensor]:
        """Gradients of ``target`` w.r.t. each of ``sources``.

        Sources that ``target`` does not depend on get zero gradients.
        With ``create_graph`` the reverse sweep is recorded on this tape.
        """
        if output_grad is None:
            seed = Tensor(np.ones_like(target.value))
        else:
            seed = as_tensor(output_grad)
            if seed.shape != target.shape:
                raise ValueError(
                    f"output_grad shape {seed.shape} != target shape {target.shape}"
                )
        grads: dict[int, Tensor] = {id(target): seed}
        n = len(self.nodes)
        prev_paused = self._paused
        # push self so vjp ops record here (create_graph) or nowhere
        _stack().append(self)
        self._paused = not create_graph
        try:
            for out, inputs, vjp in reversed(self.nodes[:n]):
                g = grads.pop(id(out), None)
                if g is None:
                    continue
                in_grads = vjp(g)
                for inp, ig in zip(inputs, in_grads):
                    if ig is None or not inp.requires_grad:
                        continue
                    key = id(inp)
                    if key in grads:
                        grads[key] = add(grads[key], ig)
                    else:
                        grads[key] = ig
            result = []
            for s in sources:
                g = grads.get(id(s))
                if g is None:
                    g = Tensor(np.zeros_like(s.value))
                result.append(g)
            return result
        finally:
            _stack().pop()
            self._paused = prev_paused

    def __len__(self) -> int:
        return len(self.nodes)


class no_record:
    """Context manager that suspends recording on the active tape."""

    def __enter__(self):
        self._tape = _active_tape()
        if self._tape is not None:
            self._tape._paused = True
        return self

    def __exit__(self, *exc):
        if self._tape is not None:
            self._tape._paused = False


def _check(value: np.ndarray, op: str) -> np.ndarray:
    # a NaN or inf anywhere makes the sum non-finite; cheaper than isfinite().all()
    if not math.isfinite(np.add.reduce(value, axis=None)):
        raise NonFiniteError(f"non-finite value produced by {op}")
    return value


def _make(value, inputs: tuple, vjp: Callable, op: str, check: bool = True) -> Tensor:
    # check=False is for ops that only move entries of already-checked inputs
    value = np.asarray(value, dtype=np.float64)
    if check:
        _check(value, op)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out = Tensor(value, requires_grad=True)
        tape.nodes.append((out, inputs, vjp))
        return out
    return Tensor(value)


# --- broadcasting helpers -------------------------------------------------


def _reduce_axes(shape: tuple, target: tuple) -> tuple[tuple, bool]:
    lead = len(shape) - len(target)
    axes = list(range(lead))
    for i, dim in enumerate(target):
        if dim == 1 and shape[lead + i] != 1:
            axes.append(lead + i)
    return tuple(axes), lead > 0


def sum_to(x: Tensor, shape: tuple) -> Tensor:
    """Sum ``x`` down to a broadcast-compatible ``shape``."""
    if x.shape == tuple(shape):
        return x
    axes, _ = _reduce_axes(x.shape, tuple(shape))
    value = x.value.sum(axis=axes).reshape(shape)
    src = x.shape
    return _make(value, (x,), lambda g: (broadcast_to(g, src),), "sum_to")


def broadcast_to(x: Tensor, shape: tuple) -> Tensor:
    if x.shape == tuple(shape):
        return x
    src = x.shape
    value = np.broadcast_to(x.value, shape).copy()
    return _make(value, (x,), lambda g: (sum_to(g, src),), "broadcast_to", check=False)


# --- primitives -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value + b.value,
        (a, b),
        lambda g: (
            sum_to(g, a.shape) if a.requires_grad else None,
            sum_to(g, b.shape) if b.requires_grad else None,
        ),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value - b.value,
        (a, b),
        lambda g: (
            sum_to(g, a.shape) if a.requires_grad else None,
            sum_to(neg(g), b.shape) if b.requires_grad else None,
        ),
        "sub",
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.value, (a,), lambda g: (neg(g),), "neg", check=False)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value * b.value,
        (a, b),
        lambda g: (
            sum_to(mul(g, b), a.shape) if a.requires_grad else None,
            sum_to(mul(g, a), b.shape) if b.requires_grad else None,
        ),
        "mul",
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value @ b.value,
        (a, b),
        lambda g: (
            matmul(g, transpose(b)) if a.requires_grad else None,
            matmul(transpose(a), g) if b.requires_grad else None,
        ),
        "matmul",
    )


def affine(x, w, b) -> Tensor:
    """``x @ w + b`` as one node, for a row batch ``x`` and a bias row ``b``."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    value = x.value @ w.value
    value += b.value
    return _make(
        value,
        (x, w, b),
        lambda g: (
            matmul(g, transpose(w)) if x.requires_grad else None,
            matmul(transpose(x), g) if w.requires_grad else None,
            sum_to(g, b.shape) if b.requires_grad else None,
        ),
        "affine",
    )


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.value.T, (a,), lambda g: (transpose(g),), "transpose", check=False)


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    return _make(
        a.value**p,
        (a,),
        lambda g: (mul(g, mul(p, power(a, p - 1))),),
        "power",
    )


def safe_reciprocal(a) -> Tensor:
    """``1/a`` with the convention ``1/0 = 0`` (used for sqrt at zero)."""
    a = as_tensor(a)
    zero = a.value == 0
    value = np.divide(1.0, a.value, out=np.zeros_like(a.value), where=~zero)

    def vjp(g):
        r = safe_reciprocal(a)
        return (neg(mul(g, mul(r, r))),)

    return _make(value, (a,), vjp, "safe_reciprocal")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if (a.value < 0).any():
        raise ValueError("sqrt of negative value")
    out_value = np.sqrt(a.value)
    holder: list[Tensor] = []

    def vjp(g):
        return (mul(g, mul(0.5, safe_reciprocal(holder[0]))),)

    out = _make(out_value, (a,), vjp, "sqrt")
    holder.append(out)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.value), (a,), lambda g: (mul(g, power(a, -1.0)),), "log")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = (a.value > 0).astype(np.float64)
    # second derivative is taken as zero: the mask is a constant
    return _make(a.value * mask, (a,), lambda g: (mul(g, mask),), "relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    value = np.empty_like(x)
    pos = x >= 0
    value[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    value[~pos] = ex / (1.0 + ex)
    holder: list[Tensor] = []

    def vjp(g):
        s = holder[0]
        return (mul(g, mul(s, sub(1.0, s))),)

    out = _make(value, (a,), vjp, "sigmoid")
    holder.append(out)
    return out


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    mask = ((a.value >= lo) & (a.value <= hi)).astype(np.float64)
    return _make(np.clip(a.value, lo, hi), (a,), lambda g: (mul(g, mask),), "clip")


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    value = a.value.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = reshape(g, np.expand_dims(g.value, axis).shape)
        elif axis is None:
            g = reshape(g, (1,) * len(shape))
        return (broadcast_to(g, shape),)

    return _make(value, (a,), vjp, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.value.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape: tuple) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    return _make(a.value.reshape(shape), (a,), lambda g: (reshape(g, src),), "reshape", check=False)


def take_cols(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    width = a.shape[1]
    return _make(
        a.value[:, start:stop].copy(),
        (a,),
        lambda g: (pad_cols(g, start, width),),
        "take_cols",
    )


def pad_cols(a, start: int, width: int) -> Tensor:
    a = as_tensor(a)
    stop = start + a.shape[1]
    value = np.zeros((a.shape[0], width))
    value[:, start:stop] = a.value
    return _make(value, (a,), lambda g: (take_cols(g, start, stop),), "pad_cols")


def concat_cols(parts: Iterable) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def vjp(g):
        return tuple(
            take_cols(g, int(bounds[i]), int(bounds[i + 1])) if p.requires_grad else None
            for i, p in enumerate(parts)
        )

    return _make(np.concatenate([p.value for p in parts], axis=1), parts, vjp, "concat_cols")


def take_rows(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    n = a.shape[0]
    return _make(
        a.value[start:stop].copy(),
        (a,),
        lambda g: (pad_rows(g, start, n),),
        "take_rows",
    )


def pad_rows(a, start: int, n: int) -> Tensor:
    a = as_tensor(a)
    stop = start + a.shape[0]
    value = np.zeros((n,) + a.shape[1:])
    value[start:stop] = a.value
    return _make(value, (a,), lambda g: (take_rows(g, start, stop),), "pad_rows")

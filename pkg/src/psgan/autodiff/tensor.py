"""Dense tensor with tape-based reverse-mode differentiation.

Operations record themselves onto the innermost active :class:`Tape`. Outside
of a tape nothing is recorded, which doubles as an inference (no-grad) mode::

    with Tape() as tape:
        y = x * x
    backward(y, tape)
"""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from psgan.errors import NonFiniteError, ShapeError

DEFAULT_DTYPE = np.float32

_TAPE_STACK: List["Tape"] = []


class Tensor:
    """N-dimensional float array that can take part in a tape.

    ``data`` is float32 unless a different float dtype is requested
    explicitly (float64 is used for finite-difference shadow evaluation).
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_from_op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = DEFAULT_DTYPE
        self.data = np.array(data, dtype=dtype, copy=None)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._from_op = False

    @classmethod
    def _wrap(cls, data):
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = False
        out.grad = None
        out.name = None
        out._from_op = True
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._from_op

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"expected a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)


class _Node:
    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op, inputs, output, backward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended in execution order, so inputs always precede the
    operations that consume them; :func:`backward` walks the list in reverse.
    """

    def __init__(self):
        self.nodes: List[_Node] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self.nodes)

    @property
    def ops(self) -> List[str]:
        return [n.op for n in self.nodes]


def is_recording() -> bool:
    return bool(_TAPE_STACK)


def as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def check_finite(arr: np.ndarray, op: str):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced non-finite values")


def record(op: str, out_data: np.ndarray, inputs: Sequence[Tensor],
           backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    """Wrap an op result and, if needed, put it on the active tape.

    ``backward_fn`` maps the output gradient to one gradient (or None) per
    entry of ``inputs``.
    """
    check_finite(out_data, op)
    out = Tensor._wrap(out_data)
    if _TAPE_STACK and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPE_STACK[-1].nodes.append(_Node(op, tuple(inputs), out, backward_fn))
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``.grad`` on every leaf ancestor of ``loss`` that requires it.

    Leaf gradients accumulate across calls until zeroed.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = pending.pop(id(node.output), None)
        if g is None:
            continue
        grads = node.backward_fn(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            if gi.shape != inp.shape:
                raise ShapeError(f"{node.op}: gradient shape {gi.shape} != input shape {inp.shape}")
            if inp._from_op:
                key = id(inp)
                prev = pending.get(key)
                pending[key] = gi if prev is None else prev + gi
            else:
                gi = gi.astype(inp.dtype, copy=False)
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
    if loss.is_leaf and loss.requires_grad:
        seed = np.ones_like(loss.data)
        loss.grad = seed if loss.grad is None else loss.grad + seed


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _binary_inputs(a, b):
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b)
    if not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    return a, b


def add(a, b) -> Tensor:
    a, b = _binary_inputs(a, b)
    sa, sb = a.shape, b.shape
    return record("add", a.data + b.data, (a, b),
                  lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _binary_inputs(a, b)
    sa, sb = a.shape, b.shape
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _binary_inputs(a, b)
    ad, bd = a.data, b.data
    ra, rb = a.requires_grad, b.requires_grad

    def grad_fn(g):
        return (unbroadcast(g * bd, ad.shape) if ra else None,
                unbroadcast(g * ad, bd.shape) if rb else None)

    return record("mul", ad * bd, (a, b), grad_fn)


def div(a, b) -> Tensor:
    a, b = _binary_inputs(a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    ra, rb = a.requires_grad, b.requires_grad

    def grad_fn(g):
        ga = g / bd
        return (unbroadcast(ga, ad.shape) if ra else None,
                unbroadcast(-ga * out, bd.shape) if rb else None)

    return record("div", out, (a, b), grad_fn)


def square(x: Tensor) -> Tensor:
    xd = x.data
    return record("square", xd * xd, (x,), lambda g: (2.0 * g * xd,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return record("sqrt", out, (x,), lambda g: (g * 0.5 / out,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return record("exp", out, (x,), lambda g: (g * out,))


def abs_(x: Tensor) -> Tensor:
    xd = x.data
    return record("abs", np.abs(xd), (x,), lambda g: (g * np.sign(xd),))


def _norm_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    return tuple(sorted(a % ndim for a in axes))


def sum_(x: Tensor, axes=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axes, x.ndim)
    shape = x.shape
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return record("sum", np.asarray(out), (x,), grad_fn)


def mean(x: Tensor, axes=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axes, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    if count == 0:
        raise ShapeError(f"mean over zero elements (shape {x.shape}, axes {axes})")
    return mul(sum_(x, axes, keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(tensors: Sequence[Tensor], axis=1) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return record("concat", out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))

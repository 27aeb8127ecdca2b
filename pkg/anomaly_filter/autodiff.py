"""Reverse-mode automatic differentiation over float64 numpy arrays.

A `Tensor` is a node of the computation graph: it holds an immutable value, an
optional accumulated gradient and, for non-leaf nodes, its parents together with
the closures that map the output gradient onto each parent.
"""
from __future__ import annotations

from collections.abc import Callable, Iterator, Mapping, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
import logging
from typing import Any, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import ShapeError

_LOGGER = logging.getLogger(__name__)

NdArray = NDArray[np.float64]
GradFn = Callable[[NdArray], NdArray]
Operand = Union["Tensor", float, int]

_grad_enabled: ContextVar[bool] = ContextVar("anomaly_filter_grad_enabled", default=True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Suppress graph recording inside the block (per thread / task)."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    """Return whether new operations are being recorded."""
    return _grad_enabled.get()


def _freeze(array: NdArray) -> NdArray:
    array.setflags(write=False)
    return array


class Tensor:
    """Differentiable multi-dimensional array."""

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_op")

    def __init__(
        self,
        value: ArrayLike,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        """Initialize a leaf tensor from a copy of `value`."""
        self.value: NdArray = _freeze(np.array(value, dtype=np.float64))
        self.grad: NdArray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[tuple[Tensor, GradFn], ...] = ()
        self._op = "leaf"

    @classmethod
    def _from_op(
        cls,
        value: NdArray,
        parents: Sequence[tuple[Tensor, GradFn]],
        op: str,
    ) -> Tensor:
        out = cls.__new__(cls)
        out.value = _freeze(np.asarray(value, dtype=np.float64))
        out.grad = None
        out.name = None
        out._op = op
        tracked = tuple((p, fn) for p, fn in parents if p.requires_grad)
        if tracked and _grad_enabled.get():
            out.requires_grad = True
            out._parents = tracked
        else:
            out.requires_grad = False
            out._parents = ()
        return out

    # Introspection

    @property
    def shape(self) -> tuple[int, ...]:
        """Return the extents."""
        return tuple(self.value.shape)

    @property
    def ndim(self) -> int:
        """Return the rank."""
        return int(self.value.ndim)

    @property
    def size(self) -> int:
        """Return the element count."""
        return int(self.value.size)

    @property
    def op(self) -> str:
        """Return the name of the op that produced this node."""
        return self._op

    @property
    def is_leaf(self) -> bool:
        """Return True when the node has no recorded parents."""
        return not self._parents

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{label}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        """Return the value of a single-element tensor."""
        if self.value.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not single-element")
        return float(self.value.reshape(-1)[0])

    def numpy(self) -> NdArray:
        """Return the (read-only) value array."""
        return self.value

    def detach(self) -> Tensor:
        """Return a leaf sharing this value but outside the graph."""
        return Tensor(self.value)

    def zero_grad(self) -> None:
        """Drop any accumulated gradient."""
        self.grad = None

    def assign(self, value: ArrayLike) -> None:
        """Replace the value of a leaf (used by optimizers)."""
        if self._parents:
            raise ShapeError(f"assign: cannot overwrite non-leaf tensor produced by {self._op}")
        new = np.array(value, dtype=np.float64)
        if new.shape != self.value.shape:
            raise ShapeError(f"assign: shape {new.shape} does not match {self.value.shape}")
        self.value = _freeze(new)

    # Operators

    def __add__(self, other: Operand) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Operand) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Operand) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Operand) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Operand) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Operand) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Operand) -> Tensor:
        return div(self, other)

    def __neg__(self) -> Tensor:
        return mul(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        return take(self, index)

    # Method forms

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        """Sum over `axis`."""
        return sum_(self, axis, keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        """Mean over `axis`."""
        return mean(self, axis, keepdims)

    def reshape(self, *shape: int) -> Tensor:
        """Reshape to `shape`."""
        return reshape(self, shape)

    def permute(self, *axes: int) -> Tensor:
        """Permute axes."""
        return permute(self, axes)


def as_tensor(value: Operand | ArrayLike) -> Tensor:
    """Wrap constants as leaf tensors."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _broadcast(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError as err:
        raise ShapeError(f"{op}: shapes {a} and {b} do not broadcast (only size-1 axes may expand)") from err


def _unbroadcast(grad: NdArray, shape: tuple[int, ...]) -> NdArray:
    """Sum `grad` back down to `shape` after broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# Elementwise arithmetic


def add(a: Operand, b: Operand) -> Tensor:
    """Elementwise sum with size-1 broadcasting."""
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast("add", ta.shape, tb.shape)
    return Tensor._from_op(
        ta.value + tb.value,
        (
            (ta, lambda g: _unbroadcast(g, ta.shape)),
            (tb, lambda g: _unbroadcast(g, tb.shape)),
        ),
        "add",
    )


def sub(a: Operand, b: Operand) -> Tensor:
    """Elementwise difference with size-1 broadcasting."""
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast("sub", ta.shape, tb.shape)
    return Tensor._from_op(
        ta.value - tb.value,
        (
            (ta, lambda g: _unbroadcast(g, ta.shape)),
            (tb, lambda g: _unbroadcast(-g, tb.shape)),
        ),
        "sub",
    )


def mul(a: Operand, b: Operand) -> Tensor:
    """Elementwise product with size-1 broadcasting."""
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast("mul", ta.shape, tb.shape)
    return Tensor._from_op(
        ta.value * tb.value,
        (
            (ta, lambda g: _unbroadcast(g * tb.value, ta.shape)),
            (tb, lambda g: _unbroadcast(g * ta.value, tb.shape)),
        ),
        "mul",
    )


def div(a: Operand, b: Operand) -> Tensor:
    """Elementwise quotient with size-1 broadcasting."""
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast("div", ta.shape, tb.shape)
    return Tensor._from_op(
        ta.value / tb.value,
        (
            (ta, lambda g: _unbroadcast(g / tb.value, ta.shape)),
            (tb, lambda g: _unbroadcast(-g * ta.value / (tb.value * tb.value), tb.shape)),
        ),
        "div",
    )


def square(x: Tensor) -> Tensor:
    """Elementwise square."""
    return Tensor._from_op(x.value * x.value, ((x, lambda g: 2.0 * g * x.value),), "square")


# Activations


def sigmoid(x: Tensor) -> Tensor:
    """Logistic sigmoid."""
    s = 0.5 * (np.tanh(0.5 * x.value) + 1.0)
    return Tensor._from_op(s, ((x, lambda g: g * s * (1.0 - s)),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    """Hyperbolic tangent."""
    t = np.tanh(x.value)
    return Tensor._from_op(t, ((x, lambda g: g * (1.0 - t * t)),), "tanh")


def silu(x: Tensor) -> Tensor:
    """SiLU (x * sigmoid(x))."""
    s = 0.5 * (np.tanh(0.5 * x.value) + 1.0)
    return Tensor._from_op(
        x.value * s,
        ((x, lambda g: g * (s + x.value * s * (1.0 - s))),),
        "silu",
    )


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def _grad(g: NdArray) -> NdArray:
        return s * (g - (g * s).sum(axis=-1, keepdims=True))

    return Tensor._from_op(s, ((x, _grad),), "softmax")


def layer_norm(
    x: Tensor,
    gamma: Tensor | None = None,
    beta: Tensor | None = None,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then scale and shift."""
    width = x.shape[-1]
    for label, param in (("gamma", gamma), ("beta", beta)):
        if param is not None and param.shape != (width,):
            raise ShapeError(f"layer_norm: {label} shape {param.shape} does not match last axis of {x.shape}")
    mu = x.value.mean(axis=-1, keepdims=True)
    centered = x.value - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    x_hat = centered * inv_std
    scale = gamma.value if gamma is not None else 1.0
    out = x_hat * scale
    if beta is not None:
        out = out + beta.value
    lead = tuple(range(x.ndim - 1))

    def _grad_x(g: NdArray) -> NdArray:
        gs = g * scale
        return inv_std * (
            gs - gs.mean(axis=-1, keepdims=True) - x_hat * (gs * x_hat).mean(axis=-1, keepdims=True)
        )

    parents: list[tuple[Tensor, GradFn]] = [(x, _grad_x)]
    if gamma is not None:
        parents.append((gamma, lambda g: (g * x_hat).sum(axis=lead)))
    if beta is not None:
        parents.append((beta, lambda g: g.sum(axis=lead)))
    return Tensor._from_op(out, parents, "layer_norm")


# Linear algebra and shape manipulation


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} and {b.shape}")
    _broadcast("matmul", a.shape[:-2], b.shape[:-2])
    return Tensor._from_op(
        np.matmul(a.value, b.value),
        (
            (a, lambda g: _unbroadcast(np.matmul(g, np.swapaxes(b.value, -1, -2)), a.shape)),
            (b, lambda g: _unbroadcast(np.matmul(np.swapaxes(a.value, -1, -2), g), b.shape)),
        ),
        "matmul",
    )


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    """Reorder axes."""
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute: axes {axes} are not a permutation for shape {x.shape}")
    inverse = tuple(int(i) for i in np.argsort(axes))
    return Tensor._from_op(
        np.transpose(x.value, axes),
        ((x, lambda g: np.transpose(g, inverse)),),
        "permute",
    )


def transpose(x: Tensor, axis1: int = -2, axis2: int = -1) -> Tensor:
    """Swap two axes."""
    axes = list(range(x.ndim))
    axes[axis1], axes[axis2] = axes[axis2], axes[axis1]
    return permute(x, axes)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Reshape without changing element order."""
    shape = tuple(shape)
    try:
        out = x.value.reshape(shape)
    except ValueError as err:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {shape}") from err
    original = x.shape
    return Tensor._from_op(out, ((x, lambda g: g.reshape(original)),), "reshape")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along `axis`."""
    if not tensors:
        raise ShapeError("concat: no operands")
    try:
        out = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as err:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"concat: shapes {shapes} do not agree off axis {axis}") from err
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])
    parents: list[tuple[Tensor, GradFn]] = []
    for i, t in enumerate(tensors):
        lo, hi = int(bounds[i]), int(bounds[i + 1])

        def _grad(g: NdArray, lo: int = lo, hi: int = hi) -> NdArray:
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return g[tuple(index)]

        parents.append((t, _grad))
    return Tensor._from_op(out, parents, "concat")


def take(x: Tensor, index: Any) -> Tensor:
    """Basic slicing (`x[index]`)."""
    try:
        out = x.value[index]
    except IndexError as err:
        raise ShapeError(f"slice: index {index!r} invalid for shape {x.shape}") from err

    def _grad(g: NdArray) -> NdArray:
        full = np.zeros(x.shape)
        full[index] = g
        return full

    return Tensor._from_op(np.array(out, dtype=np.float64), ((x, _grad),), "slice")


# Reductions


def _expand_reduced(g: NdArray, shape: tuple[int, ...], axis: int | tuple[int, ...] | None, keepdims: bool) -> NdArray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum_(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    """Sum over `axis` (all axes when None)."""
    shape = x.shape
    return Tensor._from_op(
        np.asarray(x.value.sum(axis=axis, keepdims=keepdims)),
        ((x, lambda g: np.array(_expand_reduced(g, shape, axis, keepdims))),),
        "sum",
    )


def mean(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    """Mean over `axis` (all axes when None)."""
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    shape = x.shape
    return Tensor._from_op(
        np.asarray(x.value.mean(axis=axis, keepdims=keepdims)),
        ((x, lambda g: np.array(_expand_reduced(g, shape, axis, keepdims)) / count),),
        "mean",
    )


def squared_error(prediction: Tensor, target: Operand | ArrayLike, weight: ArrayLike | None = None) -> Tensor:
    """Return sum(weight * (prediction - target)**2) as a scalar."""
    t = as_tensor(target)
    if prediction.shape != t.shape:
        raise ShapeError(f"squared_error: shapes {prediction.shape} and {t.shape} differ")
    diff = prediction.value - t.value
    w = np.ones_like(diff) if weight is None else np.asarray(weight, dtype=np.float64)
    if w.shape != diff.shape:
        raise ShapeError(f"squared_error: weight shape {w.shape} does not match {diff.shape}")
    return Tensor._from_op(
        np.asarray((w * diff * diff).sum()),
        (
            (prediction, lambda g: 2.0 * g * w * diff),
            (t, lambda g: -2.0 * g * w * diff),
        ),
        "squared_error",
    )


# Backward pass


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into `.grad` of every reachable leaf."""
    if loss.shape != ():
        raise ShapeError(f"backward: loss must be scalar-shaped, got {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, NdArray] = {id(loss): np.ones(())}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = np.array(g) if node.grad is None else node.grad + g
            continue
        for parent, fn in node._parents:
            contribution = fn(g)
            if contribution.shape != parent.shape:
                raise ShapeError(
                    f"backward: {node.op} produced gradient {contribution.shape} for operand {parent.shape}"
                )
            previous = grads.get(id(parent))
            grads[id(parent)] = contribution if previous is None else previous + contribution


def grad_map(loss: Tensor, leaves: Mapping[str, Tensor]) -> dict[str, NdArray]:
    """Run backward from `loss`; unreachable leaves get zero gradients."""
    for leaf in leaves.values():
        leaf.zero_grad()
    backward(loss)
    return {
        name: (np.array(leaf.grad) if leaf.grad is not None else np.zeros(leaf.shape))
        for name, leaf in leaves.items()
    }

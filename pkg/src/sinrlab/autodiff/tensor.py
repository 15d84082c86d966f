"""Tensors that remember how they were computed, and reverse-mode sweep."""

from __future__ import annotations

import warnings
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import DisconnectedGraph, ShapeMismatch


class Tensor:
    """A float64 array plus the bookkeeping needed for backpropagation.

    ``_backward`` maps the gradient of this tensor to a tuple with one entry
    per parent (``None`` where a parent needs no gradient).
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar, resolved lazily to avoid the import cycle with ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Create the output of an op, wiring it into the graph when needed."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Topologically ordered record of the ops leading to an output."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, t: Tensor):
        return any(n is t for n in self.nodes)


def backward(loss: Tensor, watch: Iterable[Tensor] = ()) -> Tape:
    """Populate ``.grad`` of every leaf that requires a gradient.

    Gradients overwrite whatever was stored before.  Tensors in ``watch``
    that the loss does not depend on get a zero gradient and trigger a
    :class:`DisconnectedGraph` warning.
    """
    if loss.data.size != 1:
        raise ShapeMismatch(f"loss must be scalar, got shape {loss.shape}")
    tape = Tape.from_output(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ShapeMismatch(f"gradient {pg.shape} for tensor {parent.shape}")
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    reached = {id(n) for n in tape.nodes}
    for t in watch:
        if id(t) not in reached:
            warnings.warn(f"{t!r} does not influence the loss", DisconnectedGraph, stacklevel=2)
            t.grad = np.zeros_like(t.data)
    return tape

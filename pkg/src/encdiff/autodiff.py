"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

A Tensor wraps an ndarray and records the op that produced it; backward() walks
the recorded graph in reverse topological order.  Supported ops cover what the
training losses need: elementwise arithmetic with numpy-style broadcasting,
matmul, tanh, sum/mean reductions and concatenation.

Every op checks its result for NaN/Inf and raises NumericsError naming the op,
so a numerical blow-up is caught at the first offending node rather than after
it has propagated through the whole loss.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import NumericsError, UnusedParameterError

_node_counter = 0


def _next_node_id() -> int:
    global _node_counter
    _node_counter += 1
    return _node_counter


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes that numpy broadcasting expanded."""
    if grad.shape == shape:
        return grad
    # leading axes added by broadcasting
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    # axes of size 1 that were stretched
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Shaped float64 array with an optional place in the computation record."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "name", "_parents", "_backward", "_op")

    # defer mixed ndarray/Tensor arithmetic to the Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(self.data)):
            raise NumericsError(f"non-finite values produced by op '{_op}'"
                                + (f" (tensor '{name}')" if name else ""))
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id = _next_node_id()
        self.name = name
        self._parents = _parents
        self._backward = None
        self._op = _op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self):
        tag = f" '{self.name}'" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, op={self._op})"

    # --- graph construction helpers ------------------------------------

    @staticmethod
    def as_tensor(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def _make(self, data, parents, op, backward) -> "Tensor":
        out = Tensor(data, _parents=parents, _op=op)
        out._backward = backward
        return out

    # --- arithmetic -----------------------------------------------------

    def __add__(self, other):
        other = Tensor.as_tensor(other)
        out_data = self.data + other.data

        def backward(g, a=self, b=other):
            return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

        return self._make(out_data, (self, other), "add", backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g, a=self):
            return (-g,)

        return self._make(-self.data, (self,), "neg", backward)

    def __sub__(self, other):
        other = Tensor.as_tensor(other)
        out_data = self.data - other.data

        def backward(g, a=self, b=other):
            return (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))

        return self._make(out_data, (self, other), "sub", backward)

    def __rsub__(self, other):
        return Tensor.as_tensor(other) - self

    def __mul__(self, other):
        other = Tensor.as_tensor(other)
        out_data = self.data * other.data

        def backward(g, a=self, b=other):
            return (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))

        return self._make(out_data, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor.as_tensor(other)
        with np.errstate(divide="ignore", invalid="ignore"):
            out_data = self.data / other.data

        def backward(g, a=self, b=other):
            return (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            )

        return self._make(out_data, (self, other), "div", backward)

    def __rtruediv__(self, other):
        return Tensor.as_tensor(other) / self

    def __matmul__(self, other):
        other = Tensor.as_tensor(other)
        out_data = self.data @ other.data

        def backward(g, a=self, b=other):
            return (g @ b.data.T, a.data.T @ g)

        return self._make(out_data, (self, other), "matmul", backward)

    # --- nonlinearities and reductions -----------------------------------

    def tanh(self):
        y = np.tanh(self.data)

        def backward(g, y=y):
            return (g * (1.0 - y * y),)

        return self._make(y, (self,), "tanh", backward)

    def square(self):
        def backward(g, a=self):
            return (2.0 * g * a.data,)

        return self._make(self.data * self.data, (self,), "square", backward)

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g, a=self, axis=axis, keepdims=keepdims):
            if axis is None:
                return (np.broadcast_to(g, a.shape).copy(),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, a.shape).copy(),)

        return self._make(out_data, (self,), "sum", backward)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    @staticmethod
    def concat(parts: Sequence["Tensor | np.ndarray"], axis: int = -1) -> "Tensor":
        parts = [Tensor.as_tensor(p) for p in parts]
        out_data = np.concatenate([p.data for p in parts], axis=axis)
        sizes = [p.data.shape[axis] for p in parts]
        splits = np.cumsum(sizes)[:-1]

        def backward(g, splits=splits, axis=axis):
            return tuple(np.split(g, splits, axis=axis))

        out = Tensor(out_data, _parents=tuple(parts), _op="concat")
        out._backward = backward
        return out

    # --- backward pass ----------------------------------------------------

    def _toposort(self) -> list["Tensor"]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if node.node_id in seen:
                continue
            seen.add(node.node_id)
            stack.append((node, True))
            for p in node._parents:
                if p.node_id not in seen:
                    stack.append((p, False))
        return order

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable node."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.shape}")
        order = self._toposort()
        grads: dict[int, np.ndarray] = {self.node_id: np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(node.node_id, None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None:
                    continue
                if parent.node_id in grads:
                    grads[parent.node_id] = grads[parent.node_id] + pg
                else:
                    grads[parent.node_id] = pg

    def reachable_ids(self) -> set[int]:
        return {node.node_id for node in self._toposort()}


def grad(loss: Tensor, params: Iterable[Tensor], allow_unused: bool = False) -> list[np.ndarray]:
    """Reverse-mode gradients of a scalar loss for each parameter tensor.

    Parameters that never entered the recorded computation are reported
    explicitly rather than silently given zero gradients; parameters that are
    on the record but do not influence the loss get exact zeros.
    """
    params = list(params)
    on_record = loss.reachable_ids()
    missing = [p.name or f"<node {p.node_id}>" for p in params if p.node_id not in on_record]
    if missing and not allow_unused:
        raise UnusedParameterError(
            "parameters not on the computation record: " + ", ".join(missing)
        )
    for p in params:
        p.grad = None
    loss.backward()
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]

"""Dense tensor node with reverse-mode automatic differentiation.

A Tensor wraps a numpy array. Ops in ``autograd.ops`` build new tensors and
record their parents plus a closure that maps the output gradient to one
gradient per parent. ``Tensor.backward`` walks that record in a fixed
topological order, so accumulation is reproducible run to run.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from errors import BackwardError, ShapeError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block (per thread)."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def record_branch(mask: np.ndarray) -> None:
    """Called by piecewise ops (relu, clip, l1) with the branch each element took."""
    branches = getattr(_grad_state, "branches", None)
    if branches is not None:
        branches.append(np.packbits(np.asarray(mask, dtype=bool).reshape(-1)).tobytes())


@contextmanager
def record_branches() -> Iterator[list]:
    """Collect the branch pattern of every piecewise op run inside the block."""
    previous = getattr(_grad_state, "branches", None)
    _grad_state.branches = []
    try:
        yield _grad_state.branches
    finally:
        _grad_state.branches = previous


class Tensor:
    """One node of the autodiff graph."""

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        dtype=None,
        name: Optional[str] = None,
    ):
        array = np.asarray(data, dtype=dtype)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.op: Optional[str] = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._consumed = False

    @classmethod
    def _from_op(
        cls,
        op: str,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
    ) -> "Tensor":
        out = cls(data)
        out.op = op
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # ─── Properties ──────────────────────────────────────────────────

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape, detail="needs a single element")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        op = f" op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{op}{label}, requires_grad={self.requires_grad})"

    # ─── Backward ────────────────────────────────────────────────────

    def _topological_order(self) -> list["Tensor"]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            if node._consumed:
                raise BackwardError(
                    f"graph through op '{node.op}' was already consumed by a previous backward; "
                    "run the forward pass again"
                )
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Accumulate dSelf/dLeaf into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise BackwardError(f"backward needs a scalar loss, got shape {self.shape}")
        if self._consumed:
            raise BackwardError("backward was already called on this graph; run the forward pass again")
        if not self.requires_grad:
            return

        order = self._topological_order()
        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            parent_grads = node._backward(grad)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad

        for node in order:
            if not node.is_leaf:
                node._parents = ()
                node._backward = None
                node._consumed = True

    # ─── Operators ───────────────────────────────────────────────────

    def __add__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other) -> "Tensor":
        from . import ops
        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    def __rmul__(self, other) -> "Tensor":
        from . import ops
        return ops.scale(self, float(other))

    def __truediv__(self, other) -> "Tensor":
        from . import ops
        return ops.scale(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.matmul(self, other)


def constant(data, dtype=None) -> Tensor:
    """Wrap an array as a graph input that never receives a gradient."""
    return Tensor(data, requires_grad=False, dtype=dtype)


def backward(loss: Tensor, params: Sequence[Tensor] = ()) -> list[np.ndarray]:
    """Run ``loss.backward()`` and return one gradient per parameter.

    Parameters the loss does not reach end up holding zeros.
    """
    loss.backward()
    grads = []
    for param in params:
        if param.grad is None:
            param.grad = np.zeros_like(param.data)
        grads.append(param.grad)
    return grads

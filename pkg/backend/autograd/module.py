"""Parameter containers with stable dotted names."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from errors import CheckpointError

from .tensor import Tensor


class Parameter(Tensor):
    """A trainable leaf tensor."""

    def __init__(self, data, dtype=None, name=None):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)


class Module:
    """Base class for layers.

    Parameters and sub-modules are discovered from instance attributes in
    assignment order, so ``named_parameters`` is stable for a given
    constructor. Lists of modules are walked by index.
    """

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[tuple[str, object]]:
        for key, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield key, value
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{key}.{index}", item

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        seen: set[int] = set()
        out: list[tuple[str, Parameter]] = []
        self._collect(prefix, seen, out)
        return out

    def _collect(self, prefix: str, seen: set[int], out: list) -> None:
        for key, value in self._children():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                if id(value) not in seen:
                    seen.add(id(value))
                    out.append((name, value))
            else:
                value._collect(f"{name}.", seen, out)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.grad = None

    def astype(self, dtype) -> "Module":
        """Cast every parameter in place (float64 for checks, float32 for training)."""
        for param in self.parameters():
            param.data = param.data.astype(dtype)
            param.grad = None
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise CheckpointError(
                    f"parameter names differ: missing={missing[:5]} unexpected={unexpected[:5]}"
                )
        for name, array in state.items():
            if name not in own:
                continue
            param = own[name]
            if tuple(array.shape) != param.shape:
                raise CheckpointError(
                    f"parameter '{name}' has shape {tuple(array.shape)} in the checkpoint, "
                    f"model expects {param.shape}"
                )
            param.data = np.array(array, dtype=array.dtype, copy=True)
            param.grad = None

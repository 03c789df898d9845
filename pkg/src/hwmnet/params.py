"""Named, ordered parameter storage with seeded initialization."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from .autograd import SINGLE, Tensor
from .errors import InvalidArgument


class ParamStore:
    """Ordered mapping of hierarchical names to learnable tensors.

    Initialization draws from one seeded generator in registration order, so a
    given (architecture, seed) always yields bitwise-identical parameters.
    Weights use a fan-in scaled uniform draw with bound sqrt(6 / fan_in);
    biases start at zero and PReLU slopes at 0.25.
    """

    def __init__(self, seed: int = 0, dtype=SINGLE):
        self.dtype = np.dtype(dtype)
        self._rng = np.random.default_rng(seed)
        self._params: OrderedDict[str, Tensor] = OrderedDict()

    def _register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise InvalidArgument(f"duplicate parameter name {name!r}")
        t = Tensor(data.astype(self.dtype), requires_grad=True)
        self._params[name] = t
        return t

    def weight(self, name: str, shape: tuple[int, ...]) -> Tensor:
        fan_in = int(np.prod(shape[1:]))
        bound = np.sqrt(6.0 / fan_in)
        return self._register(name, self._rng.uniform(-bound, bound, size=shape))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self._register(name, np.zeros(shape))

    def constant(self, name: str, shape: tuple[int, ...], value: float) -> Tensor:
        return self._register(name, np.full(shape, value))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def count(self) -> int:
        """Total number of scalar parameters."""
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state(self) -> OrderedDict[str, np.ndarray]:
        return OrderedDict((k, t.data.copy()) for k, t in self._params.items())

    def load_state(self, state) -> None:
        """Copy arrays into the existing tensors in place (keeps block references valid)."""
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise InvalidArgument(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, t in self._params.items():
            arr = np.asarray(state[k])
            if arr.shape != t.shape:
                raise InvalidArgument(f"{k}: shape {arr.shape} != {t.shape}")
            t.data[...] = arr

    def fill(self, value: float) -> None:
        for t in self._params.values():
            t.data[...] = value

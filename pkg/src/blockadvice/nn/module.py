"""Parameter containers and weight initialization."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .rng import Rng
from .tensor import DEFAULT_DTYPE, NNError, Parameter


class Module:
    """Holds named parameters; subclasses register them in __init__."""

    def __init__(self) -> None:
        self._params: dict[str, Parameter] = {}

    def register(self, param: Parameter) -> Parameter:
        if param.name in self._params:
            raise NNError(f"duplicate parameter name {param.name!r}")
        self._params[param.name] = param
        return param

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self._params.values() if p.requires_grad]

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        yield from self._params.items()

    def get_parameter(self, name: str) -> Parameter:
        try:
            return self._params[name]
        except KeyError:
            raise NNError(f"no parameter named {name!r}") from None

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self._params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Copy values into existing parameters; names and shapes must match."""
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise NNError(
                f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        for name, arr in arrays.items():
            p = self._params[name]
            if arr.shape != p.data.shape:
                raise NNError(
                    f"shape mismatch for {name!r}: stored {arr.shape}, model {p.data.shape}"
                )
            p.data = np.ascontiguousarray(arr, dtype=p.data.dtype)


def uniform_fan_in(rng: Rng, name: str, shape: tuple[int, ...], fan_in: int) -> Parameter:
    """W ~ U(−1/√fan_in, 1/√fan_in), the usual dense/recurrent init."""
    bound = 1.0 / np.sqrt(fan_in)
    data = rng.generator.uniform(-bound, bound, size=shape).astype(DEFAULT_DTYPE)
    return Parameter(name, data)


def normal_embedding(rng: Rng, name: str, vocab: int, dim: int, std: float = 0.1) -> Parameter:
    data = (rng.generator.standard_normal((vocab, dim)) * std).astype(DEFAULT_DTYPE)
    return Parameter(name, data)


def zeros_param(name: str, shape: tuple[int, ...]) -> Parameter:
    return Parameter(name, np.zeros(shape, dtype=DEFAULT_DTYPE))


def lstm_params(
    rng: Rng, prefix: str, input_dim: int, hidden: int
) -> tuple[Parameter, Parameter, Parameter]:
    """wx [4H, d], wh [4H, H], b [4H] with forget-gate bias 1."""
    wx = uniform_fan_in(rng.child(f"{prefix}.wx"), f"{prefix}.wx", (4 * hidden, input_dim), input_dim)
    wh = uniform_fan_in(rng.child(f"{prefix}.wh"), f"{prefix}.wh", (4 * hidden, hidden), hidden)
    b = zeros_param(f"{prefix}.b", (4 * hidden,))
    b.data[hidden : 2 * hidden] = 1.0
    return wx, wh, b


def fc_params(
    rng: Rng, prefix: str, in_dim: int, out_dim: int
) -> tuple[Parameter, Parameter]:
    w = uniform_fan_in(rng.child(f"{prefix}.w"), f"{prefix}.w", (out_dim, in_dim), in_dim)
    b = zeros_param(f"{prefix}.b", (out_dim,))
    return w, b

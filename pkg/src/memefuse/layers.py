"""Parameter containers, the dense layer and inverted dropout.

Each layer writes its own backward pass. ``forward`` stores what ``backward``
needs on the instance, so a layer object serves one forward/backward pair at a
time. Gradients accumulate into ``grads`` until ``zero_grad`` is called.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .errors import ShapeError, UsageError
from .tensor import Rng, init_uniform, relu


class Module:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.children: dict[str, Module] = {}

    def add_param(self, name: str, value: np.ndarray) -> np.ndarray:
        value = np.ascontiguousarray(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def add_child(self, name: str, module: "Module") -> "Module":
        self.children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray, np.ndarray]]:
        for name, value in self.params.items():
            yield prefix + name, value, self.grads[name]
        for cname, child in self.children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: value for name, value, _ in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, value, _ in self.named_parameters():
            if name not in state:
                raise ShapeError(f"missing parameter {name!r}")
            if state[name].shape != value.shape:
                raise ShapeError(f"parameter {name!r}: expected {value.shape}, got {state[name].shape}")
            value[...] = state[name]

    def zero_grad(self) -> None:
        for _, _, grad in self.named_parameters():
            grad[...] = 0.0


def fan_in_scale(fan_in: int) -> float:
    return 1.0 / math.sqrt(max(fan_in, 1))


class Dense(Module):
    """``y = act(x @ W.T + b)`` with ``W`` of shape (d_out, d_in)."""

    def __init__(self, d_in: int, d_out: int, rng: Rng, activation: str | None = None):
        super().__init__()
        if activation not in (None, "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        self.d_in, self.d_out, self.activation = d_in, d_out, activation
        s = fan_in_scale(d_in)
        self.add_param("W", init_uniform(rng, (d_out, d_in), s))
        self.add_param("b", init_uniform(rng, (d_out,), s))
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"dense: expected input width {self.d_in}, got shape {x.shape}")
        pre = x @ self.params["W"].T + self.params["b"]
        self._cache = (x, pre)
        return relu(pre) if self.activation == "relu" else pre

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise UsageError("dense: backward called before forward")
        x, pre = self._cache
        if self.activation == "relu":
            dy = dy * (pre > 0)
        self.grads["W"] += dy.T @ x
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["W"]


class Dropout:
    """Inverted dropout; identity at inference time or when ``rate`` is 0."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def forward(self, x: np.ndarray, rng: Rng | None) -> np.ndarray:
        if rng is None or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = rng.bernoulli(keep, x.shape) / keep
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy if self._mask is None else dy * self._mask

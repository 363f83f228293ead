"""Parameter containers, layer initialisation and the plain SGD step."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .errors import CheckpointError
from .tensor import Tensor, conv2d, relu


class Network:
    """An ordered mapping of named parameter tensors.

    Subclasses add parameters with :meth:`_param` and implement ``forward``.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def _param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.params.items())

    def freeze(self) -> "Network":
        for p in self.params.values():
            p.requires_grad = False
        return self

    def unfreeze(self) -> "Network":
        for p in self.params.values():
            p.requires_grad = True
        return self

    @property
    def frozen(self) -> bool:
        return not any(p.requires_grad for p in self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise CheckpointError(f"checkpoint lacks tensors {sorted(missing)}")
        for name, p in self.params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise CheckpointError(f"tensor {name!r}: checkpoint shape {value.shape} != model shape {p.shape}")
            p.data = value.copy()

    def __call__(self, x):
        return self.forward(x)


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ConvStack(Network):
    """conv -> relu stages; ``final_linear`` drops the relu after the last conv."""

    def __init__(self, widths: list[int], kernel_size: int, rng: np.random.Generator,
                 prefix: str = "conv", init_bound: float | None = None, final_linear: bool = False):
        super().__init__()
        self.widths = list(widths)
        self.kernel_size = kernel_size
        self.final_linear = final_linear
        self.prefix = prefix
        k = kernel_size
        for i, (cin, cout) in enumerate(zip(widths[:-1], widths[1:])):
            shape = (cout, cin, k, k)
            if init_bound is None:
                w = he_uniform(rng, shape, cin * k * k)
                b = np.zeros(cout)
            else:
                w = rng.uniform(-init_bound, init_bound, size=shape)
                b = rng.uniform(-init_bound, init_bound, size=cout)
            self._param(f"{prefix}{i}.weight", w)
            self._param(f"{prefix}{i}.bias", b)

    @property
    def n_stages(self) -> int:
        return len(self.widths) - 1

    def stages(self, x) -> list[Tensor]:
        """Outputs of every stage, first to last."""
        outs = []
        h = x
        for i in range(self.n_stages):
            h = conv2d(h, self.params[f"{self.prefix}{i}.weight"], self.params[f"{self.prefix}{i}.bias"])
            if not (self.final_linear and i == self.n_stages - 1):
                h = relu(h)
            outs.append(h)
        return outs

    def forward(self, x) -> Tensor:
        return self.stages(x)[-1]


def sgd_step(params: list[Tensor], lr: float, max_grad_norm: float | None = None) -> float:
    """In-place SGD update; returns the pre-clipping global gradient norm."""
    grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    scale = 1.0
    if max_grad_norm is not None and norm > max_grad_norm:
        scale = max_grad_norm / norm
    for p, g in zip(params, grads):
        p.data = p.data - (lr * scale) * g
        p.grad = None
    return norm

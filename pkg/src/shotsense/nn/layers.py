"""Layer objects: parameter containers around the functional ops.

Weights are initialized uniform in +/- sqrt(1/fan_in) from a caller-supplied
numpy Generator; biases start at zero. ``named_parameters`` walks attributes
in insertion order, so parameter naming is deterministic for a given
architecture.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{key}.{i}."))
        return out

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Non-trainable state (batch-norm running statistics)."""
        out: dict[str, np.ndarray] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Module):
                out.update(value.named_buffers(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_buffers(f"{key}.{i}."))
            elif isinstance(value, np.ndarray) and name.startswith("running_"):
                out[key] = value
        return out

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.named_parameters().values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of all parameters and buffers."""
        out = {name: p.data for name, p in self.named_parameters().items()}
        out.update(self.named_buffers())
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        state = self.state_arrays()
        missing = set(state) ^ set(arrays)
        if missing:
            raise ValueError(f"state mismatch, offending keys: {sorted(missing)}")
        for name, current in state.items():
            new = np.asarray(arrays[name], dtype=current.dtype)
            if new.shape != current.shape:
                raise ValueError(f"shape mismatch for {name}: {new.shape} vs {current.shape}")
            current[...] = new


def _uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int,
                  dtype=np.float32) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 dilation: int = 1, rng: np.random.Generator = None, dtype=np.float32):
        if kernel % 2 != 1:
            raise ValueError(f"kernel size must be odd, got {kernel}")
        fan_in = in_channels * kernel
        self.weight = Tensor(_uniform_init(rng, (out_channels, in_channels, kernel), fan_in, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)
        self.dilation = dilation

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv1d(x, self.weight, self.bias, dilation=self.dilation)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator = None, dtype=np.float32):
        self.weight = Tensor(_uniform_init(rng, (out_features, in_features), in_features, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class BatchNorm1d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float32):
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor, training: bool, update_running: bool = True) -> Tensor:
        return T.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            training=training, momentum=self.momentum, eps=self.eps,
                            update_running=update_running)


class ConvBlock(Module):
    """Conv1d + batch norm + Mish, the backbone building block."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 rng: np.random.Generator = None, dtype=np.float32):
        self.conv = Conv1d(in_channels, out_channels, kernel, rng=rng, dtype=dtype)
        self.bn = BatchNorm1d(out_channels, dtype=dtype)

    def __call__(self, x: Tensor, training: bool, update_running: bool = True) -> Tensor:
        return T.mish(self.bn(self.conv(x), training, update_running))

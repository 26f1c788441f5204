"""Small module system over the autograd ops: parameter registration with
deterministic dotted names, train/eval mode, and the three building blocks
the network is assembled from (conv, batch norm, and their fused pairs).
"""

from __future__ import annotations

import numpy as np

from holoforge.autograd import ops
from holoforge.autograd.tensor import Parameter, Tensor


class Module:
    """Base class: children and parameters register themselves on assignment.

    Registration order is construction order, which makes every walk over
    `named_parameters` deterministic, which in turn is what makes
    checkpoints and optimizer state line up across runs.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        else:
            object.__setattr__(self, name, value)

    def __getattr__(self, name):
        for store in ("_params", "_buffers", "_modules"):
            d = object.__getattribute__(self, store)
            if name in d:
                return d[name]
        raise AttributeError(f"{type(self).__name__} has no attribute '{name}'")

    def register_buffer(self, name: str, array: np.ndarray):
        """Track a non-trainable array (running statistics) by name."""
        self._buffers[name] = array

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    # -- traversal ---------------------------------------------------------

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            path = f"{prefix}{name}"
            p.name = path
            yield path, p
        for name, child in self._modules.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield f"{prefix}{name}", b
        for name, child in self._modules.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state_arrays(self) -> dict:
        """All persistent arrays, parameters first, in traversal order."""
        state = {name: p.data for name, p in self.named_parameters()}
        for name, b in self.named_buffers():
            state[name] = b
        return state

    def load_state_arrays(self, state: dict, strict: bool = True):
        own = {name: p for name, p in self.named_parameters()}
        bufs = dict(self.named_buffers())
        for name, arr in state.items():
            if name in own:
                if own[name].data.shape != arr.shape:
                    raise ValueError(f"parameter '{name}': shape {arr.shape} does not match {own[name].data.shape}")
                own[name].data = arr.astype(own[name].data.dtype, copy=True)
            elif name in bufs:
                if bufs[name].shape != arr.shape:
                    raise ValueError(f"buffer '{name}': shape {arr.shape} does not match {bufs[name].shape}")
                bufs[name][...] = arr
            elif strict:
                raise KeyError(f"state entry '{name}' has no matching parameter or buffer")
        if strict:
            missing = (set(own) | set(bufs)) - set(state)
            if missing:
                raise KeyError(f"state is missing entries: {sorted(missing)}")

    # -- mode and dtype ----------------------------------------------------

    def train(self):
        object.__setattr__(self, "training", True)
        for child in self._modules.values():
            child.train()
        return self

    def eval(self):
        object.__setattr__(self, "training", False)
        for child in self._modules.values():
            child.eval()
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def to_dtype(self, dtype):
        """Convert all parameters and buffers (float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        self._retype_buffers(dtype)
        return self

    def _retype_buffers(self, dtype):
        for name in list(self._buffers):
            self._buffers[name] = self._buffers[name].astype(dtype)
        for child in self._modules.values():
            child._retype_buffers(dtype)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._list = []
        for m in modules:
            self.append(m)

    def append(self, module: Module):
        self._modules[str(len(self._list))] = module
        self._list.append(module)

    def __iter__(self):
        return iter(self._list)

    def __len__(self):
        return len(self._list)

    def __getitem__(self, i):
        return self._list[i]


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, pad: int | None = None, bias: bool = True):
        super().__init__()
        if pad is None:
            pad = kernel // 2
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.weight = Parameter(np.zeros((out_channels, in_channels, kernel, kernel), dtype=np.float32))
        if bias:
            self.bias = Parameter(np.zeros(out_channels, dtype=np.float32))
        else:
            object.__setattr__(self, "bias", None)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=np.float32))
        self.beta = Parameter(np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return ops.batchnorm2d(x, self.gamma, self.beta,
                               self.running_mean, self.running_var,
                               training=self.training,
                               momentum=self.momentum, eps=self.eps)


class ConvBNAct(Module):
    """conv -> batch norm -> LeakyReLU, the encoder/decoder workhorse."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3,
                 stride: int = 1, slope: float = 0.01):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, kernel, stride=stride)
        self.bn = BatchNorm2d(out_channels)
        self.slope = slope

    def forward(self, x: Tensor) -> Tensor:
        return ops.leaky_relu(self.bn(self.conv(x)), self.slope)


class ProjBN(Module):
    """1x1 convolution followed by batch norm: the fusion projection unit."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, 1, pad=0)
        self.bn = BatchNorm2d(out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return self.bn(self.conv(x))

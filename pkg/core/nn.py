"""
Layers and blocks built on the taped ops.

Every module can `trace` an input shape ([C, F, T], batch excluded) and
yields one `LayerInfo` per leaf layer; complexity accounting is built on it.
"""
from dataclasses import dataclass

import numpy as np

from core import functional as F
from core.exceptions import ShapeError
from core.tensor import Tensor, add


@dataclass(frozen=True)
class LayerInfo:
    name: str
    kind: str
    in_shape: tuple
    out_shape: tuple
    params: int
    macs: int


class Module:
    def __init__(self):
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._modules.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, child in self._modules.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state_dict(self):
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state):
        expected = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(expected) | set(buffers)) - set(state)
        unexpected = set(state) - set(expected) - set(buffers)
        if missing or unexpected:
            raise ShapeError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, p in expected.items():
            if p.shape != state[name].shape:
                raise ShapeError(f"{name}: checkpoint shape {state[name].shape}, model shape {p.shape}")
            p.data[...] = state[name]
        for name, b in buffers.items():
            b[...] = state[name]

    def train(self, mode=True):
        object.__setattr__(self, "training", mode)
        for child in self._modules.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, x):
        return self.forward(x)

    def trace(self, shape, prefix=""):
        for name, child in self._modules.items():
            for info in child.trace(shape, f"{prefix}{name}."):
                yield info
                shape = info.out_shape


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=None, groups=1,
                 bias=False, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.kernel_size = F.pair(kernel_size)
        self.stride = F.pair(stride)
        self.padding = F.pair(padding) if padding is not None else tuple(k // 2 for k in self.kernel_size)
        self.groups = groups
        self.in_channels = in_channels
        self.out_channels = out_channels
        if in_channels % groups or out_channels % groups:
            raise ShapeError(f"channels {in_channels}->{out_channels} not divisible by groups={groups}")
        kh, kw = self.kernel_size
        fan_out = out_channels * kh * kw // groups
        w = rng.normal(0.0, np.sqrt(2.0 / fan_out), size=(out_channels, in_channels // groups, kh, kw))
        self.weight = Tensor(w.astype(np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, np.float32), requires_grad=True) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ShapeError(f"conv expects {self.in_channels} channels, got {c}")
        oh = F.conv_output_size(h, self.kernel_size[0], self.stride[0], self.padding[0])
        ow = F.conv_output_size(w, self.kernel_size[1], self.stride[1], self.padding[1])
        if oh <= 0 or ow <= 0:
            raise ShapeError(f"conv maps {h}x{w} to an empty {oh}x{ow} feature map")
        return (self.out_channels, oh, ow)

    def trace(self, shape, prefix=""):
        out = self.output_shape(shape)
        kh, kw = self.kernel_size
        params = self.weight.data.size + (self.bias.data.size if self.bias is not None else 0)
        macs = out[1] * out[2] * out[0] * kh * kw * (self.in_channels // self.groups)
        kind = "dwconv" if self.groups > 1 and self.groups == self.in_channels else "conv"
        yield LayerInfo(prefix.rstrip("."), f"{kind}{kh}x{kw}", tuple(shape), out, params, macs)


class BatchNorm2d(Module):
    def __init__(self, channels):
        super().__init__()
        self.channels = channels
        self.gamma = Tensor(np.ones(channels, np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, np.float32), requires_grad=True)
        self.register_buffer("running_mean", np.zeros(channels, np.float32))
        self.register_buffer("running_var", np.ones(channels, np.float32))

    def forward(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, self.training)

    def trace(self, shape, prefix=""):
        if shape[0] != self.channels:
            raise ShapeError(f"batch norm expects {self.channels} channels, got {shape[0]}")
        yield LayerInfo(prefix.rstrip("."), "bn", tuple(shape), tuple(shape), 2 * self.channels, 0)


class ReLU(Module):
    def forward(self, x):
        return F.relu(x)

    def trace(self, shape, prefix=""):
        yield LayerInfo(prefix.rstrip("."), "relu", tuple(shape), tuple(shape), 0, 0)


class Linear(Module):
    def __init__(self, in_features, out_features, bias=True, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        w = rng.normal(0.0, np.sqrt(2.0 / in_features), size=(out_features, in_features))
        self.weight = Tensor(w.astype(np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, np.float32), requires_grad=True) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)

    def trace(self, shape, prefix=""):
        if tuple(shape) != (self.in_features,):
            raise ShapeError(f"linear expects ({self.in_features},), got {tuple(shape)}")
        params = self.weight.data.size + (self.out_features if self.bias is not None else 0)
        yield LayerInfo(prefix.rstrip("."), "linear", tuple(shape), (self.out_features,), params,
                        self.in_features * self.out_features)


class GlobalAvgPool(Module):
    def forward(self, x):
        return F.global_avg_pool(x)

    def trace(self, shape, prefix=""):
        yield LayerInfo(prefix.rstrip("."), "gap", tuple(shape), (shape[0],), 0, 0)


class Sequential(Module):
    def __init__(self, *layers, names=None):
        super().__init__()
        names = names or [str(k) for k in range(len(layers))]
        for name, layer in zip(names, layers):
            setattr(self, name, layer)

    def forward(self, x):
        for layer in self._modules.values():
            x = layer(x)
        return x

    def __len__(self):
        return len(self._modules)


def conv_bn(in_ch, out_ch, kernel, stride=1, groups=1, rng=None, relu=True):
    layers = [Conv2d(in_ch, out_ch, kernel, stride, groups=groups, rng=rng), BatchNorm2d(out_ch)]
    names = ["conv", "bn"]
    if relu:
        layers.append(ReLU())
        names.append("relu")
    return Sequential(*layers, names=names)


class InvertedResidual(Module):
    """1x1 expand -> 3x3 depthwise -> 1x1 project, residual when shapes match."""

    def __init__(self, in_ch, out_ch, expansion_rate, stride=1, rng=None):
        super().__init__()
        hidden = in_ch * expansion_rate
        self.expand = conv_bn(in_ch, hidden, 1, rng=rng)
        self.depthwise = conv_bn(hidden, hidden, 3, stride, groups=hidden, rng=rng)
        self.project = conv_bn(hidden, out_ch, 1, rng=rng, relu=False)
        self.use_residual = F.pair(stride) == (1, 1) and in_ch == out_ch

    def forward(self, x):
        out = self.project(self.depthwise(self.expand(x)))
        return add(out, x) if self.use_residual else out


class BasicBlock(Module):
    """Two conv/BN stages with an identity or 1x1-projected shortcut."""

    def __init__(self, in_ch, out_ch, kernels=(3, 3), stride=1, rng=None):
        super().__init__()
        self.conv1 = conv_bn(in_ch, out_ch, kernels[0], stride, rng=rng)
        self.conv2 = conv_bn(out_ch, out_ch, kernels[1], rng=rng, relu=False)
        if F.pair(stride) != (1, 1) or in_ch != out_ch:
            self.shortcut = conv_bn(in_ch, out_ch, 1, stride, rng=rng, relu=False)
        else:
            self.shortcut = None
        self.act = ReLU()

    def forward(self, x):
        out = self.conv2(self.conv1(x))
        skip = self.shortcut(x) if self.shortcut is not None else x
        return self.act(add(out, skip))

    def trace(self, shape, prefix=""):
        out = shape
        for info in self.conv1.trace(shape, f"{prefix}conv1."):
            yield info
            out = info.out_shape
        for info in self.conv2.trace(out, f"{prefix}conv2."):
            yield info
            out = info.out_shape
        if self.shortcut is not None:
            skip = shape
            for info in self.shortcut.trace(shape, f"{prefix}shortcut."):
                yield info
                skip = info.out_shape
            if skip != out:
                raise ShapeError(f"{prefix}: shortcut {skip} does not match main path {out}")
        yield from self.act.trace(out, f"{prefix}act.")

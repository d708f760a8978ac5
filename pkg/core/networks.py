"""
CP-Mobile (CPM) and CP-ResNet (CPR) classifiers and their complexity.

Both builders return a `ModelGraph`; `count_complexity` walks its trace for
a given input shape and `assert_budget` checks the result against the
parameter and MAC limits.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import BudgetExceededError, ShapeError
from core.nn import (
    BasicBlock,
    Conv2d,
    GlobalAvgPool,
    InvertedResidual,
    Module,
    Sequential,
    conv_bn,
)

logger = logging.getLogger(__name__)

MAX_PARAMS = 128_000
MAX_MACS = 30_000_000
# MACs are counted for one clip of this length, whatever the training crop
BUDGET_SECONDS = 1.0

# parameter targets -> base channels
SIZE_LADDER = {
    "cpm": {"128K": 32, "450K": 64, "1M": 96, "4M": 184, "8M": 264},
    "cpr": {"128K": 32, "450K": 56, "1M": 88, "4M": 168, "8M": 232},
}


@dataclass(frozen=True)
class CpmConfig:
    base_channels: int = 32
    expansion_rate: int = 3
    channels_multiplier: float = 2.3
    n_classes: int = 10

    def __post_init__(self):
        if self.base_channels < 4:
            raise ValueError(f"base_channels must be >= 4, got {self.base_channels}")
        if self.expansion_rate < 1:
            raise ValueError(f"expansion_rate must be >= 1, got {self.expansion_rate}")
        if self.channels_multiplier < 1:
            raise ValueError(f"channels_multiplier must be >= 1, got {self.channels_multiplier}")
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")

    @property
    def last_stage_channels(self):
        return int(round(self.base_channels * self.channels_multiplier))


@dataclass(frozen=True)
class CprConfig:
    base_channels: int = 32
    n_classes: int = 10

    def __post_init__(self):
        if self.base_channels < 4:
            raise ValueError(f"base_channels must be >= 4, got {self.base_channels}")
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")


class ModelGraph(Module):
    """A built classifier: [N,1,F,T] log-mel batch -> [N,n_classes] logits."""

    def __init__(self, architecture, config, body, head):
        super().__init__()
        self.architecture = architecture
        self.config = config
        self.body = body
        self.head = head
        self.pool = GlobalAvgPool()

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"model expects [N,1,F,T], got {list(x.shape)}")
        return self.pool(self.head(self.body(x)))

    def head_conv(self):
        return self.head.conv if isinstance(self.head, Sequential) else self.head

    def zero_head(self):
        conv = self.head_conv()
        conv.weight.data[...] = 0.0
        if conv.bias is not None:
            conv.bias.data[...] = 0.0
        return self


def build_cpm(cfg, seed=0):
    rng = np.random.default_rng(seed)
    b, e, c3 = cfg.base_channels, cfg.expansion_rate, cfg.last_stage_channels
    stem = Sequential(
        conv_bn(1, b // 2, 3, stride=2, rng=rng),
        conv_bn(b // 2, b, 3, stride=(2, 1), rng=rng),
        names=["conv1", "conv2"],
    )
    stage1 = Sequential(*(InvertedResidual(b, b, e, rng=rng) for _ in range(2)))
    stage2 = Sequential(InvertedResidual(b, b, e, stride=2, rng=rng), InvertedResidual(b, b, e, rng=rng))
    stage3 = Sequential(
        InvertedResidual(b, c3, e, stride=(2, 1), rng=rng),
        InvertedResidual(c3, c3, e, rng=rng),
        InvertedResidual(c3, c3, e, rng=rng),
    )
    body = Sequential(stem, stage1, stage2, stage3, names=["stem", "stage1", "stage2", "stage3"])
    head = conv_bn(c3, cfg.n_classes, 1, rng=rng, relu=False)
    return ModelGraph("cpm", cfg, body, head)


def build_cpr(cfg, seed=0):
    """Receptive field is bounded by keeping 3x3 kernels out of the late stages."""
    rng = np.random.default_rng(seed)
    b = cfg.base_channels
    stem = conv_bn(1, b, 5, stride=2, rng=rng)
    stage1 = Sequential(BasicBlock(b, b, (3, 3), rng=rng), BasicBlock(b, b, (3, 3), rng=rng))
    stage2 = Sequential(
        BasicBlock(b, 2 * b, (3, 1), stride=2, rng=rng),
        BasicBlock(2 * b, 2 * b, (1, 1), rng=rng),
    )
    stage3 = Sequential(
        BasicBlock(2 * b, 4 * b, (1, 1), stride=2, rng=rng),
        BasicBlock(4 * b, 4 * b, (1, 1), rng=rng),
    )
    body = Sequential(stem, stage1, stage2, stage3, names=["stem", "stage1", "stage2", "stage3"])
    head = Conv2d(4 * b, cfg.n_classes, 1, bias=True, rng=rng)
    return ModelGraph("cpr", cfg, body, head)


def build_model(architecture, base_channels, seed=0, **kwargs):
    if architecture == "cpm":
        return build_cpm(CpmConfig(base_channels=base_channels, **kwargs), seed=seed)
    if architecture == "cpr":
        return build_cpr(CprConfig(base_channels=base_channels, **kwargs), seed=seed)
    raise ValueError(f"unknown architecture {architecture!r}")


@dataclass(frozen=True)
class ModelComplexity:
    params: int
    macs: int
    layers: tuple = field(default=(), repr=False)

    @property
    def mmacs(self):
        return self.macs / 1e6


def count_complexity(graph, input_shape):
    """Per-layer parameters and MACs for one clip of `input_shape` ([C,F,T])."""
    layers = tuple(graph.trace(tuple(input_shape)))
    params = sum(info.params for info in layers)
    if params != sum(p.data.size for p in graph.parameters()):
        raise ShapeError("traced parameter count disagrees with registered parameters")
    return ModelComplexity(params, sum(info.macs for info in layers), layers)


@dataclass(frozen=True)
class BudgetVerdict:
    passed: bool
    params_ok: bool
    macs_ok: bool
    params: int
    macs: int
    max_params: int
    max_macs: float
    first_violation: object = None

    def summary(self):
        if self.passed:
            return (f"within budget: {self.params:,} params (max {self.max_params:,}), "
                    f"{self.macs / 1e6:.2f} MMACs (max {self.max_macs / 1e6:.2f})")
        broken = []
        if not self.params_ok:
            broken.append(f"{self.params:,} params > {self.max_params:,}")
        if not self.macs_ok:
            broken.append(f"{self.macs / 1e6:.2f} MMACs > {self.max_macs / 1e6:.2f}")
        where = f"; first exceeded at layer {self.first_violation.name}" if self.first_violation else ""
        return "over budget: " + ", ".join(broken) + where


def assert_budget(complexity, max_params=MAX_PARAMS, max_macs=MAX_MACS):
    params_ok = complexity.params <= max_params
    macs_ok = complexity.macs <= max_macs
    first = None
    if not (params_ok and macs_ok):
        running_params = running_macs = 0
        for info in complexity.layers:
            running_params += info.params
            running_macs += info.macs
            if running_params > max_params or running_macs > max_macs:
                first = info
                break
    return BudgetVerdict(params_ok and macs_ok, params_ok, macs_ok, complexity.params,
                         complexity.macs, max_params, max_macs, first)


def require_budget(complexity, max_params=MAX_PARAMS, max_macs=MAX_MACS):
    verdict = assert_budget(complexity, max_params, max_macs)
    if not verdict.passed:
        logger.warning("budget refusal: %s", verdict.summary())
        raise BudgetExceededError(verdict)
    return verdict

import math
from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .exception import ConfigError, DimensionError
from .layers import LEAKY_SLOPE, fan_in_normal
from .tensor import Tensor


@dataclass
class LossWeights:
    rec: float = 1.0
    adv: float = 1.0
    per: float = 0.1
    style: float = 100.0

    def violations(self):
        return [f"loss_weights.{f.name} must be >= 0, got {getattr(self, f.name)}"
                for f in fields(self) if not getattr(self, f.name) >= 0]

    def validate(self):
        problems = self.violations()
        if problems:
            raise ConfigError(problems)


@dataclass
class ExtractorStage:
    weight: Tensor
    bias: Tensor
    stride: int = 2
    padding: int = 1
    activation: bool = True

    def __call__(self, x: Tensor) -> Tensor:
        out = T.conv2d(x, self.weight, self.bias, self.stride, self.padding)
        if self.activation:
            out = T.leaky_relu(out, LEAKY_SLOPE)
        return out


@dataclass
class PerceptualExtractor:
    """Frozen random conv stack; its stage activations play the role of pre-trained deep features."""

    stages: list
    seed: int | None = None

    @classmethod
    def from_seed(cls, seed: int, in_channels: int = 3, channels=(8, 16, 32, 64, 64), kernel: int = 3):
        rng = np.random.default_rng(seed)
        stages = []
        c_in = in_channels
        for c_out in channels:
            weight = fan_in_normal(rng, (c_out, c_in, kernel, kernel), math.sqrt(2.0))
            bias = (rng.standard_normal(c_out) * 0.01).astype(np.float32)
            stages.append(ExtractorStage(Tensor(weight), Tensor(bias), 2, kernel // 2))
            c_in = c_out
        return cls(stages, seed)

    @classmethod
    def identity(cls, channels: int = 3):
        """Single 1×1 stage passing its input through unchanged."""
        weight = np.eye(channels, dtype=np.float32).reshape(channels, channels, 1, 1)
        return cls([ExtractorStage(Tensor(weight), Tensor(np.zeros(channels)), 1, 0, activation=False)])

    def features(self, x: Tensor):
        maps = []
        for stage in self.stages:
            x = stage(x)
            maps.append(x)
        return maps

    def tensors(self):
        out = {}
        for i, stage in enumerate(self.stages):
            out[f"extractor/stage{i}/weight"] = stage.weight
            out[f"extractor/stage{i}/bias"] = stage.bias
        return out


def _same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def rec_loss(gt: Tensor, pred: Tensor) -> Tensor:
    _same_shape("rec_loss", gt, pred)
    return T.reduce_mean(T.absolute(T.sub(gt, pred)))


def adv_g_loss(fake_scores: Tensor) -> Tensor:
    return T.neg(T.reduce_mean(fake_scores))


def adv_d_loss(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    real = T.reduce_mean(T.relu(T.sub(1.0, real_scores)))
    fake = T.reduce_mean(T.relu(T.shift(fake_scores, 1.0)))
    return T.add(real, fake)


def perceptual_loss(extractor: PerceptualExtractor, gt: Tensor, pred: Tensor) -> Tensor:
    _same_shape("perceptual_loss", gt, pred)
    terms = [T.reduce_mean(T.absolute(T.sub(a, b)))
             for a, b in zip(extractor.features(gt), extractor.features(pred))]
    return _sum(terms)


def gram(phi: Tensor) -> Tensor:
    """Per-sample C×C Gram matrix normalised by C·H·W."""
    if phi.ndim != 4:
        raise DimensionError(f"gram: expected N×C×H×W features, got {phi.shape}")
    n, c, h, w = phi.shape
    flat = T.reshape(phi, (n, c, h * w))
    return T.scale(T.matmul(flat, T.transpose(flat, (0, 2, 1))), 1.0 / (c * h * w))


def style_loss(extractor: PerceptualExtractor, comp: Tensor, pred: Tensor) -> Tensor:
    _same_shape("style_loss", comp, pred)
    terms = [T.reduce_mean(T.absolute(T.sub(gram(a), gram(b))))
             for a, b in zip(extractor.features(comp), extractor.features(pred))]
    return _sum(terms)


def _sum(terms) -> Tensor:
    total = terms[0]
    for term in terms[1:]:
        total = T.add(total, term)
    return total


@dataclass
class LossParts:
    rec: Tensor
    adv_g: Tensor
    per: Tensor
    style: Tensor


def generator_losses(extractor: PerceptualExtractor, gt: Tensor, pred: Tensor, comp: Tensor,
                     fake_scores: Tensor) -> LossParts:
    return LossParts(
        rec=rec_loss(gt, pred),
        adv_g=adv_g_loss(fake_scores),
        per=perceptual_loss(extractor, gt, pred),
        style=style_loss(extractor, comp, pred),
    )


def total_loss(weights: LossWeights, parts: LossParts) -> Tensor:
    return _sum([
        T.scale(parts.rec, weights.rec),
        T.scale(parts.adv_g, weights.adv),
        T.scale(parts.per, weights.per),
        T.scale(parts.style, weights.style),
    ])

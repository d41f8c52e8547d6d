import enum
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exception import DimensionError
from .tensor import Tensor

SIGMA_FLOOR = 1e-12
LEAKY_SLOPE = 0.2


class Activation(enum.Enum):
    ELU = "elu"
    NONE = "none"


def fan_in_normal(rng: np.random.Generator, shape, gain: float) -> np.ndarray:
    """Normal init scaled by ``gain / sqrt(fan_in)`` with ``fan_in = C_in·k·k``."""
    fan_in = int(np.prod(shape[1:]))
    return (rng.standard_normal(shape) * (gain / math.sqrt(fan_in))).astype(np.float32)


@dataclass
class GatedConvLayer:
    feature_weight: Tensor
    feature_bias: Tensor
    gate_weight: Tensor
    gate_bias: Tensor
    stride: int = 1
    padding: int = 0
    dilation: int = 1
    activation: Activation = Activation.ELU

    def __post_init__(self):
        if self.feature_weight.shape != self.gate_weight.shape:
            raise DimensionError(
                f"gated conv feature kernel {self.feature_weight.shape} and gate kernel {self.gate_weight.shape} differ"
            )

    @classmethod
    def create(cls, rng, c_in, c_out, kernel=3, stride=1, dilation=1, activation=Activation.ELU, padding=None):
        if padding is None:
            padding = dilation * (kernel - 1) // 2
        shape = (c_out, c_in, kernel, kernel)
        feature_gain = math.sqrt(2.0) if activation is Activation.ELU else 1.0
        return cls(
            feature_weight=Tensor.parameter(fan_in_normal(rng, shape, feature_gain)),
            feature_bias=Tensor.parameter(np.zeros(c_out)),
            gate_weight=Tensor.parameter(fan_in_normal(rng, shape, 1.0)),
            gate_bias=Tensor.parameter(np.zeros(c_out)),
            stride=stride,
            padding=padding,
            dilation=dilation,
            activation=activation,
        )

    def parameters(self):
        return {
            "feature_weight": self.feature_weight,
            "feature_bias": self.feature_bias,
            "gate_weight": self.gate_weight,
            "gate_bias": self.gate_bias,
        }

    def __call__(self, x: Tensor) -> Tensor:
        return gated_conv(self, x)


def gated_conv(layer: GatedConvLayer, x: Tensor) -> Tensor:
    """``activation(conv(x; feature)) ⊙ sigmoid(conv(x; gate))``."""
    feature = T.conv2d(x, layer.feature_weight, layer.feature_bias, layer.stride, layer.padding, layer.dilation)
    if layer.activation is Activation.ELU:
        feature = T.elu(feature)
    gate = T.sigmoid(T.conv2d(x, layer.gate_weight, layer.gate_bias, layer.stride, layer.padding, layer.dilation))
    return T.mul(feature, gate)


def make_dilated_block(rng, channels, dilations=(2, 4, 8, 16)):
    return [GatedConvLayer.create(rng, channels, channels, 3, dilation=d, padding=d) for d in dilations]


def dilated_block(x: Tensor, layers) -> Tensor:
    for layer in layers:
        out = gated_conv(layer, x)
        if out.shape[2:] != x.shape[2:]:
            raise DimensionError(
                f"dilated layer (dilation {layer.dilation}) changed spatial size {x.shape[2:]} -> {out.shape[2:]}"
            )
        x = out
    return x


def _unit(vector: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm <= SIGMA_FLOOR:
        return fallback
    return vector / norm


@dataclass
class SpectralConvLayer:
    weight: Tensor
    bias: Tensor
    u: np.ndarray
    stride: int = 2
    padding: int = 2
    activation: bool = True

    @classmethod
    def create(cls, rng, c_in, c_out, kernel=5, stride=2, activation=True, init_iterations=50):
        u = rng.standard_normal(c_out)
        layer = cls(
            weight=Tensor.parameter(fan_in_normal(rng, (c_out, c_in, kernel, kernel), math.sqrt(2.0))),
            bias=Tensor.parameter(np.zeros(c_out)),
            u=(u / np.linalg.norm(u)).astype(np.float32),
            stride=stride,
            padding=kernel // 2,
            activation=activation,
        )
        layer.power_iterate(init_iterations)
        return layer

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def matrix(self) -> np.ndarray:
        return self.weight.data.reshape(self.weight.shape[0], -1).astype(np.float64)

    def right_vector(self) -> np.ndarray:
        w = self.matrix()
        fallback = np.zeros(w.shape[1])
        return _unit(w.T @ self.u.astype(np.float64), fallback)

    def power_iterate(self, steps: int = 1) -> float:
        w = self.matrix()
        u = self.u.astype(np.float64)
        for _ in range(steps):
            v = _unit(w.T @ u, np.zeros(w.shape[1]))
            u = _unit(w @ v, u)
        self.u = u.astype(np.float32)
        return self.sigma()

    def sigma(self) -> float:
        """Power-iteration estimate of the top singular value, without updating ``u``."""
        w = self.matrix()
        return float(self.u.astype(np.float64) @ w @ self.right_vector())

    def __call__(self, x: Tensor, train_mode: bool = False) -> Tensor:
        return spectral_conv(self, x, train_mode)


def spectral_conv(layer: SpectralConvLayer, x: Tensor, train_mode: bool = False) -> Tensor:
    if train_mode:
        layer.power_iterate(1)
    c_out = layer.weight.shape[0]
    v = Tensor(layer.right_vector()[:, None])
    u = Tensor(layer.u[:, None])
    wmat = T.reshape(layer.weight, (c_out, -1))
    sigma = T.reduce_sum(T.mul(T.matmul(wmat, v), u))
    if sigma.item() < SIGMA_FLOOR:
        sigma = Tensor(SIGMA_FLOOR)
    normalized = T.mul(layer.weight, T.reciprocal(sigma))
    out = T.conv2d(x, normalized, layer.bias, layer.stride, layer.padding)
    if layer.activation:
        out = T.leaky_relu(out, LEAKY_SLOPE)
    return out


def make_discriminator_layers(rng, in_channels=4, channels=(64, 128, 256, 256, 256, 256), kernel=5):
    layers = []
    c_in = in_channels
    for i, c_out in enumerate(channels):
        last = i == len(channels) - 1
        layers.append(SpectralConvLayer.create(rng, c_in, c_out, kernel, stride=2, activation=not last))
        c_in = c_out
    return layers


def patch_discriminator(x: Tensor, layers, train_mode: bool = False) -> Tensor:
    """Per-patch score map [N, C_d, h, w]; every spatial score is one patch judgment."""
    if x.ndim != 4 or x.shape[1] != layers[0].weight.shape[1]:
        raise DimensionError(
            f"discriminator expects {layers[0].weight.shape[1]} input channels, got shape {x.shape}"
        )
    stride_product = int(np.prod([layer.stride for layer in layers]))
    if min(x.shape[2:]) < stride_product:
        raise DimensionError(
            f"discriminator input {x.shape[2]}×{x.shape[3]} is smaller than its stride product {stride_product}"
        )
    for layer in layers:
        x = spectral_conv(layer, x, train_mode)
    return x

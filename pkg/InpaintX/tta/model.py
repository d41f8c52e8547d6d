"""Single-refinement inpainting network: gated-conv encoder, dilated bottleneck, and a decoder
that runs texture transform attention at every skip connection. Also holds the discriminator."""
import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .attention import AttentionConfig, concat_synthesize, soft_tta, synthesize, tta
from .exception import ConfigError, DimensionError
from .layers import (
    Activation,
    GatedConvLayer,
    dilated_block,
    fan_in_normal,
    gated_conv,
    make_dilated_block,
    make_discriminator_layers,
    patch_discriminator,
)
from .logger_config import get_logger
from .losses import LossWeights
from .tensor import Tensor

logger = get_logger()


class AttentionMode(enum.Enum):
    SWAP = "swap"
    WEIGHTED = "weighted"


class Synthesis(enum.Enum):
    RATIO = "ratio"
    CONCAT = "concat"


@dataclass
class ModelConfig:
    levels: int = 3
    base_channels: int = 32
    input_size: int = 64
    dilations: tuple = (2, 4, 8, 16)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    tta_levels: tuple | None = None
    attention_mode: AttentionMode = AttentionMode.SWAP
    temperature: float = 0.1
    synthesis: Synthesis = Synthesis.RATIO
    normalize_fusion: bool = True
    disc_channels: tuple = (64, 128, 256, 256, 256, 256)
    disc_kernel: int = 5
    extractor_channels: tuple = (8, 16, 32, 64, 64)
    extractor_seed: int = 1234
    loss_weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0

    def __post_init__(self):
        self.dilations = tuple(self.dilations)
        self.disc_channels = tuple(self.disc_channels)
        self.extractor_channels = tuple(self.extractor_channels)
        if self.tta_levels is None:
            self.tta_levels = (True,) * max(self.levels, 0)
        self.tta_levels = tuple(bool(flag) for flag in self.tta_levels)

    @classmethod
    def toy(cls, **overrides):
        return cls(**overrides)

    @classmethod
    def large(cls, **overrides):
        return cls(**{"levels": 4, "input_size": 256, **overrides})

    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** level

    def level_size(self, level: int) -> int:
        return self.input_size // 2 ** level

    def violations(self):
        problems = []
        if self.levels < 1:
            problems.append(f"model.levels must be >= 1, got {self.levels}")
        if self.base_channels < 1:
            problems.append(f"model.base_channels must be >= 1, got {self.base_channels}")
        if not self.dilations or min(self.dilations) < 1:
            problems.append(f"model.dilations must be non-empty positive ints, got {list(self.dilations)}")
        if problems:
            return problems

        if self.input_size % 2 ** self.levels:
            problems.append(f"model.input_size {self.input_size} is not divisible by 2^levels = {2 ** self.levels}")
        bottleneck = self.level_size(self.levels - 1)
        if bottleneck < max(self.dilations):
            problems.append(
                f"model.dilations: bottleneck side must be >= largest dilation, got side {bottleneck} "
                f"(input_size {self.input_size}, levels {self.levels}) and largest dilation {max(self.dilations)}"
            )
        if len(self.tta_levels) != self.levels:
            problems.append(f"model.tta_levels has {len(self.tta_levels)} entries for {self.levels} levels")
        problems.extend(self.attention.violations())
        factor = self.attention.factor
        for level in range(self.levels):
            if self.level_size(level) % max(factor, 1):
                problems.append(
                    f"level {level} side {self.level_size(level)} is not divisible by "
                    f"attention downsample·stride = {factor}"
                )
                break
        if not isinstance(self.attention_mode, AttentionMode):
            problems.append(f"model.attention_mode must be one of {[m.value for m in AttentionMode]}")
        if not isinstance(self.synthesis, Synthesis):
            problems.append(f"model.synthesis must be one of {[s.value for s in Synthesis]}")
        if not self.temperature > 0:
            problems.append(f"model.temperature must be > 0, got {self.temperature}")
        if not self.disc_channels:
            problems.append("model.disc_channels must not be empty")
        elif self.input_size < 2 ** len(self.disc_channels):
            problems.append(
                f"model.input_size {self.input_size} is smaller than the discriminator stride product "
                f"{2 ** len(self.disc_channels)}"
            )
        if self.disc_kernel < 1 or self.disc_kernel % 2 == 0:
            problems.append(f"model.disc_kernel must be a positive odd number, got {self.disc_kernel}")
        if not self.extractor_channels:
            problems.append("model.extractor_channels must not be empty")
        problems.extend(self.loss_weights.violations())
        return problems

    def validate(self):
        problems = self.violations()
        if problems:
            logger.error(f"invalid model config: {len(problems)} violation(s)")
            raise ConfigError(problems)

    def variant(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


@dataclass
class DecoderLevel:
    up: GatedConvLayer | None
    fusion_weight: Tensor
    fusion_bias: Tensor
    conv: GatedConvLayer


@dataclass
class Generator:
    config: ModelConfig
    encoder: list
    bottleneck: list
    decoder: list
    output: GatedConvLayer

    def named_parameters(self) -> dict:
        params = {}

        def put(prefix, layer):
            for role, tensor in layer.parameters().items():
                params[f"{prefix}/{role}"] = tensor

        for level, (first, second) in enumerate(self.encoder):
            put(f"generator/level{level}/{'conv_in' if level == 0 else 'down'}", first)
            put(f"generator/level{level}/encode", second)
        for i, layer in enumerate(self.bottleneck):
            put(f"generator/bottleneck/dilated{i}", layer)
        for level, block in enumerate(self.decoder):
            if block.up is not None:
                put(f"generator/level{level}/up", block.up)
            params[f"generator/level{level}/fusion/weight"] = block.fusion_weight
            params[f"generator/level{level}/fusion/bias"] = block.fusion_bias
            put(f"generator/level{level}/decode", block.conv)
        put("generator/output", self.output)
        for name, tensor in params.items():
            tensor.name = name
        return params

    def parameter_count(self) -> int:
        return sum(t.size for t in self.named_parameters().values())


@dataclass
class Discriminator:
    layers: list

    def named_parameters(self) -> dict:
        params = {}
        for i, layer in enumerate(self.layers):
            for role, tensor in layer.parameters().items():
                params[f"discriminator/layer{i}/{role}"] = tensor
                tensor.name = f"discriminator/layer{i}/{role}"
        return params

    def spectral_vectors(self) -> dict:
        return {f"discriminator/layer{i}/u": layer.u for i, layer in enumerate(self.layers)}

    def load_spectral_vectors(self, vectors: dict):
        for i, layer in enumerate(self.layers):
            layer.u = np.asarray(vectors[f"discriminator/layer{i}/u"], dtype=np.float32)

    def parameter_count(self) -> int:
        return sum(t.size for t in self.named_parameters().values())

    def __call__(self, x: Tensor, train_mode: bool = False) -> Tensor:
        return patch_discriminator(x, self.layers, train_mode)


def build(cfg: ModelConfig):
    """Deterministic (Generator, Discriminator) pair from ``cfg.seed``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    encoder = []
    for level in range(cfg.levels):
        c = cfg.channels(level)
        if level == 0:
            first = GatedConvLayer.create(rng, 4, c, kernel=5)
        else:
            first = GatedConvLayer.create(rng, cfg.channels(level - 1), c, kernel=3, stride=2, padding=1)
        encoder.append((first, GatedConvLayer.create(rng, c, c, kernel=3)))

    deepest = cfg.channels(cfg.levels - 1)
    bottleneck = make_dilated_block(rng, deepest, cfg.dilations)

    decoder = []
    for level in range(cfg.levels):
        c = cfg.channels(level)
        up = None
        if level < cfg.levels - 1:
            up = GatedConvLayer.create(rng, cfg.channels(level + 1), c, kernel=3)
        fusion_weight = Tensor.parameter(fan_in_normal(rng, (c, 2 * c, 3, 3), 1.0))
        fusion_bias = Tensor.parameter(np.zeros(c))
        decoder.append(DecoderLevel(up, fusion_weight, fusion_bias, GatedConvLayer.create(rng, c, c, kernel=3)))

    output = GatedConvLayer.create(rng, cfg.channels(0), 3, kernel=3, activation=Activation.NONE)
    generator = Generator(cfg, encoder, bottleneck, decoder, output)

    d_rng = np.random.default_rng([cfg.seed, 1])
    discriminator = Discriminator(make_discriminator_layers(d_rng, 4, cfg.disc_channels, cfg.disc_kernel))

    logger.info(
        f"built model: {cfg.levels} levels, input {cfg.input_size}, "
        f"generator {generator.parameter_count():,} params, discriminator {discriminator.parameter_count():,} params"
    )
    return generator, discriminator


def level_validity(M: Tensor, level: int) -> np.ndarray:
    """Known-pixel map (1 − M) at a level's resolution; a pooled pixel counts only when fully known."""
    hole = M.data if level == 0 else T.avg_pool(Tensor(M.data), 2 ** level).data
    return (hole <= 1e-6).astype(np.float32)


def _check_inputs(cfg: ModelConfig, z: Tensor, M: Tensor):
    expected = (cfg.input_size, cfg.input_size)
    if z.ndim != 4 or z.shape[1] != 3 or z.shape[2:] != expected:
        raise DimensionError(f"generator input must be N×3×{cfg.input_size}×{cfg.input_size}, got {z.shape}")
    if M.shape != (z.shape[0], 1) + expected:
        raise DimensionError(f"mask {M.shape} does not match input {z.shape} (expected N×1×H×W)")


def run(G: Generator, z: Tensor, M: Tensor):
    """Forward pass returning ``(I_pred, attention)``; ``attention[l]`` is None where TTA is off."""
    cfg = G.config
    _check_inputs(cfg, z, M)
    x = T.concat([z, M], axis=1)
    skips = []
    for first, second in G.encoder:
        x = gated_conv(second, gated_conv(first, x))
        skips.append(x)

    x = dilated_block(x, G.bottleneck)
    attention = [None] * cfg.levels
    for level in reversed(range(cfg.levels)):
        block = G.decoder[level]
        if block.up is not None:
            x = gated_conv(block.up, T.nearest_upsample(x, 2))
        P = skips[level]
        if cfg.tta_levels[level]:
            valid = level_validity(M, level)
            if cfg.attention_mode is AttentionMode.WEIGHTED:
                result = soft_tta(x, P, valid, cfg.attention, cfg.temperature)
            else:
                result = tta(x, P, valid, cfg.attention)
            attention[level] = result
            if cfg.synthesis is Synthesis.CONCAT:
                x = concat_synthesize(x, result.texture_map, block.fusion_weight, block.fusion_bias)
            else:
                x = synthesize(x, result.texture_map, result.ratio_map, block.fusion_weight, block.fusion_bias,
                               normalize=cfg.normalize_fusion)
        else:
            x = concat_synthesize(x, P, block.fusion_weight, block.fusion_bias)
        x = gated_conv(block.conv, x)

    pred = T.tanh(gated_conv(G.output, x))
    engaged = [level for level, result in enumerate(attention) if result is not None and result.fallback_engaged]
    if engaged:
        logger.debug(f"attention fallback engaged at levels {engaged}")
    return pred, attention


def forward(G: Generator, z: Tensor, M: Tensor) -> Tensor:
    return run(G, z, M)[0]


def masked_input(gt: Tensor, M: Tensor) -> Tensor:
    """``z = I_gt ⊙ (1 − M)``."""
    return T.mul(gt, Tensor(1.0 - M.data))


def composite(pred: Tensor, gt: Tensor, M: Tensor) -> Tensor:
    """``I_comp = M ⊙ I_pred + (1 − M) ⊙ I_gt``."""
    return T.add(T.mul(M, pred), T.mul(Tensor(1.0 - M.data), gt))


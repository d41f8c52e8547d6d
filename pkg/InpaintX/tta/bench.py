"""Throughput, memory and sharpness comparison of argmax swapping against weighted-sum attention."""
import time
from dataclasses import dataclass

import numpy as np

from .attention import AttentionConfig, brute_force_swap, tta, weighted_sum_attention
from .data import MaskSpec, generate_mask
from .exception import DimensionError
from .logger_config import get_logger
from .tensor import Tensor

logger = get_logger()

ORACLE_MAX_SIZE = 16
ORACLE_TOLERANCE = 1e-5


@dataclass
class BenchRow:
    size: int
    mode: str
    positions_per_second: float
    memory_bytes: int
    oracle: str
    sharpness: float


def estimate_memory(shape, cfg: AttentionConfig) -> int:
    """Peak float32 bytes of the similarity matrices plus unfolded and gathered patches."""
    n, c, h, w = shape
    lq = (h // cfg.factor) * (w // cfg.factor)
    sim_rows = 2 * n * lq * c * cfg.sim_patch ** 2
    similarity = 2 * n * lq * lq
    swap_rows = 2 * n * h * w * c * cfg.swap_patch ** 2
    return 4 * (sim_rows + similarity + swap_rows)


def sharpness(texture: np.ndarray) -> float:
    """Mean absolute finite-difference gradient of a [N, C, H, W] map."""
    dy = np.abs(np.diff(texture, axis=2)).mean()
    dx = np.abs(np.diff(texture, axis=3)).mean()
    return float((dx + dy) / 2)


def bench_inputs(size: int, channels: int, seed: int):
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((1, channels, size, size)).astype(np.float32)
    Q = (P + 0.1 * rng.standard_normal(P.shape)).astype(np.float32)
    spec = MaskSpec(size=size, min_ratio=0.05, max_ratio=0.6, min_width=0.1, max_width=0.25, seed=seed)
    hole = generate_mask(spec).data
    return Tensor(Q), Tensor(P), 1.0 - hole


def oracle_agreement(Q: Tensor, P: Tensor, valid, cfg: AttentionConfig) -> bool:
    result = tta(Q, P, valid, cfg)
    index_map, ratio, texture = brute_force_swap(Q, P, valid, cfg)
    return bool(
        np.array_equal(result.index_map, index_map)
        and np.abs(result.ratio_map.data - ratio).max() <= ORACLE_TOLERANCE
        and np.abs(result.texture_map.data - texture).max() <= ORACLE_TOLERANCE
    )


def run_benchmark(sizes, cfg: AttentionConfig, modes=("swap", "weighted"), repeats: int = 3, channels: int = 4,
                  temperature: float = 0.1, seed: int = 0):
    cfg.validate()
    rows = []
    for size in sizes:
        if size % cfg.factor:
            raise DimensionError(f"bench size {size} is not divisible by downsample·stride = {cfg.factor}")
        Q, P, valid = bench_inputs(size, channels, seed)
        for mode in modes:
            elapsed = []
            texture = None
            for _ in range(max(repeats, 1)):
                started = time.perf_counter()
                if mode == "swap":
                    texture = tta(Q, P, valid, cfg).texture_map
                else:
                    texture = weighted_sum_attention(Q, P, valid, cfg, temperature)
                elapsed.append(time.perf_counter() - started)
            oracle = "n/a"
            if mode == "swap" and size <= ORACLE_MAX_SIZE:
                oracle = "ok" if oracle_agreement(Q, P, valid, cfg) else "MISMATCH"
            best = min(elapsed)
            rows.append(BenchRow(size, mode, size * size / best if best > 0 else float("inf"),
                                 estimate_memory(P.shape, cfg), oracle, sharpness(texture.data)))
            logger.debug(f"bench {mode} {size}px: {best * 1e3:.2f} ms")
    return rows

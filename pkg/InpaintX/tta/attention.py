"""Texture transform attention.

Context features Q (decoder side) are matched against texture features P (encoder side)
with cosine similarity at reduced resolution. Each query takes the single most similar
admissible candidate. The winning full-resolution patches are folded into a texture map T,
and the winning similarities form the ratio map R that weights the fusion.
"""
import enum
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exception import ConfigError, ContractError, DimensionError
from .logger_config import get_logger
from .tensor import Tensor

logger = get_logger()

MASKED_SIMILARITY = -2.0
SOFTMAX_MASK = -1e9
FRACTION_TOLERANCE = 1e-6


class Fallback(enum.Enum):
    USE_ALL = "use_all"
    NEAREST_VALID = "nearest_valid"


@dataclass
class AttentionConfig:
    swap_patch: int = 5
    sim_patch: int = 3
    stride: int = 1
    downsample: int = 2
    valid_threshold: float = 1.0
    fallback: Fallback = Fallback.USE_ALL

    @property
    def factor(self) -> int:
        """Side of the full-resolution block covered by one similarity-grid cell."""
        return self.downsample * self.stride

    def violations(self):
        problems = []
        if self.swap_patch < 1 or self.swap_patch % 2 == 0:
            problems.append(f"attention.swap_patch must be a positive odd number, got {self.swap_patch}")
        if self.sim_patch < 1 or self.sim_patch % 2 == 0:
            problems.append(f"attention.sim_patch must be a positive odd number, got {self.sim_patch}")
        if self.stride not in (1, 2):
            problems.append(f"attention.stride must be 1 or 2, got {self.stride}")
        if self.downsample not in (1, 2):
            problems.append(f"attention.downsample must be 1 or 2, got {self.downsample}")
        if not 0.0 <= self.valid_threshold <= 1.0:
            problems.append(f"attention.valid_threshold must lie in [0, 1], got {self.valid_threshold}")
        if not isinstance(self.fallback, Fallback):
            problems.append(f"attention.fallback must be one of {[f.value for f in Fallback]}")
        return problems

    def validate(self):
        problems = self.violations()
        if problems:
            raise ConfigError(problems)


@dataclass
class SimilarityMatrix:
    s: Tensor  # raw cosine similarities [N, Lq, Lp]
    selection: Tensor  # s with inadmissible columns replaced by MASKED_SIMILARITY
    admitted: np.ndarray  # bool [N, Lp]
    valid_fraction: np.ndarray  # [N, Lp]
    fallback: np.ndarray  # bool [N]
    grid: tuple


@dataclass
class AttentionResult:
    index_map: np.ndarray  # H: winning candidate per similarity-grid query [N, Lq]
    ratio_map: Tensor  # R: [N, 1, H, W]
    texture_map: Tensor  # T: [N, C, H, W]
    source_index: np.ndarray  # full-resolution source pixel per full-resolution position [N, H·W]
    fallback: np.ndarray
    grid: tuple

    @property
    def fallback_engaged(self) -> bool:
        return bool(self.fallback.any())


def _validity(valid_mask, shape) -> np.ndarray:
    n, _, h, w = shape
    mask = valid_mask.data if isinstance(valid_mask, Tensor) else np.asarray(valid_mask, dtype=np.float32)
    if mask.ndim != 4 or mask.shape[1] != 1 or mask.shape[2:] != (h, w) or mask.shape[0] not in (1, n):
        raise DimensionError(f"valid mask {mask.shape} does not match features {shape} (expected N×1×H×W)")
    return np.broadcast_to(mask, (n, 1, h, w)).astype(np.float32)


def _check_pair(Q: Tensor, P: Tensor, cfg: AttentionConfig):
    cfg.validate()
    if Q.shape != P.shape or P.ndim != 4:
        raise DimensionError(f"context {Q.shape} and texture {P.shape} features must share an N×C×H×W shape")
    _, _, h, w = P.shape
    if h % cfg.factor or w % cfg.factor:
        raise DimensionError(f"feature size {h}×{w} is not divisible by downsample·stride = {cfg.factor}")


def candidate_fractions(valid: np.ndarray, cfg: AttentionConfig) -> np.ndarray:
    """Known-pixel fraction of each candidate patch, counted over its in-image pixels only."""
    pooled = T.avg_pool(Tensor(valid), cfg.downsample)
    pad = cfg.sim_patch // 2
    known = T.unfold(pooled, cfg.sim_patch, cfg.stride, pad).data.sum(axis=2, dtype=np.float64)
    inside = T.unfold(Tensor(np.ones((1,) + pooled.shape[1:])), cfg.sim_patch, cfg.stride, pad)
    return known / inside.data.sum(axis=2, dtype=np.float64)


def admit_candidates(fraction: np.ndarray, cfg: AttentionConfig):
    admitted = fraction >= cfg.valid_threshold - FRACTION_TOLERANCE
    fallback = ~admitted.any(axis=1)
    for n in np.flatnonzero(fallback):
        if cfg.fallback is Fallback.NEAREST_VALID:
            admitted[n] = fraction[n] >= fraction[n].max() - FRACTION_TOLERANCE
        else:
            admitted[n] = True
    if fallback.any():
        logger.warning(
            f"no candidate patch reaches valid_threshold={cfg.valid_threshold} for samples "
            f"{np.flatnonzero(fallback).tolist()}; fallback '{cfg.fallback.value}' engaged"
        )
    return admitted, fallback


def relevance_embedding(Q: Tensor, P: Tensor, valid_mask, cfg: AttentionConfig) -> SimilarityMatrix:
    """Cosine similarity between every query patch of Q and every candidate patch of P.

    Both maps are average-pooled by ``cfg.downsample`` and cut into ``sim_patch`` patches
    at ``cfg.stride``. Zero-norm patches score 0 against everything.
    """
    _check_pair(Q, P, cfg)
    valid = _validity(valid_mask, P.shape)
    pad = cfg.sim_patch // 2
    q_small = T.avg_pool(Q, cfg.downsample)
    p_small = T.avg_pool(P, cfg.downsample)
    q_rows = T.l2_normalize(T.unfold(q_small, cfg.sim_patch, cfg.stride, pad), axis=-1)
    p_rows = T.l2_normalize(T.unfold(p_small, cfg.sim_patch, cfg.stride, pad), axis=-1)
    s = T.matmul(q_rows, T.transpose(p_rows, (0, 2, 1)))

    fraction = candidate_fractions(valid, cfg)
    admitted, fallback = admit_candidates(fraction, cfg)
    keep = admitted[:, None, :].astype(np.float32)
    selection = T.add(T.mul(s, Tensor(keep)), Tensor((keep - 1.0) * -MASKED_SIMILARITY))

    hs, ws = q_small.shape[2:]
    grid = (T.output_size(hs, cfg.sim_patch, cfg.stride, pad), T.output_size(ws, cfg.sim_patch, cfg.stride, pad))
    return SimilarityMatrix(s, selection, admitted, fraction, fallback, grid)


def _block_layout(grid, full, factor):
    hq, wq = grid
    h, w = full
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    cell = ((ys // factor) * wq + xs // factor).reshape(-1)
    offset_y = (ys % factor).reshape(-1)
    offset_x = (xs % factor).reshape(-1)
    return cell, offset_y, offset_x


def swap_source_index(index_map: np.ndarray, grid, full, factor: int) -> np.ndarray:
    """Full-resolution source pixel for every full-resolution position.

    Position ``(f·a+u, f·b+v)`` of query cell ``(a, b)`` reads from ``(f·c_y+u, f·c_x+v)``,
    where ``(c_y, c_x)`` is the cell of the winning candidate.
    """
    _, wq = grid
    _, w = full
    cell, offset_y, offset_x = _block_layout(grid, full, factor)
    winner = index_map[:, cell]
    return (winner // wq * factor + offset_y) * w + (winner % wq * factor + offset_x)


def best_match(sim: SimilarityMatrix, shape, cfg: AttentionConfig):
    """Winning candidate per query and the full-resolution ratio map built from its similarity."""
    n, _, h, w = shape
    hq, wq = sim.grid
    if hq * cfg.factor != h or wq * cfg.factor != w:
        raise DimensionError(f"similarity grid {sim.grid} does not tile features {h}×{w} by {cfg.factor}")
    ratio, index_map = T.reduce_max(sim.selection, axis=2)
    ratio_map = T.nearest_upsample(T.reshape(ratio, (n, 1, hq, wq)), cfg.factor)
    return index_map, ratio_map


def feature_swap(P: Tensor, sim: SimilarityMatrix, cfg: AttentionConfig) -> AttentionResult:
    index_map, ratio_map = best_match(sim, P.shape, cfg)
    source = swap_source_index(index_map, sim.grid, P.shape[2:], cfg.factor)

    pad = cfg.swap_patch // 2
    patches = T.unfold(P, cfg.swap_patch, 1, pad)
    texture = T.fold(T.gather_rows(patches, source), P.shape, cfg.swap_patch, 1, pad, normalize=True)
    return AttentionResult(index_map, ratio_map, texture, source, sim.fallback, sim.grid)


def tta(Q: Tensor, P: Tensor, valid_mask, cfg: AttentionConfig) -> AttentionResult:
    return feature_swap(P, relevance_embedding(Q, P, valid_mask, cfg), cfg)


def soft_tta(Q: Tensor, P: Tensor, valid_mask, cfg: AttentionConfig, temperature: float) -> AttentionResult:
    """Weighted-sum texture with the same ratio map and index map as the argmax path."""
    sim = relevance_embedding(Q, P, valid_mask, cfg)
    index_map, ratio_map = best_match(sim, P.shape, cfg)
    source = swap_source_index(index_map, sim.grid, P.shape[2:], cfg.factor)
    texture = soft_reassemble(P, sim, cfg, temperature)
    return AttentionResult(index_map, ratio_map, texture, source, sim.fallback, sim.grid)


def soft_reassemble(P: Tensor, sim: SimilarityMatrix, cfg: AttentionConfig, temperature: float) -> Tensor:
    """Weighted-sum counterpart of :func:`feature_swap`: softmax over candidates instead of argmax."""
    if temperature <= 0:
        raise ContractError(f"temperature must be positive, got {temperature}")
    n, c, h, w = P.shape
    f = cfg.factor
    hq, wq = sim.grid
    lq = hq * wq
    penalty = (~sim.admitted[:, None, :]).astype(np.float32) * SOFTMAX_MASK
    weights = T.softmax(T.add(T.scale(sim.s, 1.0 / temperature), Tensor(penalty)), axis=2)

    pad = cfg.swap_patch // 2
    patches = T.unfold(P, cfg.swap_patch, 1, pad)
    candidates = np.arange(sim.s.shape[2])
    blocks = []
    for u in range(f):
        for v in range(f):
            rows = (candidates // wq * f + u) * w + (candidates % wq * f + v)
            chosen = T.gather_rows(patches, np.tile(rows, (n, 1)))
            blocks.append(T.matmul(weights, chosen))
    stacked = blocks[0] if len(blocks) == 1 else T.concat(blocks, axis=1)

    cell, offset_y, offset_x = _block_layout(sim.grid, (h, w), f)
    order = (offset_y * f + offset_x) * lq + cell
    arranged = T.gather_rows(stacked, np.tile(order, (n, 1)))
    return T.fold(arranged, P.shape, cfg.swap_patch, 1, pad, normalize=True)


def weighted_sum_attention(Q: Tensor, P: Tensor, valid_mask, cfg: AttentionConfig, temperature: float) -> Tensor:
    return soft_reassemble(P, relevance_embedding(Q, P, valid_mask, cfg), cfg, temperature)


def synthesize(F: Tensor, texture: Tensor, ratio: Tensor, fusion_weight: Tensor, fusion_bias: Tensor,
               normalize: bool = True) -> Tensor:
    """``F_fus = F + conv(concat(F, T)) ⊙ R``, then ``F_out = F_fus ⊙ (1 + R)^-1``."""
    if F.shape != texture.shape:
        raise DimensionError(f"context {F.shape} and texture map {texture.shape} differ")
    if ratio.ndim != 4 or ratio.shape[1] != 1 or ratio.shape[2:] != F.shape[2:]:
        raise DimensionError(f"ratio map {ratio.shape} does not broadcast over {F.shape}")
    if np.any(ratio.data <= -1.0):
        raise ContractError("ratio map holds values <= -1; the normalization factor (1 + R) would vanish")
    kernel = fusion_weight.shape[-1]
    fused_texture = T.conv2d(T.concat([F, texture], axis=1), fusion_weight, fusion_bias, 1, kernel // 2)
    fused = T.add(F, T.mul(fused_texture, ratio))
    if normalize:
        fused = T.mul(fused, T.reciprocal(T.shift(ratio, 1.0)))
    return fused


def concat_synthesize(F: Tensor, texture: Tensor, fusion_weight: Tensor, fusion_bias: Tensor) -> Tensor:
    """Plain concatenation baseline: ``conv(concat(F, T))``."""
    if F.shape != texture.shape:
        raise DimensionError(f"context {F.shape} and texture map {texture.shape} differ")
    kernel = fusion_weight.shape[-1]
    return T.conv2d(T.concat([F, texture], axis=1), fusion_weight, fusion_bias, 1, kernel // 2)


# ---------------------------------------------------------------------------
# exhaustive reference
# ---------------------------------------------------------------------------

def _pool(x: np.ndarray, factor: int) -> np.ndarray:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))


def _patch_at(image: np.ndarray, top: int, left: int, size: int) -> np.ndarray:
    c, h, w = image.shape
    out = np.zeros((c, size, size))
    for dy in range(size):
        for dx in range(size):
            y, x = top + dy, left + dx
            if 0 <= y < h and 0 <= x < w:
                out[:, dy, dx] = image[:, y, x]
    return out


def brute_force_swap(Q, P, valid_mask, cfg: AttentionConfig):
    """Scan every (query, candidate) pair with explicit loops; returns (H, R, T) as float64 arrays.

    Used to cross-check :func:`tta` and by the attention benchmark.
    """
    q = np.asarray(Q.data if isinstance(Q, Tensor) else Q, dtype=np.float64)
    p = np.asarray(P.data if isinstance(P, Tensor) else P, dtype=np.float64)
    n, c, h, w = p.shape
    valid = _validity(valid_mask, p.shape).astype(np.float64)
    d, s, k = cfg.downsample, cfg.stride, cfg.sim_patch
    f = cfg.factor
    pad = k // 2
    q_small, p_small, v_small = _pool(q, d), _pool(p, d), _pool(valid, d)
    hq, wq = h // f, w // f

    def rows(image):
        out = []
        for a in range(hq):
            for b in range(wq):
                vec = _patch_at(image, a * s - pad, b * s - pad, k).ravel()
                norm = np.sqrt((vec ** 2).sum())
                out.append(vec / norm if norm > 1e-12 else np.zeros_like(vec))
        return out

    index_map = np.zeros((n, hq * wq), dtype=np.int64)
    ratio_small = np.zeros((n, hq * wq))
    fraction = np.zeros((n, hq * wq))
    ones = np.ones((1,) + v_small.shape[2:])
    for i in range(n):
        for a in range(hq):
            for b in range(wq):
                known = _patch_at(v_small[i], a * s - pad, b * s - pad, k).sum()
                inside = _patch_at(ones, a * s - pad, b * s - pad, k).sum()
                fraction[i, a * wq + b] = known / inside
    admitted = fraction >= cfg.valid_threshold - FRACTION_TOLERANCE
    for i in range(n):
        if admitted[i].any():
            continue
        if cfg.fallback is Fallback.NEAREST_VALID:
            admitted[i] = fraction[i] >= fraction[i].max() - FRACTION_TOLERANCE
        else:
            admitted[i] = True

    for i in range(n):
        queries, candidates = rows(q_small[i]), rows(p_small[i])
        for qi, qv in enumerate(queries):
            best, arg = -np.inf, 0
            for cj, cv in enumerate(candidates):
                score = float(qv @ cv) if admitted[i, cj] else MASKED_SIMILARITY
                if score > best:
                    best, arg = score, cj
            index_map[i, qi] = arg
            ratio_small[i, qi] = best

    swap, half = cfg.swap_patch, cfg.swap_patch // 2
    texture = np.zeros_like(p)
    counts = np.zeros((h, w))
    ratio = np.zeros((n, 1, h, w))
    for i in range(n):
        counts[:] = 0
        for y in range(h):
            for x in range(w):
                cell = (y // f) * wq + x // f
                winner = index_map[i, cell]
                sy = winner // wq * f + y % f
                sx = winner % wq * f + x % f
                ratio[i, 0, y, x] = ratio_small[i, cell]
                patch = _patch_at(p[i], sy - half, sx - half, swap)
                for dy in range(swap):
                    for dx in range(swap):
                        ty, tx = y + dy - half, x + dx - half
                        if 0 <= ty < h and 0 <= tx < w:
                            texture[i, :, ty, tx] += patch[:, dy, dx]
                            counts[ty, tx] += 1
        texture[i] /= counts
    return index_map, ratio, texture

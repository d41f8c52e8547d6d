"""Free-form masks, procedural textures, PNG I/O and manifests.

Convention: M = 1 marks the hole everywhere.
"""
import enum
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from .exception import ConfigError, DataError, DimensionError
from .logger_config import get_logger
from .tensor import Tensor

logger = get_logger()

SUPPORTED_MODES = ("RGB", "RGBA", "L", "P")


@dataclass
class MaskSpec:
    size: int = 64
    min_ratio: float = 0.10
    max_ratio: float = 0.40
    max_strokes: int = 4
    min_vertices: int = 4
    max_vertices: int = 8
    min_width: float = 0.06
    max_width: float = 0.16
    max_length: float = 0.4
    mean_angle: float = 2 * math.pi / 15
    angle_jitter: float = 2 * math.pi / 5
    seed: int = 0
    max_attempts: int = 100

    def violations(self):
        problems = []
        if not 0 < self.min_ratio < self.max_ratio < 1:
            problems.append(f"mask ratios must satisfy 0 < min < max < 1, got {self.min_ratio}, {self.max_ratio}")
        if self.size < 1:
            problems.append(f"mask size must be >= 1, got {self.size}")
        if self.max_strokes < 1 or not 1 <= self.min_vertices <= self.max_vertices:
            problems.append("mask needs max_strokes >= 1 and 1 <= min_vertices <= max_vertices")
        if not 0 < self.min_width <= self.max_width:
            problems.append(f"brush widths must satisfy 0 < min <= max, got {self.min_width}, {self.max_width}")
        return problems


def _stroke_mask(rng: np.random.Generator, spec: MaskSpec) -> np.ndarray:
    size = spec.size
    canvas = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(canvas)
    for _ in range(int(rng.integers(1, spec.max_strokes + 1))):
        width = rng.uniform(spec.min_width, spec.max_width) * size
        radius = width / 2
        x, y = rng.uniform(0, size, 2)
        points = [(x, y)]
        for i in range(int(rng.integers(spec.min_vertices, spec.max_vertices + 1))):
            angle = rng.uniform(spec.mean_angle - spec.angle_jitter, spec.mean_angle + spec.angle_jitter)
            if i % 2 == 0:
                angle = 2 * math.pi - angle
            length = rng.uniform(0, spec.max_length * size)
            x = float(np.clip(x + length * math.cos(angle), 0, size - 1))
            y = float(np.clip(y + length * math.sin(angle), 0, size - 1))
            points.append((x, y))
        draw.line(points, fill=255, width=max(1, int(round(width))))
        for px, py in points:
            draw.ellipse((px - radius, py - radius, px + radius, py + radius), fill=255)
    return (np.asarray(canvas) > 0).astype(np.float32)


def generate_mask(spec: MaskSpec) -> Tensor:
    """Brush-stroke hole mask [1, 1, size, size] whose hole ratio lies in [min_ratio, max_ratio]."""
    problems = spec.violations()
    if problems:
        raise ConfigError(problems)
    rng = np.random.default_rng(spec.seed)
    for attempt in range(spec.max_attempts):
        mask = _stroke_mask(rng, spec)
        ratio = float(mask.mean())
        if spec.min_ratio <= ratio <= spec.max_ratio:
            if attempt:
                logger.trace(f"mask seed {spec.seed}: accepted ratio {ratio:.3f} after {attempt} rejections")
            return Tensor(mask[None, None])
    raise DataError(
        f"no mask within hole ratio [{spec.min_ratio}, {spec.max_ratio}] after {spec.max_attempts} attempts "
        f"(seed {spec.seed}); widen the stroke settings"
    )


class TextureFamily(enum.Enum):
    STRIPES = "stripes"
    CHECKER = "checker"
    BLOBS = "blobs"
    GRADIENT_NOISE = "gradient_noise"


@dataclass
class TextureSpec:
    family: TextureFamily = TextureFamily.STRIPES
    size: int = 64
    min_period: float = 6.0
    max_period: float = 16.0
    period: float | None = None
    angle: float | None = None
    phase: float | None = None
    octaves: int = 4
    tint: bool = False
    seed: int = 0


def _value_noise(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    grid = rng.uniform(-1.0, 1.0, (cells + 1, cells + 1)).astype(np.float32)
    return np.asarray(Image.fromarray(grid).resize((size, size), Image.Resampling.BILINEAR))


def _field(spec: TextureSpec, rng: np.random.Generator) -> np.ndarray:
    size = spec.size
    period = spec.period if spec.period is not None else rng.uniform(spec.min_period, spec.max_period)
    ys, xs = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing="ij")
    if spec.family is TextureFamily.STRIPES:
        angle = spec.angle if spec.angle is not None else rng.uniform(0, math.pi)
        phase = spec.phase if spec.phase is not None else rng.uniform(0, 2 * math.pi)
        wave = np.sin(2 * math.pi * (ys * math.cos(angle) + xs * math.sin(angle)) / period + phase)
        return np.where(wave >= 0, 1.0, -1.0)
    if spec.family is TextureFamily.CHECKER:
        cell = max(period / 2.0, 1.0)
        parity = (np.floor(ys / cell) + np.floor(xs / cell)) % 2
        return np.where(parity == 0, 1.0, -1.0)
    cells = max(int(round(size / period)), 1)
    if spec.family is TextureFamily.BLOBS:
        return np.tanh(3.0 * _value_noise(rng, size, cells))
    total = np.zeros((size, size))
    amplitude, norm = 1.0, 0.0
    for _ in range(spec.octaves):
        total += amplitude * _value_noise(rng, size, cells)
        norm += amplitude
        amplitude *= 0.5
        cells = min(cells * 2, size)
    return total / norm


def generate_texture(spec: TextureSpec) -> Tensor:
    """Stationary texture [1, 3, size, size] in [−1, 1]."""
    rng = np.random.default_rng(spec.seed)
    field = _field(spec, rng)
    if spec.tint:
        low, high = rng.uniform(-1.0, 1.0, (2, 3))
        image = low[:, None, None] + (field[None] + 1.0) * 0.5 * (high - low)[:, None, None]
    else:
        image = np.repeat(field[None], 3, axis=0)
    return Tensor(np.clip(image, -1.0, 1.0)[None])


def quantize(values: np.ndarray) -> np.ndarray:
    """[−1, 1] floats to 8-bit codes with round-half-away-from-zero."""
    scaled = (np.asarray(values, dtype=np.float64) + 1.0) * 127.5
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def dequantize(codes: np.ndarray) -> np.ndarray:
    return (codes.astype(np.float32) / np.float32(127.5) - np.float32(1.0)).astype(np.float32)


def _open(path) -> Image.Image:
    path = Path(path)
    try:
        image = Image.open(path)
        image.load()
    except (OSError, UnidentifiedImageError) as e:
        raise DataError(f"cannot read image {path}: {e}") from None
    if image.mode not in SUPPORTED_MODES:
        raise DataError(f"unsupported image mode {image.mode} in {path}; expected 8-bit RGB or grayscale")
    return image


def load_image(path) -> Tensor:
    """8-bit raster file to a [1, 3, H, W] tensor in [−1, 1]."""
    codes = np.asarray(_open(path).convert("RGB"))
    return Tensor(dequantize(codes).transpose(2, 0, 1)[None])


def _image_array(x) -> np.ndarray:
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if data.ndim == 4:
        if data.shape[0] != 1:
            raise DimensionError(f"save expects a single image, got batch of {data.shape[0]}")
        data = data[0]
    return data


def save_image(path, x) -> Path:
    data = _image_array(x)
    if data.ndim != 3 or data.shape[0] != 3:
        raise DimensionError(f"save_image expects 3×H×W, got {data.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(quantize(data).transpose(1, 2, 0)).save(path, format="PNG")
    return path


def load_mask(path) -> Tensor:
    codes = np.asarray(_open(path).convert("L"))
    return Tensor((codes >= 128).astype(np.float32)[None, None])


def save_mask(path, mask) -> Path:
    data = _image_array(mask)
    if data.ndim != 3 or data.shape[0] != 1:
        raise DimensionError(f"save_mask expects 1×H×W, got {data.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(data[0] > 0.5, 255, 0).astype(np.uint8)).save(path, format="PNG")
    return path


@dataclass
class ManifestEntry:
    path: Path
    seed: int
    family: str


def write_manifest(path, entries) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as handle:
        for entry in entries:
            relative = Path(os.path.relpath(entry.path, path.parent))
            handle.write(f"{relative.as_posix()}\t{entry.seed}\t{entry.family}\n")
    return path


def read_manifest(path):
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from None
    entries = []
    for number, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{number}: expected 'path<TAB>seed<TAB>family', got {line!r}")
        try:
            seed = int(parts[1])
        except ValueError:
            raise DataError(f"{path}:{number}: seed {parts[1]!r} is not an integer") from None
        entries.append(ManifestEntry(path.parent / parts[0], seed, parts[2]))
    return entries


def write_masks(out_dir, count: int, spec: MaskSpec):
    """Masks ``mask_00000.png``… plus ``manifest.tsv``; mask k uses seed ``spec.seed + k``."""
    out_dir = Path(out_dir)
    entries = []
    for k in range(count):
        seed = spec.seed + k
        mask = generate_mask(replace(spec, seed=seed))
        entries.append(ManifestEntry(save_mask(out_dir / f"mask_{k:05d}.png", mask), seed, "mask"))
    write_manifest(out_dir / "manifest.tsv", entries)
    return entries


def build_dataset(out_dir, count: int, size: int, seed: int, families=tuple(TextureFamily)):
    """Render ``count`` tinted textures and their manifest into ``out_dir``."""
    out_dir = Path(out_dir)
    families = [TextureFamily(f) for f in families]
    entries = []
    for k in range(count):
        item_seed = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        family = families[k % len(families)]
        texture = generate_texture(TextureSpec(family=family, size=size, tint=True, seed=item_seed))
        path = save_image(out_dir / "images" / f"{family.value}_{k:05d}.png", texture)
        entries.append(ManifestEntry(path, item_seed, family.value))
    write_manifest(out_dir / "manifest.tsv", entries)
    logger.info(f"wrote {count} textures ({', '.join(f.value for f in families)}) to {out_dir}")
    return entries


@dataclass
class Batch:
    gt: Tensor
    mask: Tensor
    step: int = 0

    @property
    def z(self) -> Tensor:
        return Tensor(self.gt.data * (1.0 - self.mask.data))


def make_batch(seed: int, step: int, batch_size: int, size: int, families=tuple(TextureFamily),
               mask_spec: MaskSpec | None = None, bank=None) -> Batch:
    """Batch as a pure function of ``(seed, step)``; item i draws from ``SeedSequence([seed, step, i])``.

    ``bank`` is an optional list of [3, H, W] images (e.g. loaded from a manifest) used instead of
    procedural textures.
    """
    mask_spec = mask_spec or MaskSpec(size=size)
    families = [TextureFamily(f) for f in families]
    images, masks = [], []
    for i in range(batch_size):
        texture_seed, mask_seed, pick = (int(s) for s in np.random.SeedSequence([seed, step, i]).generate_state(3))
        if bank:
            image = bank[pick % len(bank)]
        else:
            family = families[pick % len(families)]
            image = generate_texture(TextureSpec(family=family, size=size, tint=True, seed=texture_seed)).data[0]
        images.append(image)
        masks.append(generate_mask(replace(mask_spec, seed=mask_seed)).data[0])
    return Batch(Tensor(np.stack(images)), Tensor(np.stack(masks)), step)


def load_bank(manifest, size: int):
    bank = []
    for entry in read_manifest(manifest):
        image = load_image(entry.path).data[0]
        if image.shape[1:] != (size, size):
            raise DataError(f"{entry.path}: image is {image.shape[1]}×{image.shape[2]}, model expects {size}×{size}")
        bank.append(image)
    if not bank:
        raise DataError(f"manifest {manifest} lists no images")
    return bank

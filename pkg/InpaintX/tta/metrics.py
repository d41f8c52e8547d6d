"""Evaluation metrics that need no pre-trained network: plain/hole L1 and multi-scale SSIM."""
import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .exception import DimensionError
from .logger_config import get_logger
from .tensor import Tensor

logger = get_logger()

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1 = 0.01
K2 = 0.03
DATA_RANGE = 1.0


def _array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float32)


def to_unit_range(x) -> np.ndarray:
    """Map images from [−1, 1] to [0, 1]."""
    return (_array(x) + 1.0) * 0.5


def l1_metric(gt, out, M):
    """Mean absolute difference over all pixels and over hole pixels (0 when there is no hole)."""
    gt, out, mask = _array(gt), _array(out), _array(M)
    if gt.shape != out.shape:
        raise DimensionError(f"l1_metric: images {gt.shape} and {out.shape} differ")
    diff = np.abs(gt.astype(np.float64) - out)
    full = float(diff.mean())
    hole = np.broadcast_to(mask, diff.shape)
    area = float(hole.sum())
    return full, float((diff * hole).sum() / area) if area > 0 else 0.0


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def scale_count(height: int, width: int, window: int = WINDOW_SIZE, max_scales: int = len(MS_SSIM_WEIGHTS)) -> int:
    scales = 0
    side = min(height, width)
    while scales < max_scales and side >= window:
        scales += 1
        side //= 2
    return scales


def _ssim_terms(a: np.ndarray, b: np.ndarray, window: Tensor):
    """Per-image mean SSIM and mean contrast-structure term for [N, C, H, W] inputs in [0, 1]."""
    n, c, h, w = a.shape
    c1 = (K1 * DATA_RANGE) ** 2
    c2 = (K2 * DATA_RANGE) ** 2

    def blur(x):
        return T.conv2d(Tensor(x.reshape(n * c, 1, h, w)), window).data.astype(np.float64)

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    cs_map = (2 * cov + c2) / (var_a + var_b + c2)
    l_map = (2 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    ssim = (l_map * cs_map).reshape(n, -1).mean(axis=1)
    cs = cs_map.reshape(n, -1).mean(axis=1)
    return ssim, cs


def _halve(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    x = x[:, :, : h - h % 2, : w - w % 2]
    return T.avg_pool(Tensor(x), 2).data


def ms_ssim_per_image(a, b) -> np.ndarray:
    """MS-SSIM of each image pair; inputs in [0, 1], shape [N, C, H, W]."""
    a, b = _array(a), _array(b)
    if a.shape != b.shape or a.ndim != 4:
        raise DimensionError(f"ms_ssim: images {a.shape} and {b.shape} must share an N×C×H×W shape")
    scales = scale_count(a.shape[2], a.shape[3])
    if scales == 0:
        raise DimensionError(f"ms_ssim: {a.shape[2]}×{a.shape[3]} is smaller than the {WINDOW_SIZE}px window")
    if scales < len(MS_SSIM_WEIGHTS):
        logger.warning(f"ms_ssim: {a.shape[2]}×{a.shape[3]} fits only {scales} of {len(MS_SSIM_WEIGHTS)} scales")
    weights = np.asarray(MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    window = Tensor(gaussian_window()[None, None])

    result = np.ones(a.shape[0])
    for scale in range(scales):
        ssim, cs = _ssim_terms(a, b, window)
        term = ssim if scale == scales - 1 else cs
        result *= np.maximum(term, 0.0) ** weights[scale]
        if scale < scales - 1:
            a, b = _halve(a), _halve(b)
    return result


def ms_ssim(a, b) -> float:
    return float(ms_ssim_per_image(a, b).mean())


@dataclass
class MetricRow:
    name: str
    l1_full: float
    l1_hole: float
    ms_ssim: float


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)

    COLUMNS = ("name", "l1_full", "l1_hole", "ms_ssim")

    def _column(self, key) -> np.ndarray:
        return np.asarray([getattr(row, key) for row in self.rows], dtype=np.float64)

    def mean(self) -> MetricRow:
        return MetricRow("mean", *(float(self._column(k).mean()) for k in self.COLUMNS[1:]))

    def std(self) -> MetricRow:
        return MetricRow("std", *(float(self._column(k).std()) for k in self.COLUMNS[1:]))

    @property
    def l1_full(self) -> float:
        return self.mean().l1_full

    @property
    def l1_hole(self) -> float:
        return self.mean().l1_hole

    @property
    def ms_ssim(self) -> float:
        return self.mean().ms_ssim

    def extend(self, other: "MetricReport"):
        self.rows.extend(other.rows)

    def table_rows(self):
        rows = self.rows + ([self.mean(), self.std()] if self.rows else [])
        return [tuple(asdict(row).values()) for row in rows]

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(self.COLUMNS)
            for row in self.table_rows():
                writer.writerow([row[0], *(repr(float(v)) for v in row[1:])])
        return path


def evaluate(gt, out, M, names=None) -> MetricReport:
    """Per-image metrics for images in [−1, 1]; both are mapped to [0, 1] first."""
    gt, out, mask = to_unit_range(gt), to_unit_range(out), _array(M)
    n = gt.shape[0]
    names = names or [f"image{i:04d}" for i in range(n)]
    scores = ms_ssim_per_image(gt, out)
    rows = []
    for i in range(n):
        full, hole = l1_metric(gt[i:i + 1], out[i:i + 1], mask[i:i + 1])
        rows.append(MetricRow(str(names[i]), full, hole, float(scores[i])))
    return MetricReport(rows)

"""
Full-reference image quality metrics.

Images are float arrays in [0, 1], either H x W or H x W x 3. SSIM is
computed on BT.601 luma with an 11x11 Gaussian window (sigma 1.5),
K1 = 0.01, K2 = 0.03 and dynamic range 1, averaged over all window
positions that fit inside the image.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .data import list_images, read_png
from .errors import DataError, DimensionError

logger = logging.getLogger(__name__)

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"image shapes differ: {x.shape} vs {y.shape}")
    return x, y


def psnr(x, y) -> float:
    """``10 log10(1 / MSE)`` in dB; ``inf`` for identical images."""
    x, y = _check_pair(x, y)
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(1.0 / mse))


def luma(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ LUMA_WEIGHTS
    if img.ndim == 3 and img.shape[2] == 1:
        return img[:, :, 0]
    raise DimensionError(f"expected H x W or H x W x 3 image, got {img.shape}")


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian taps; the 2-D window is their outer product."""
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, taps):
    h = len(taps) // 2
    out = ndimage.correlate1d(img, taps, axis=0, mode="constant")
    out = ndimage.correlate1d(out, taps, axis=1, mode="constant")
    return out[h:img.shape[0] - h, h:img.shape[1] - h]


def ssim_map(x, y) -> np.ndarray:
    x, y = _check_pair(x, y)
    x, y = luma(x), luma(y)
    if min(x.shape) < SSIM_WINDOW:
        raise DimensionError(f"image {x.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    taps = gaussian_window()
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    mu_x, mu_y = _filter_valid(x, taps), _filter_valid(y, taps)
    sxx = _filter_valid(x * x, taps) - mu_x * mu_x
    syy = _filter_valid(y * y, taps) - mu_y * mu_y
    sxy = _filter_valid(x * y, taps) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return num / den


def ssim(x, y) -> float:
    """Mean structural similarity of luma; 1.0 for identical images."""
    return float(np.mean(ssim_map(x, y)))


# ---------------------------------------------------------------------------
# Directory evaluation
# ---------------------------------------------------------------------------

@dataclass
class ImageScore:
    id: str
    psnr: float
    ssim: float
    lpips: Optional[float] = None

    @property
    def psnr_capped(self) -> float:
        return min(self.psnr, PSNR_CAP)


@dataclass
class MetricsReport:
    per_image: List[ImageScore] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    errors: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        if not self.per_image:
            return math.nan
        return float(np.mean([s.psnr_capped for s in self.per_image]))

    @property
    def mean_ssim(self) -> float:
        if not self.per_image:
            return math.nan
        return float(np.mean([s.ssim for s in self.per_image]))

    @property
    def empty(self) -> bool:
        return not self.per_image

    CSV_FIELDS = ("id", "psnr_db", "ssim", "lpips")

    def to_text(self) -> str:
        lines = [
            "# lumina evaluation report",
            f"# ssim: luma (BT.601), gaussian window {SSIM_WINDOW} sigma {SSIM_SIGMA}; "
            f"psnr capped at {PSNR_CAP:g} dB in means",
            "id\tpsnr_db\tssim",
        ]
        for s in self.per_image:
            lines.append(f"{s.id}\t{s.psnr:.4f}\t{s.ssim:.6f}")
        lines.append(f"mean\t{self.mean_psnr:.4f}\t{self.mean_ssim:.6f}")
        for w in self.warnings:
            lines.append(f"warning\t{w}")
        for name, msg in self.errors:
            lines.append(f"error\t{name}\t{msg}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> Tuple[Path, Path]:
        """Write ``<path>.txt`` and ``<path>.csv``; the CSV has one record per
        image with columns id, psnr_db, ssim, lpips (empty unless merged)."""
        path = Path(path)
        txt, csv_path = path.with_suffix(".txt"), path.with_suffix(".csv")
        txt.write_text(self.to_text())
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.CSV_FIELDS)
            for s in self.per_image:
                writer.writerow([s.id, repr(s.psnr), repr(s.ssim), "" if s.lpips is None else repr(s.lpips)])
        return txt, csv_path


def evaluate_dir(enhanced_dir, reference_dir) -> MetricsReport:
    """Score every enhanced image against the same-stem reference.

    Unmatched files become warnings, unreadable or mis-sized ones per-file
    errors; neither counts towards the means.
    """
    report = MetricsReport()
    enh = {p.stem: p for p in list_images(enhanced_dir)}
    ref = {p.stem: p for p in list_images(reference_dir)}
    for stem in sorted(set(enh) ^ set(ref)):
        side = "reference" if stem in enh else "enhanced"
        report.warnings.append(f"{stem}: no matching {side} image")
    common = sorted(set(enh) & set(ref))
    if not common:
        report.warnings.append("no image names in common")
    for stem in common:
        try:
            a, b = read_png(enh[stem]), read_png(ref[stem])
            report.per_image.append(ImageScore(stem, psnr(a, b), ssim(a, b)))
        except (DataError, DimensionError) as exc:
            report.errors.append((stem, str(exc)))
    for w in report.warnings:
        logger.warning(w)
    return report

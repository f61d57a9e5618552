"""
Image I/O and paired-exposure data.

Images are handled as H x W x 3 float arrays in [0, 1] at the file boundary
and as 1 x 3 x H x W tensors inside the model. PNG files are 8-bit RGB, so
a write/read round trip quantizes to multiples of 1/255.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .autodiff import Tensor
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)


def read_png(path) -> np.ndarray:
    """Decode an image file to an H x W x 3 float64 array in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return arr.astype(np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, img: np.ndarray):
    """Encode an H x W x 3 (or H x W) array in [0, 1] as 8-bit PNG.
    Metadata is left out so equal pixels give equal bytes."""
    arr = to_uint8(img)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG", optimize=False)


def to_tensor(img: np.ndarray, dtype=np.float32) -> Tensor:
    """H x W x C array -> 1 x C x H x W tensor."""
    return Tensor(np.ascontiguousarray(img.transpose(2, 0, 1)[None]).astype(dtype))


def to_image(t) -> np.ndarray:
    """1 x C x H x W tensor -> H x W x C array; one channel is replicated to three."""
    arr = t.data if isinstance(t, Tensor) else np.asarray(t)
    img = arr[0].transpose(1, 2, 0)
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    return img


@dataclass
class LowLightPair:
    """Two registered exposures of one scene, each 1 x 3 x H x W in [0, 1]."""
    I1: np.ndarray
    I2: np.ndarray
    id: str = ""

    def __post_init__(self):
        if self.I1.shape != self.I2.shape:
            raise DataError(f"pair {self.id!r}: exposure shapes differ {self.I1.shape} vs {self.I2.shape}")

    @property
    def height(self):
        return self.I1.shape[2]

    @property
    def width(self):
        return self.I1.shape[3]


def _as_nchw(img: np.ndarray, dtype=np.float32) -> np.ndarray:
    return np.ascontiguousarray(img.transpose(2, 0, 1)[None]).astype(dtype)


def load_pairs(root, dtype=np.float32) -> List[LowLightPair]:
    """Read ``root/<pair_id>/{a,b}.png`` into pairs sorted by directory name.

    Directories missing an image or with mismatched sizes are skipped with
    a warning. Raises :class:`DataError` when nothing valid is found.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"pair root {root} is not a directory")
    pairs = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        a, b = sub / "a.png", sub / "b.png"
        if not (a.is_file() and b.is_file()):
            logger.warning("skipping %s: expected a.png and b.png", sub)
            continue
        try:
            ia, ib = read_png(a), read_png(b)
        except DataError as exc:
            logger.warning("skipping %s: %s", sub, exc)
            continue
        if ia.shape != ib.shape:
            logger.warning("skipping %s: size mismatch %s vs %s", sub, ia.shape[:2], ib.shape[:2])
            continue
        pairs.append(LowLightPair(_as_nchw(ia, dtype), _as_nchw(ib, dtype), sub.name))
    if not pairs:
        raise DataError(f"no valid pairs under {root}")
    return pairs


def save_pairs(pairs: Sequence[LowLightPair], root):
    root = Path(root)
    for p in pairs:
        d = root / p.id
        d.mkdir(parents=True, exist_ok=True)
        write_png(d / "a.png", p.I1[0].transpose(1, 2, 0))
        write_png(d / "b.png", p.I2[0].transpose(1, 2, 0))


def base_scenes(count: int, size: int = 96, seed: int = 0) -> List[np.ndarray]:
    """Procedural well-lit scenes (H x W x 3 in [0.05, 1]): colour gradients,
    flat rectangles and discs, and fine texture."""
    if size < 4:
        raise ConfigError(f"scene size {size} is too small")
    rng = np.random.default_rng(seed)
    lo = min(8, size // 4)  # smallest rectangle side
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    scenes = []
    for _ in range(count):
        c0, c1 = rng.uniform(0.2, 1.0, 3), rng.uniform(0.2, 1.0, 3)
        angle = rng.uniform(0, 2 * np.pi)
        t = (np.cos(angle) * xx + np.sin(angle) * yy)
        t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
        img = c0 * (1 - t[..., None]) + c1 * t[..., None]
        for _ in range(rng.integers(3, 7)):
            colour = rng.uniform(0.05, 1.0, 3)
            if rng.random() < 0.5:
                y0, x0 = rng.integers(0, size - lo, 2)
                h, w = rng.integers(lo, max(lo + 1, size // 2), 2)
                img[y0:y0 + h, x0:x0 + w] = colour
            else:
                cy, cx = rng.uniform(0, 1, 2)
                r = rng.uniform(0.08, 0.25)
                img[(yy - cy) ** 2 + (xx - cx) ** 2 < r * r] = colour
        freq = rng.uniform(10, 30)
        img = img * (0.9 + 0.1 * np.sin(freq * np.pi * xx) * np.sin(freq * np.pi * yy))[..., None]
        scenes.append(np.clip(img, 0.05, 1.0))
    return scenes


@dataclass(frozen=True)
class SynthSettings:
    field_res: int = 4
    gamma_range: tuple = (1.5, 4.0)
    illum_range: tuple = (0.05, 0.6)
    noise_sigma: float = 0.02
    shared_field: bool = False  # both exposures under one field (degenerate pairs)


def illumination_field(shape, rng: np.random.Generator, settings: SynthSettings = SynthSettings()) -> np.ndarray:
    """Smooth H x W field in ``settings.illum_range``: a coarse random grid,
    bilinearly upsampled, raised to a random gamma."""
    H, W = shape
    coarse = rng.uniform(0.0, 1.0, size=(settings.field_res, settings.field_res))
    grid = np.meshgrid(np.linspace(0, settings.field_res - 1, H),
                       np.linspace(0, settings.field_res - 1, W), indexing="ij")
    field = ndimage.map_coordinates(coarse, grid, order=1, mode="nearest")
    gamma = rng.uniform(*settings.gamma_range)
    lo, hi = settings.illum_range
    return lo + (hi - lo) * np.clip(field, 0.0, 1.0) ** gamma


def synth_pair(base: np.ndarray, rng: np.random.Generator, pair_id: str = "",
               settings: SynthSettings = SynthSettings(), dtype=np.float32):
    """One pair from ``base`` plus the two illumination fields used."""
    H, W = base.shape[:2]
    fields, images = [], []
    shared = illumination_field((H, W), rng, settings) if settings.shared_field else None
    for _ in range(2):
        f = shared if shared is not None else illumination_field((H, W), rng, settings)
        noise = rng.normal(0.0, settings.noise_sigma, size=base.shape) if settings.noise_sigma > 0 else 0.0
        fields.append(f)
        images.append(np.clip(base * f[..., None] + noise, 0.0, 1.0))
    pair = LowLightPair(_as_nchw(images[0], dtype), _as_nchw(images[1], dtype), pair_id)
    return pair, fields[0], fields[1]


def synth_pairs(base_images: Sequence[np.ndarray], count: int, seed: int = 0,
                crop: Optional[int] = None, settings: SynthSettings = SynthSettings(),
                dtype=np.float32) -> List[LowLightPair]:
    """``count`` pairs cycling through ``base_images``; bases smaller than
    ``crop`` are skipped with a warning."""
    usable = []
    for n, b in enumerate(base_images):
        if crop is not None and min(b.shape[:2]) < crop:
            logger.warning("base image %d (%dx%d) is smaller than crop %d, skipped",
                           n, b.shape[0], b.shape[1], crop)
            continue
        usable.append(b)
    if not usable:
        raise DataError("no base image is large enough for the requested crop")
    rng = np.random.default_rng(seed)
    width = max(4, len(str(count - 1)))
    return [synth_pair(usable[k % len(usable)], rng, f"pair{k:0{width}d}", settings, dtype)[0]
            for k in range(count)]


def random_crop(pair: LowLightPair, crop: int, rng: np.random.Generator) -> LowLightPair:
    """The same ``crop`` x ``crop`` window cut from both exposures."""
    H, W = pair.height, pair.width
    if crop < 1 or crop > min(H, W):
        raise ConfigError(f"crop {crop} does not fit pair {pair.id!r} of size {H}x{W}")
    y = int(rng.integers(0, H - crop + 1))
    x = int(rng.integers(0, W - crop + 1))
    win = (slice(None), slice(None), slice(y, y + crop), slice(x, x + crop))
    return LowLightPair(pair.I1[win].copy(), pair.I2[win].copy(), pair.id)


def list_images(path) -> List[Path]:
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise DataError(f"{path} is neither a file nor a directory")
    exts = {".png"}
    return sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in exts)


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path

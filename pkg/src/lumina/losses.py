"""Training losses for paired low-light images.

Squared norms are reduced with the MEAN over elements so the weights do not
depend on crop size.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError
from .networks import CLAMP_FLOOR


@dataclass(frozen=True)
class LossWeights:
    w0: float = 5.0   # projection
    w1: float = 1.0   # consistency
    w2: float = 1.0   # retinex
    w3: float = 0.1   # perceptual

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"loss weight {f.name} must be >= 0, got {getattr(self, f.name)}")

    @classmethod
    def parse(cls, text: str) -> "LossWeights":
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 4:
            raise ConfigError(f"expected four comma-separated weights, got {text!r}")
        try:
            return cls(*map(float, parts))
        except ValueError:
            raise ConfigError(f"weights must be numbers, got {text!r}") from None

    def as_tuple(self):
        return (self.w0, self.w1, self.w2, self.w3)

    def __str__(self):
        return ",".join(repr(w) for w in self.as_tuple())


@dataclass
class RetinexLossBreakdown:
    reconstruction: Tensor
    reflectance_fit: Tensor
    illumination_anchor: Tensor
    smoothness: Tensor

    @property
    def total(self) -> Tensor:
        return self.reconstruction + self.reflectance_fit + self.illumination_anchor + self.smoothness

    def values(self):
        return (self.reconstruction.item(), self.reflectance_fit.item(),
                self.illumination_anchor.item(), self.smoothness.item())


def _same_shape(a: Tensor, b: Tensor, name: str):
    if a.shape != b.shape:
        raise DimensionError(f"{name}: shapes differ, {a.shape} vs {b.shape}")


def mse(a: Tensor, b: Tensor) -> Tensor:
    d = a - b
    return ad.mean(d * d)


def projection_loss(I: Tensor, i: Tensor) -> Tensor:
    _same_shape(I, i, "projection_loss")
    return mse(I, i)


def consistency_loss(R_f1: Tensor, R_f2: Tensor) -> Tensor:
    _same_shape(R_f1, R_f2, "consistency_loss")
    return mse(R_f1, R_f2)


def initial_illumination(i: Tensor) -> Tensor:
    """Per-pixel maximum over colour channels."""
    return ad.channel_max(i)


def smoothness(L: Tensor) -> Tensor:
    """Mean absolute forward difference, horizontal plus vertical."""
    return ad.mean(ad.tabs(ad.forward_diff(L, 3))) + ad.mean(ad.tabs(ad.forward_diff(L, 2)))


def retinex_loss(i: Tensor, R_f: Tensor, L: Tensor, L_f: Tensor,
                 clamp_floor: float = CLAMP_FLOOR) -> RetinexLossBreakdown:
    """Reconstruction, stop-gradient reflectance fit, illumination anchor and
    smoothness terms.

    ``L`` is the raw illumination (anchor and smoothness); ``L_f`` the refined
    one (reconstruction and the frozen divisor). Both are floored at
    ``clamp_floor`` first.
    """
    _same_shape(i, R_f, "retinex_loss")
    for t, name in ((L, "L"), (L_f, "L_f")):
        if t.ndim != 4 or t.shape[1] != 1 or t.shape[0] != i.shape[0] or t.shape[2:] != i.shape[2:]:
            raise DimensionError(f"retinex_loss: {name} must be N x 1 x H x W matching i, got {t.shape}")
    L_c = ad.clamp(L, clamp_floor, 1.0)
    L_fc = ad.clamp(L_f, clamp_floor, 1.0)
    reconstruction = mse(R_f * L_fc, i)
    target = ad.clamp(i / ad.stop_gradient(L_fc), 0.0, 1.0)
    reflectance_fit = mse(R_f, target)
    anchor = mse(L_c, ad.stop_gradient(initial_illumination(i)))
    return RetinexLossBreakdown(reconstruction, reflectance_fit, anchor, smoothness(L_c))


class FeatureExtractor:
    """Frozen random conv stack 3 -> 16 -> 32 -> 64, 3x3 kernels, relu,
    each layer downsampling by 2.

    Weights depend only on ``seed`` and never receive gradients. Each
    stride-2 layer is a same-size convolution followed by taking every
    second row and column, which handles even sizes.
    """

    WIDTHS = (3, 16, 32, 64)

    def __init__(self, seed: int = 1234, dtype=np.float32):
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers = []
        for ci, co in zip(self.WIDTHS[:-1], self.WIDTHS[1:]):
            bound = 1.0 / np.sqrt(ci * 9)
            w = rng.uniform(-bound, bound, size=(co, ci, 3, 3)).astype(dtype)
            b = rng.uniform(-bound, bound, size=(co,)).astype(dtype)
            self.layers.append((Tensor(w), Tensor(b)))

    def parameters(self):
        return [t for layer in self.layers for t in layer]

    def astype(self, dtype) -> "FeatureExtractor":
        out = FeatureExtractor.__new__(FeatureExtractor)
        out.seed = self.seed
        out.layers = [(Tensor(w.data.astype(dtype)), Tensor(b.data.astype(dtype))) for w, b in self.layers]
        return out

    def __call__(self, x: Tensor) -> Tensor:
        for w, b in self.layers:
            x = ad.relu(ad.conv2d(x, w, b, stride=1, padding=1))[:, :, ::2, ::2]
        return x


def perceptual_loss(phi: FeatureExtractor, I_f1: Tensor, I_f2: Tensor) -> Tensor:
    _same_shape(I_f1, I_f2, "perceptual_loss")
    return mse(phi(I_f1), phi(I_f2))


def combined_loss(weights: LossWeights, L_p, L_C, L_R, L_per):
    """``w0*L_p + w1*L_C + w2*L_R + w3*L_per``. Terms with zero weight are
    left out of the graph entirely."""
    total = None
    for w, term in zip(weights.as_tuple(), (L_p, L_C, L_R, L_per)):
        if w == 0:
            continue
        part = term * w
        total = part if total is None else total + part
    if total is None:
        ref = L_p if isinstance(L_p, Tensor) else None
        return ad.as_tensor(0.0, like=ref)
    return total

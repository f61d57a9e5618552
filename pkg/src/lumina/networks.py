"""
Projection, decomposition and refinement networks, plus the inference path.

Every block is a plain function of a :class:`ModelParams` table and input
tensors; the parameter layout is fixed by :data:`ARCHITECTURE`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError

CLAMP_FLOOR = 0.01
CG_REDUCTION = 4
CG_SPATIAL_KERNEL = 7
CE_WIDTH = 16
CE_BOTTLENECK = 8
LOGIT_EPS = 1e-3


def _conv(name, c_in, c_out, k):
    return [(f"{name}.weight", (c_out, c_in, k, k)), (f"{name}.bias", (c_out,))]


def _architecture():
    table = []
    for name, chans in (("n_net", (3, 32, 32, 3)),
                        ("r_net", (3, 32, 32, 32, 3)),
                        ("l_net", (3, 32, 32, 32, 1))):
        for n, (ci, co) in enumerate(zip(chans[:-1], chans[1:]), start=1):
            table += _conv(f"{name}.conv{n}", ci, co, 3)
    hidden = max(1, 3 // CG_REDUCTION)
    table += _conv("cg.ca_fc1", 3, hidden, 1)
    table += _conv("cg.ca_fc2", hidden, 3, 1)
    table += _conv("cg.sa_conv", 2, 1, CG_SPATIAL_KERNEL)
    table += _conv("cg.out_conv", 3, 3, 3)
    table += _conv("ce.conv1", 1, CE_WIDTH, 3)
    table += _conv("ce.conv2", CE_WIDTH, CE_WIDTH, 3)
    table += _conv("ce.fc1", CE_WIDTH, CE_BOTTLENECK, 1)
    table += _conv("ce.fc2", CE_BOTTLENECK, CE_WIDTH, 1)
    table += _conv("ce.head", CE_WIDTH, 1, 3)
    return table


#: Ordered (path, shape) pairs for every learnable tensor.
ARCHITECTURE = _architecture()
ARCHITECTURE_SHAPES = dict(ARCHITECTURE)


class ModelParams:
    """Named parameter tensors, initialized from ``rng_seed``.

    Weights are drawn uniformly from ``[-sqrt(6/fan_in), sqrt(6/fan_in)]``
    and biases from ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``, in architecture
    order, in float64, then cast to ``dtype``; the same seed always yields
    the same bits.
    """

    def __init__(self, tensors: Dict[str, Tensor], rng_seed: Optional[int] = None):
        self.tensors = dict(tensors)
        self.rng_seed = rng_seed

    @classmethod
    def init(cls, rng_seed: int = 0, dtype=np.float32) -> "ModelParams":
        rng = np.random.default_rng(rng_seed)
        tensors = {}
        for path, shape in ARCHITECTURE:
            wshape = ARCHITECTURE_SHAPES[path.rsplit(".", 1)[0] + ".weight"]
            fan_in = wshape[1] * wshape[2] * wshape[3]
            bound = np.sqrt(6.0 / fan_in) if path.endswith(".weight") else 1.0 / np.sqrt(fan_in)
            values = rng.uniform(-bound, bound, size=shape).astype(dtype)
            tensors[path] = Tensor(values, requires_grad=True)
        return cls(tensors, rng_seed)

    def __getitem__(self, path: str) -> Tensor:
        return self.tensors[path]

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({k: Tensor(v.data.astype(dtype), requires_grad=v.requires_grad)
                            for k, v in self.tensors.items()}, self.rng_seed)

    def frozen(self) -> "ModelParams":
        """Same values, no gradient tracking."""
        return ModelParams({k: Tensor(v.data) for k, v in self.tensors.items()}, self.rng_seed)

    def copy(self) -> "ModelParams":
        return ModelParams({k: Tensor(v.data.copy(), requires_grad=v.requires_grad)
                            for k, v in self.tensors.items()}, self.rng_seed)

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.size for t in self.tensors.values())


@dataclass
class Decomposition:
    """Intermediates of one branch. ``L`` and ``L_f`` are single-channel."""
    i: Tensor
    R: Tensor
    L: Tensor
    R_f: Tensor
    L_f: Tensor
    I_f: Optional[Tensor] = None


def _layer(params, name, x, padding=None, act=None):
    w = params[f"{name}.weight"]
    k = w.shape[-1]
    y = ad.conv2d(x, w, params[f"{name}.bias"], stride=1, padding=k // 2 if padding is None else padding)
    if act is not None:
        y = ad.activation(y, act)
    return y


def _stack(params, prefix, x, depth):
    for n in range(1, depth + 1):
        x = _layer(params, f"{prefix}.conv{n}", x, act="relu" if n < depth else "sigmoid")
    return x


def logit(x: Tensor) -> Tensor:
    x = ad.clamp(x, LOGIT_EPS, 1.0 - LOGIT_EPS)
    return ad.log(x) - ad.log(1.0 - x)


def _check_rgb(image: Tensor, name: str):
    if image.ndim != 4 or image.shape[1] != 3:
        raise DimensionError(f"{name}: expected N x 3 x H x W image, got shape {image.shape}")


def project(params: ModelParams, image: Tensor) -> Tensor:
    """Denoising projection ``i`` of the raw input, in (0, 1).

    The conv stack predicts a correction to the input's logit, so the
    sigmoid head starts close to the identity.
    """
    _check_rgb(image, "project")
    x = _layer(params, "n_net.conv1", image, act="relu")
    x = _layer(params, "n_net.conv2", x, act="relu")
    return ad.sigmoid(logit(image) + _layer(params, "n_net.conv3", x))


def decompose(params: ModelParams, i: Tensor):
    """Split ``i`` into reflectance (N x 3 x H x W) and illumination (N x 1 x H x W)."""
    _check_rgb(i, "decompose")
    return _stack(params, "r_net", i, 4), _stack(params, "l_net", i, 4)


def cg_attention(params: ModelParams, R: Tensor):
    """Channel weights (N x 3 x 1 x 1) and spatial map (N x 1 x H x W) for ``R``."""
    d = ad.global_avg_pool(R)
    h = _layer(params, "cg.ca_fc1", d, act="relu")
    w_c = _layer(params, "cg.ca_fc2", h, act="sigmoid")
    x = R * w_c
    desc = ad.concat([ad.channel_avg(x), ad.channel_max(x)], axis=1)
    w_s = _layer(params, "cg.sa_conv", desc, act="sigmoid")
    return w_c, w_s


def cg_refine(params: ModelParams, R: Tensor) -> Tensor:
    """Reflectance refinement: channel then spatial gating, a 3x3 conv on the
    gated map, added as a residual to ``logit(R)`` under a sigmoid."""
    _check_rgb(R, "cg_refine")
    w_c, w_s = cg_attention(params, R)
    gated = R * w_c * w_s
    return ad.sigmoid(logit(R) + _layer(params, "cg.out_conv", gated))


def ce_attention(params: ModelParams, L: Tensor):
    """Features of ``L`` and their channel weights (N x 16 x 1 x 1)."""
    if L.ndim != 4 or L.shape[1] != 1:
        raise DimensionError(f"ce_refine: expected N x 1 x H x W illumination, got {L.shape}")
    f = _layer(params, "ce.conv1", L, act="relu")
    f = _layer(params, "ce.conv2", f, act="relu")
    d = ad.adaptive_avg_pool(f, 1, 1)
    h = _layer(params, "ce.fc1", d, act="relu")
    return f, _layer(params, "ce.fc2", h, act="sigmoid")


def ce_refine(params: ModelParams, L: Tensor) -> Tensor:
    f, w = ce_attention(params, L)
    return _layer(params, "ce.head", f * w, act="sigmoid")


def check_lambda(lam: float):
    if not (0.0 < lam <= 1.0):
        raise ConfigError(f"correction factor lambda must lie in (0, 1], got {lam}")


def oec_correct(L_f: Tensor, R_f: Tensor, lam: float, clamp_floor: float = CLAMP_FLOOR,
                clip: bool = True) -> Tensor:
    """``L_f ** lam * R_f`` with ``L_f`` floored at ``clamp_floor``; clipped to
    [0, 1] unless ``clip`` is False."""
    check_lambda(lam)
    out = ad.power(ad.clamp(L_f, clamp_floor, 1.0), lam) * R_f
    return ad.clamp(out, 0.0, 1.0) if clip else out


ABLATABLE = frozenset({"oec", "cg", "ce"})


def forward_branch(params: ModelParams, image: Tensor, lam: float,
                   ablation: Iterable[str] = (), clamp_floor: float = CLAMP_FLOOR) -> Decomposition:
    """project -> decompose -> CG -> CE -> OEC on one image batch."""
    ablation = frozenset(ablation)
    unknown = ablation - ABLATABLE
    if unknown:
        raise ConfigError(f"unknown modules to disable: {sorted(unknown)}")
    check_lambda(lam)
    i = ad.clamp(project(params, image), 0.0, 1.0)
    R, L = decompose(params, i)
    R_f = R if "cg" in ablation else cg_refine(params, R)
    L_f = L if "ce" in ablation else ce_refine(params, L)
    if "oec" in ablation:
        I_f = ad.clamp(L_f * R_f, 0.0, 1.0)
    else:
        I_f = oec_correct(L_f, R_f, lam, clamp_floor)
    return Decomposition(i=i, R=R, L=L, R_f=R_f, L_f=L_f, I_f=I_f)


def enhance(params: ModelParams, image: Tensor, lam: float = 0.2,
            ablation: Iterable[str] = ()) -> Decomposition:
    """Inference on a single 1 x 3 x H x W image with frozen parameters."""
    _check_rgb(image, "enhance")
    if image.shape[0] != 1:
        raise DimensionError(f"enhance takes one image, got batch of {image.shape[0]}")
    return forward_branch(params.frozen(), ad.stop_gradient(image), lam, ablation)

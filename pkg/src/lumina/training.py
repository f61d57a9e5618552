"""
Paired self-supervised training: two-branch forward, losses, Adam with a
cosine-annealed learning rate, and the per-step loss log.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import LowLightPair, random_crop
from .errors import ConfigError, TrainingError
from .losses import (FeatureExtractor, LossWeights, combined_loss, consistency_loss,
                     perceptual_loss, projection_loss, retinex_loss)
from .networks import CLAMP_FLOOR, ModelParams, check_lambda, forward_branch

logger = logging.getLogger(__name__)

PROFILES = {"default": 0.2, "lol": 0.10}


@dataclass
class TrainConfig:
    """Training settings. The desk defaults (50 epochs, 64 px crops) stand in
    for the 400-epoch / 256 px regime, which stays selectable."""
    lr: float = 1e-4
    epochs: int = 50
    crop: int = 64
    batch: int = 1
    lam: float = 0.2
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    clamp_floor: float = CLAMP_FLOOR
    phi_seed: int = 1234

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.crop < 1:
            raise ConfigError(f"crop must be >= 1, got {self.crop}")
        if self.batch != 1:
            raise ConfigError("only batch size 1 is supported")
        check_lambda(self.lam)
        if not (0 < self.clamp_floor < 1):
            raise ConfigError(f"clamp_floor must lie in (0, 1), got {self.clamp_floor}")

    @classmethod
    def for_profile(cls, profile: str, **overrides) -> "TrainConfig":
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r} (choose from {sorted(PROFILES)})")
        overrides.setdefault("lam", PROFILES[profile])
        return cls(**overrides)

    def as_dict(self) -> Dict[str, str]:
        return {f.name: str(getattr(self, f.name)) for f in fields(self)}


# ---------------------------------------------------------------------------
# Forward + loss for one pair
# ---------------------------------------------------------------------------

LOG_FIELDS = ("step", "lr", "L_p", "L_C", "L_R_recon", "L_R_refl", "L_R_anchor",
              "L_R_smooth", "L_per", "L_All")


@dataclass
class PairLosses:
    total: Tensor
    L_p: Tensor
    L_C: Tensor
    L_R: Tensor
    retinex_terms: tuple
    L_per: Tensor
    branches: tuple

    def record(self) -> Dict[str, float]:
        rec = dict(L_p=self.L_p.item(), L_C=self.L_C.item())
        for name, v in zip(("L_R_recon", "L_R_refl", "L_R_anchor", "L_R_smooth"), self.retinex_terms):
            rec[name] = v
        rec["L_per"] = self.L_per.item()
        rec["L_All"] = self.total.item()
        return rec


def pair_losses(params: ModelParams, phi: FeatureExtractor, I1: Tensor, I2: Tensor,
                lam: float, weights: LossWeights, clamp_floor: float = CLAMP_FLOOR) -> PairLosses:
    """Both branches forward and the weighted four-term loss.

    Projection and Retinex terms are averaged over the two branches.
    """
    b1 = forward_branch(params, I1, lam, clamp_floor=clamp_floor)
    b2 = forward_branch(params, I2, lam, clamp_floor=clamp_floor)
    L_p = (projection_loss(I1, b1.i) + projection_loss(I2, b2.i)) * 0.5
    L_C = consistency_loss(b1.R_f, b2.R_f)
    r1 = retinex_loss(b1.i, b1.R_f, b1.L, b1.L_f, clamp_floor)
    r2 = retinex_loss(b2.i, b2.R_f, b2.L, b2.L_f, clamp_floor)
    L_R = (r1.total + r2.total) * 0.5
    terms = tuple(0.5 * (a + b) for a, b in zip(r1.values(), r2.values()))
    L_per = perceptual_loss(phi, b1.I_f, b2.I_f)
    total = combined_loss(weights, L_p, L_C, L_R, L_per)
    return PairLosses(total, L_p, L_C, L_R, terms, L_per, (b1, b2))


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """``base_lr * 0.5 * (1 + cos(pi * step / total_steps))``."""
    if total_steps <= 0:
        return base_lr
    step = min(max(step, 0), total_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_cosine_step(params: ModelParams, grads: Dict[str, np.ndarray], state: AdamState,
                     step: int, total_steps: int, base_lr: float) -> float:
    """One bias-corrected Adam update at the cosine-scheduled rate for
    ``step`` (0-based). Updates ``params`` and ``state`` in place and
    returns the rate used.
    """
    for path, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {path} at step {step}")
    lr_t = cosine_lr(base_lr, step, total_steps)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for path, g in grads.items():
        p = params[path]
        m = state.m.get(path)
        v = state.v.get(path)
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
        state.m[path], state.v[path] = m, v
        update = lr_t * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - update).astype(p.dtype, copy=False)
    return lr_t


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: ModelParams
    log: List[Dict[str, float]]


def train(config: TrainConfig, pairs: Sequence[LowLightPair], params: ModelParams = None,
          progress=None) -> TrainResult:
    """Train on ``pairs`` for ``config.epochs`` passes, one pair per step.

    Pair order is reshuffled every epoch and crops are drawn from a
    generator seeded with ``config.seed``; the loss log is therefore a
    function of (config, pairs) alone.
    """
    if not pairs:
        raise ConfigError("training needs at least one pair")
    for p in pairs:
        if config.crop > min(p.height, p.width):
            raise ConfigError(f"crop {config.crop} exceeds pair {p.id!r} ({p.height}x{p.width})")
    params = ModelParams.init(config.seed) if params is None else params
    phi = FeatureExtractor(config.phi_seed)
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    total_steps = config.epochs * len(pairs)
    log = []
    step = 0
    for epoch in range(config.epochs):
        for idx in rng.permutation(len(pairs)):
            pair = random_crop(pairs[idx], config.crop, rng)
            params.zero_grad()
            out = pair_losses(params, phi, Tensor(pair.I1), Tensor(pair.I2),
                              config.lam, config.weights, config.clamp_floor)
            loss = out.total.item()
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {step + 1}")
            ad.backward(out.total)
            grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                     for k, t in params.items()}
            lr_t = adam_cosine_step(params, grads, state, step, total_steps, config.lr)
            step += 1
            rec = {"step": step, "lr": lr_t}
            rec.update(out.record())
            log.append(rec)
            if progress is not None:
                progress(rec)
    params.zero_grad()
    return TrainResult(params, log)


def format_log(log: Sequence[Dict[str, float]]) -> str:
    """Tab-separated, one line per step, columns in :data:`LOG_FIELDS`."""
    lines = ["\t".join(LOG_FIELDS)]
    for rec in log:
        lines.append("\t".join(str(rec["step"]) if k == "step" else repr(float(rec[k])) for k in LOG_FIELDS))
    return "\n".join(lines) + "\n"


def mean_consistency(params: ModelParams, pairs: Sequence[LowLightPair], lam: float = 0.2) -> float:
    """Mean ``||R_f1 - R_f2||^2`` over full pairs with frozen parameters."""
    frozen = params.frozen()
    vals = []
    for p in pairs:
        b1 = forward_branch(frozen, Tensor(p.I1), lam)
        b2 = forward_branch(frozen, Tensor(p.I2), lam)
        vals.append(consistency_loss(b1.R_f, b2.R_f).item())
    return float(np.mean(vals))


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **kw)

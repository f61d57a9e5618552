"""The four training losses on one synthetic pair, before any training."""

import numpy as np

from lumina.autodiff import Tensor
from lumina.losses import FeatureExtractor, LossWeights
from lumina.data import base_scenes, synth_pairs
from lumina.networks import ModelParams
from lumina.training import pair_losses

pair = synth_pairs(base_scenes(1, 32, seed=2), 1, seed=2)[0]
params = ModelParams.init(0)
phi = FeatureExtractor(seed=1234)

out = pair_losses(params, phi, Tensor(pair.I1), Tensor(pair.I2), lam=0.2, weights=LossWeights())
for key, value in out.record().items():
    print(f"{key:12s} {value:.6e}")

# The same pair with the consistency term switched off.
w = LossWeights.parse("5,0,1,0.1")
print("total without consistency:", pair_losses(params, phi, Tensor(pair.I1), Tensor(pair.I2), 0.2, w).total.item())

# Identical exposures make the paired terms vanish.
same = pair_losses(params, phi, Tensor(pair.I1), Tensor(pair.I1.copy()), 0.2, LossWeights())
print("identical exposures: L_C =", same.L_C.item(), " L_per =", same.L_per.item())

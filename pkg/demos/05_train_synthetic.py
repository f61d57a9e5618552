"""A short training run on synthetic pairs, then evaluation.

Trains for a few epochs on generated low-light pairs, prints the loss
trajectory, and compares the enhanced output with the well-lit scene.
Increase ``EPOCHS`` for a longer run.
"""

import numpy as np
from threadpoolctl import threadpool_limits

from lumina.autodiff import Tensor
from lumina.data import base_scenes, synth_pairs, to_image
from lumina.metrics import psnr, ssim
from lumina.networks import ModelParams, enhance
from lumina.training import TrainConfig, mean_consistency, train

EPOCHS = 4
scenes = base_scenes(4, 48, seed=0)
pairs = synth_pairs(scenes, 4, seed=0)
config = TrainConfig(epochs=EPOCHS, crop=32, seed=0)



def show(rec):
    if rec["step"] % 4 == 0:
        print(f"step {rec['step']:3d}  lr {rec['lr']:.2e}  L_All {rec['L_All']:.4f}  L_C {rec['L_C']:.2e}")


with threadpool_limits(1):
    result = train(config, pairs, progress=show)

print("reflectance consistency  init %.3e  trained %.3e" % (
    mean_consistency(ModelParams.init(0), pairs), mean_consistency(result.params, pairs)))

for scene, pair in zip(scenes, pairs):
    low = pair.I1[0].transpose(1, 2, 0)
    out = to_image(enhance(result.params, Tensor(pair.I1)).I_f)
    print(f"{pair.id}: input {psnr(low, scene):6.2f} dB / {ssim(low, scene):.3f}   "
          f"enhanced {psnr(out, scene):6.2f} dB / {ssim(out, scene):.3f}")

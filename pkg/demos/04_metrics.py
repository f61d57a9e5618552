"""PSNR and SSIM on synthetic degradations."""

import numpy as np

from lumina.data import base_scenes
from lumina.metrics import psnr, ssim

ref = base_scenes(1, 64, seed=3)[0]
rng = np.random.default_rng(0)
noise = rng.normal(size=ref.shape)

print(f"{'degradation':28s} {'PSNR dB':>8s} {'SSIM':>7s}")
cases = {
    "identical": ref,
    "noise sigma 0.01": np.clip(ref + 0.01 * noise, 0, 1),
    "noise sigma 0.05": np.clip(ref + 0.05 * noise, 0, 1),
    "darkened x0.5": ref * 0.5,
    "gamma 2.2": ref ** 2.2,
    "inverted": 1 - ref,
}
for name, img in cases.items():
    print(f"{name:28s} {psnr(img, ref):8.3f} {ssim(img, ref):7.4f}")

"""Inference with an untrained model: project, decompose, refine, correct.

Shows the Decomposition fields, the attention gates and how the
correction factor and module toggles change the output.
"""

import numpy as np

from lumina import networks as nw
from lumina.data import base_scenes, synth_pairs
from lumina.autodiff import Tensor

params = nw.ModelParams.init(rng_seed=0)
print(f"{len(params)} parameter tensors, {params.num_values()} values")

pair = synth_pairs(base_scenes(1, 48, seed=1), 1, seed=1)[0]
image = Tensor(pair.I1)

d = nw.enhance(params, image, lam=0.2)
for name in ("i", "R", "L", "R_f", "L_f", "I_f"):
    v = getattr(d, name).data
    print(f"{name:4s} shape {v.shape}  range [{v.min():.3f}, {v.max():.3f}]  mean {v.mean():.3f}")

w_c, w_s = nw.cg_attention(params, d.R)
print("reflectance channel gates:", np.round(w_c.data.ravel(), 4))
print(f"spatial gate range [{w_s.data.min():.3f}, {w_s.data.max():.3f}]")

# Smaller correction factors brighten; lambda = 1 is plain recomposition.
for lam in (0.1, 0.2, 0.5, 1.0):
    print(f"lambda {lam:4.2f}: mean I_f {nw.enhance(params, image, lam).I_f.data.mean():.4f}")

for off in ({"cg"}, {"ce"}, {"oec"}, {"oec", "cg", "ce"}):
    out = nw.enhance(params, image, 0.2, off)
    print(f"disable {sorted(off)}: mean I_f {out.I_f.data.mean():.4f}")

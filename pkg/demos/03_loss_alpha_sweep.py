"""
Hybrid losses and the alpha sweep
=================================

A hybrid loss blends a masked term (object pixels only) with a global term
(every pixel).  alpha=1 ignores the background; alpha=0 weighs it like any
other pixel.  The blend is linear in alpha, which the sweep shows.
"""
import numpy as np

from fppsim import LossSpec, alpha_sweep, loss

rng = np.random.default_rng(3)
gt = np.zeros((64, 64))
yy, xx = np.mgrid[:64, :64]
disk = (yy - 32) ** 2 + (xx - 32) ** 2 < 20 ** 2
gt[disk] = 0.4 + 0.2 * rng.random(disk.sum())

# good on the object, noisy on the background
pred_a = np.where(disk, gt + rng.normal(0, 0.01, gt.shape), rng.normal(0, 0.3, gt.shape))
# the opposite
pred_b = np.where(disk, gt + rng.normal(0, 0.1, gt.shape), 0.0)

for fam in ("l1", "rmse", "masked_l1", "masked_rmse"):
    print(f"{fam:12s} a={loss(LossSpec(fam), pred_a, gt):.4f} b={loss(LossSpec(fam), pred_b, gt):.4f}")

alphas = np.linspace(0, 1, 6)
for fam in ("hybrid_l1", "hybrid_rmse"):
    print(fam)
    for i, a, v in alpha_sweep(fam, alphas, [(pred_a, gt), (pred_b, gt)]):
        print(f"  pair {'ab'[i]} alpha {a:.1f} -> {v:.4f}")

# randomizing the background does not move a masked loss at all
noisy = np.where(disk, pred_a, rng.normal(0, 100, gt.shape))
print("masked_l1 change under background noise:",
      loss(LossSpec("masked_l1"), noisy, gt) - loss(LossSpec("masked_l1"), pred_a, gt))

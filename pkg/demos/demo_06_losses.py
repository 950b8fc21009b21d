# Tour of the loss/metric suite: structural similarity, PSNR, the
# residual-spectrum cosine distance, and the two landmark-heatmap losses.
#
# Run:  python3 demos/demo_06_losses.py

import numpy as np

from orthostitch import (
    ConfidenceBatch,
    bce_heatmap_loss,
    cosine_frequency_loss,
    extract_peak,
    gan_losses,
    landmark_error,
    psnr,
    render_heatmap,
    rr_loss,
    ssim_loss,
)
from orthostitch.landmarks import LandmarkSet

rng = np.random.default_rng(1)
clean = rng.random((64, 64))
noisy = np.clip(clean + rng.normal(0, 0.05, clean.shape), 0, 1)
blurry = clean * 0.5 + 0.25

print("ssim_loss(clean, clean) =", ssim_loss(clean, clean))
print("ssim_loss(clean, noisy) =", round(ssim_loss(clean, noisy), 4))
print("ssim_loss(clean, blurry)=", round(ssim_loss(clean, blurry), 4))
print("psnr(noisy vs clean)    =", round(psnr(noisy, clean, peak=1.0), 2), "dB")

# the cosine loss only looks at how the *residual* relative to an input
# reconstruction points in spectrum space; rescaling a residual is free
inp = rng.random((64, 64))
a = cosine_frequency_loss(noisy, clean, inp)
b = cosine_frequency_loss(inp + 3.0 * (noisy - inp), clean, inp)
print("cosine residual loss    =", round(a, 4), "(scale-invariant:", round(b, 4), ")")

# adversarial pair: identical confidence distributions sit at the
# indifference point 2.0 for both players
l_d, l_g = gan_losses(ConfidenceBatch(pred=[0.5, 0.5, 0.5], real=[0.5, 0.5, 0.5]))
print("gan losses at indifference:", l_d, l_g)

# heatmap losses: render, perturb, score
gt_map = render_heatmap((40, 22), dims=(64, 64), sigma_px=6.0)
pred_map = render_heatmap((43, 25), dims=(64, 64), sigma_px=6.0)
print("bce(pred, gt)           =", round(bce_heatmap_loss(pred_map, gt_map), 5))
print("rr at true location     =", round(rr_loss(pred_map, (40, 22), scale=10.0), 3))
print("rr at predicted peak    =", round(rr_loss(pred_map, (43, 25), scale=10.0), 3))
print("uniform-map rr = log(N) =", round(rr_loss(np.zeros((64, 64)), (1, 1), 10.0), 3))

pred = LandmarkSet({"femoral_head": extract_peak(pred_map), "tibia": (10, 60)})
gt = LandmarkSet({"femoral_head": (40, 22), "tibia": (10, 60)})
err = landmark_error(pred, gt)
print("landmark errors:", err.per_landmark_px, "mean:", round(err.mean_px, 3))

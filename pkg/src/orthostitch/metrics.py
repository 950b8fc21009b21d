"""Image-quality and landmark losses as pure numerical references.

These are the scalar ground truth the trainer component must reproduce;
nothing here computes gradients. All functions accept either the
package's image/heatmap wrappers or bare 2D arrays.

Conventions baked in:

  - SSIM loss is ``1 - mean(l^alpha * c^beta * s^gamma)`` over local
    Gaussian windows with symmetric edge padding; range [0, 2].
  - The heatmap cross entropy is the *negative* mean log-likelihood
    (the loss is minimized, not maximized, at the optimum).
  - The relative-response loss is the negative log softmax of the
    scaled heatmap at the true landmark pixel.
  - GAN losses compare each confidence against the opposing batch mean
    and are averaged (not summed) over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage
from scipy.special import logsumexp

__all__ = [
    "SsimParams",
    "ConfidenceBatch",
    "IdenticalImagesError",
    "DegenerateResidualError",
    "ssim_loss",
    "psnr",
    "gan_losses",
    "cosine_frequency_loss",
    "bce_heatmap_loss",
    "rr_loss",
]


class IdenticalImagesError(ValueError):
    """PSNR is undefined (infinite) for a zero-MSE pair."""


class DegenerateResidualError(ValueError):
    """Cosine frequency loss is undefined when a residual spectrum is zero."""


def _as_array(img) -> np.ndarray:
    data = getattr(img, "data", img)
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2:
        raise ValueError("expected a 2D image")
    return arr


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


@dataclass(frozen=True)
class SsimParams:
    """Window and stabilizer configuration for :func:`ssim_loss`.

    ``data_range`` defaults to the joint min/max range of the two
    images (1.0 if both are constant). Stabilizers default to
    ``(k1 L)^2, (k2 L)^2, b2/2``.
    """

    window_size: int = 11
    window_sigma: float = 1.5
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    k1: float = 0.01
    k2: float = 0.03
    data_range: float | None = None
    window: np.ndarray | None = None  # explicit per-pixel weights override

    def resolve_window(self) -> np.ndarray:
        if self.window is not None:
            w = np.asarray(self.window, dtype=float)
            if w.min() < 0 or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("window weights must be >= 0 and sum to 1")
            return w
        return _gaussian_window(self.window_size, self.window_sigma)

    def stabilizers(self, data_range: float) -> tuple[float, float, float]:
        if data_range <= 0:
            raise ValueError("data range must be positive")
        b1 = (self.k1 * data_range) ** 2
        b2 = (self.k2 * data_range) ** 2
        return b1, b2, b2 / 2.0


def ssim_loss(X, Y, p: SsimParams = SsimParams()) -> float:
    """Structural-similarity loss between two equally sized images.

    Luminance, contrast and structure factors are computed on local
    windows (symmetric padding) and combined with the exponents in
    ``p``; the result is ``1 - mean`` of the product, in [0, 2] for the
    default exponents.
    """
    x = _as_array(X)
    y = _as_array(Y)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    w = p.resolve_window()
    L = p.data_range
    if L is None:
        L = max(x.max(), y.max()) - min(x.min(), y.min())
        if L == 0:
            L = 1.0
    b1, b2, b3 = p.stabilizers(L)

    def win_mean(a):
        return scipy.ndimage.correlate(a, w, mode="reflect")

    mu_x = win_mean(x)
    mu_y = win_mean(y)
    var_x = np.maximum(win_mean(x * x) - mu_x * mu_x, 0.0)
    var_y = np.maximum(win_mean(y * y) - mu_y * mu_y, 0.0)
    cov = win_mean(x * y) - mu_x * mu_y

    lum = (2 * mu_x * mu_y + b1) / (mu_x ** 2 + mu_y ** 2 + b1)
    if p.beta == p.gamma and b3 == b2 / 2.0:
        # combined contrast*structure form; avoids sqrt round-off so the
        # identity pair comes out exactly zero
        cs = (2 * cov + b2) / (var_x + var_y + b2)
        ssim_map = lum ** p.alpha * cs ** p.beta
    else:
        sig_x = np.sqrt(var_x)
        sig_y = np.sqrt(var_y)
        con = (2 * sig_x * sig_y + b2) / (var_x + var_y + b2)
        stru = (cov + b3) / (sig_x * sig_y + b3)
        ssim_map = lum ** p.alpha * con ** p.beta * stru ** p.gamma
    return float(1.0 - ssim_map.mean())


def psnr(X, Y, peak: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB.

    ``peak`` defaults to the data range of Y (the reference image).
    Raises IdenticalImagesError on a zero-MSE pair instead of returning
    infinity.
    """
    x = _as_array(X)
    y = _as_array(Y)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    if peak is None:
        peak = float(y.max() - y.min())
    if peak <= 0:
        raise ValueError("peak must be > 0")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        raise IdenticalImagesError("images are identical; PSNR is infinite")
    return float(10.0 * np.log10(peak * peak / mse))


@dataclass(frozen=True)
class ConfidenceBatch:
    """Discriminator confidences for a mini-batch of predictions/targets."""

    pred: np.ndarray  # confidence that each prediction is real
    real: np.ndarray  # confidence that each ground-truth image is real

    def __post_init__(self) -> None:
        pred = np.atleast_1d(np.asarray(self.pred, dtype=float))
        real = np.atleast_1d(np.asarray(self.real, dtype=float))
        if pred.size == 0 or real.size == 0:
            raise ValueError("confidence batches must be non-empty")
        if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(real))):
            raise ValueError("confidences must be finite")
        object.__setattr__(self, "pred", pred)
        object.__setattr__(self, "real", real)


def gan_losses(batch: ConfidenceBatch) -> tuple[float, float]:
    """Relativistic average adversarial losses (L_D, L_G).

    Each confidence is compared against the opposing batch mean; both
    losses are batch means of the two squared terms.
    """
    cx = batch.pred
    cy = batch.real
    cx_bar = cx.mean()
    cy_bar = cy.mean()
    l_d = float(np.mean((1.0 - cy + cx_bar) ** 2) + np.mean((1.0 - cy_bar + cx) ** 2))
    l_g = float(np.mean((1.0 - cx + cy_bar) ** 2) + np.mean((1.0 - cx_bar + cy) ** 2))
    return l_d, l_g


def cosine_frequency_loss(X, Y, I_in) -> float:
    """Cosine distance between residual spectra relative to the input.

    Both the prediction X and the reference Y are reduced to their 2D
    Fourier coefficients minus the input reconstruction's; the loss is
    one minus the real part of the normalized Hermitian inner product,
    in [0, 2]. Scale-invariant in each residual.
    """
    x = _as_array(X)
    y = _as_array(Y)
    i = _as_array(I_in)
    if not (x.shape == y.shape == i.shape):
        raise ValueError("all three images must share dims")
    fi = np.fft.fft2(i).ravel()
    rx = np.fft.fft2(x).ravel() - fi
    ry = np.fft.fft2(y).ravel() - fi
    nx = np.linalg.norm(rx)
    ny = np.linalg.norm(ry)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateResidualError(
            "residual spectrum is zero; cosine loss undefined")
    return float(1.0 - np.real(np.vdot(rx / nx, ry / ny)))


def bce_heatmap_loss(m, m_gt, eps: float = 1e-7) -> float:
    """Mean binary cross entropy between a predicted and target heatmap.

    Predictions are clamped to [eps, 1-eps] before the log; inputs must
    lie in [0, 1] beforehand.
    """
    pred = _as_array(m)
    target = _as_array(m_gt)
    if pred.shape != target.shape:
        raise ValueError("heatmap shapes differ")
    if pred.min() < 0 or pred.max() > 1 or target.min() < 0 or target.max() > 1:
        raise ValueError("heatmap values must lie in [0, 1]")
    pred = np.clip(pred, eps, 1.0 - eps)
    ll = target * np.log(pred) + (1.0 - target) * np.log(1.0 - pred)
    return float(-ll.mean())


def rr_loss(m, gt_location, scale: float) -> float:
    """Negative log softmax of the scaled heatmap at the true landmark.

    ``gt_location`` is (u, v) pixel coordinates (column, row). Invariant
    to adding a constant to the heatmap; equals log(N) for any constant
    heatmap or for scale 0.
    """
    heat = _as_array(m)
    u, v = int(round(gt_location[0])), int(round(gt_location[1]))
    h, w = heat.shape
    if not (0 <= u < w and 0 <= v < h):
        raise ValueError(f"landmark ({u}, {v}) outside heatmap {w}x{h}")
    z = scale * heat
    return float(logsumexp(z) - z[v, u])

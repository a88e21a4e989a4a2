"""PSNR and SSIM for 8-bit RGB frames."""

import numpy as np
from scipy import ndimage

from .data_io import Frame
from .errors import DataError

PSNR_CAP = 100.0
DATA_RANGE = 255.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _pixels(x):
    return (x.pixels if isinstance(x, Frame) else np.asarray(x)).astype(np.float64)


def psnr(a, b):
    """``10 log10(255^2 / MSE)``; identical inputs give the 100 dB cap."""
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise DataError(f"dimension mismatch: {pa.shape} vs {pb.shape}")
    mse = np.mean((pa - pb) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(DATA_RANGE ** 2 / mse), PSNR_CAP))


def _gaussian_taps(size=SSIM_WIN, sigma=SSIM_SIGMA):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, taps):
    r = len(taps) // 2
    out = ndimage.correlate1d(img, taps, axis=0, mode="constant")
    out = ndimage.correlate1d(out, taps, axis=1, mode="constant")
    return out[r:-r, r:-r]


def ssim_map(x, y):
    """Local SSIM over every fully contained 11x11 Gaussian window of one channel."""
    taps = _gaussian_taps()
    c1 = (K1 * DATA_RANGE) ** 2
    c2 = (K2 * DATA_RANGE) ** 2
    mu_x = _filter_valid(x, taps)
    mu_y = _filter_valid(y, taps)
    sxx = _filter_valid(x * x, taps) - mu_x ** 2
    syy = _filter_valid(y * y, taps) - mu_y ** 2
    sxy = _filter_valid(x * y, taps) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return num / den


def ssim(a, b):
    """Mean SSIM, computed per RGB channel and averaged over channels."""
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise DataError(f"dimension mismatch: {pa.shape} vs {pb.shape}")
    if pa.ndim == 2:
        pa, pb = pa[..., None], pb[..., None]
    if min(pa.shape[:2]) < SSIM_WIN:
        raise DataError(f"image {pa.shape[:2]} smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    vals = [ssim_map(pa[..., c], pb[..., c]).mean() for c in range(pa.shape[2])]
    return float(np.mean(vals))

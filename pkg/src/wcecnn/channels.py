"""Image preprocessing and the Laplacian / Hessian-ridge prior channels.

Images are ``(H, W, 3)`` uint8 arrays. Derivatives use Gaussian
pre-smoothing followed by finite-difference stencils; x runs along columns
and y along rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

BAND_NAMES = ("R", "G", "B", "H", "L")
LUMA = np.array([0.299, 0.587, 0.114])
RESIZE_SIDE = 128
CROP_SIDE = 100
DEFAULT_SIGMA = 1.0
STD_FLOOR = 1e-6


def to_brightness(img):
    """BT.601 luma scaled to [0, 1]."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    return (img.astype(np.float64) @ LUMA) / 255.0


def resize_bilinear(img, target=RESIZE_SIDE):
    """Corner-aligned bilinear resize to ``target x target``, rounded back to uint8."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h < 2 or w < 2:
        raise ValueError(f"cannot resize a degenerate {h}x{w} image")
    if (h, w) == (target, target):
        return img.copy()
    out = _bilinear(img.astype(np.float64), target, target)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _bilinear(a, th, tw):
    h, w = a.shape[:2]
    ys = np.arange(th) * ((h - 1) / (th - 1)) if th > 1 else np.zeros(1)
    xs = np.arange(tw) * ((w - 1) / (tw - 1)) if tw > 1 else np.zeros(1)
    y0 = np.minimum(np.floor(ys).astype(int), h - 2)
    x0 = np.minimum(np.floor(xs).astype(int), w - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    if a.ndim == 3:
        fy, fx = fy[..., None], fx[..., None]
    top = a[y0][:, x0] * (1 - fx) + a[y0][:, x0 + 1] * fx
    bot = a[y0 + 1][:, x0] * (1 - fx) + a[y0 + 1][:, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


def center_crop(img, side=CROP_SIDE):
    h, w = img.shape[:2]
    if h < side or w < side:
        raise ValueError(f"cannot crop {side}x{side} from a {h}x{w} image")
    top, left = (h - side) // 2, (w - side) // 2
    return img[top:top + side, left:left + side]


def gaussian_kernel(sigma):
    radius = int(math.ceil(3 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(img, sigma=DEFAULT_SIGMA):
    """Separable Gaussian blur, truncated at ``ceil(3 sigma)``, replicate borders."""
    a = np.asarray(img, dtype=np.float64)
    if sigma <= 0:
        return a.copy()
    k = gaussian_kernel(sigma)
    rows = ndimage.correlate1d(a, k, axis=0, mode="nearest")
    return ndimage.correlate1d(rows, k, axis=1, mode="nearest")


def _second_derivatives(img, sigma):
    img = np.asarray(img, dtype=np.float64)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError(f"derivatives need at least a 3x3 image, got {img.shape}")
    s = np.pad(gaussian_smooth(img, sigma), 1, mode="edge")
    c = s[1:-1, 1:-1]
    ixx = s[1:-1, 2:] - 2 * c + s[1:-1, :-2]
    iyy = s[2:, 1:-1] - 2 * c + s[:-2, 1:-1]
    ixy = (s[2:, 2:] - s[2:, :-2] - s[:-2, 2:] + s[:-2, :-2]) / 4.0
    return ixx, iyy, ixy


def laplacian(img, sigma=DEFAULT_SIGMA):
    ixx, iyy, _ = _second_derivatives(img, sigma)
    return ixx + iyy


def dominant_eigenvalue(a, c, b):
    """Eigenvalue of largest magnitude of ``[[a, b], [b, c]]``; ties go to the + root."""
    mean = (a + c) / 2.0
    radius = np.sqrt(((a - c) / 2.0) ** 2 + b * b)
    return np.where(mean >= 0, mean + radius, mean - radius)


def hessian_ridge(img, sigma=DEFAULT_SIGMA):
    """``max(0, lambda_1)`` where ``lambda_1`` is the dominant Hessian eigenvalue."""
    ixx, iyy, ixy = _second_derivatives(img, sigma)
    return np.maximum(0.0, dominant_eigenvalue(ixx, iyy, ixy))


@dataclass(frozen=True, eq=False)
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        # stored as float32 so checkpoints round-trip exactly
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float32))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float32))
        if np.any(self.std <= 0):
            raise ValueError("channel std must be positive")

    def standardize(self, bands):
        shape = (-1, 1, 1)
        return ((bands - self.mean.reshape(shape)) / self.std.reshape(shape)).astype(np.float32)


def compute_stats(samples):
    """Per-band mean and std over every pixel of ``samples`` ``(N, bands, H, W)``."""
    samples = np.asarray(samples)
    if samples.ndim == 3:
        samples = samples[None]
    nb = samples.shape[1]
    mean = np.zeros(nb)
    std = np.zeros(nb)
    for b in range(nb):
        band = samples[:, b].astype(np.float64)
        mean[b] = band.mean()
        std[b] = band.std()
    return ChannelStats(mean, np.maximum(std, STD_FLOOR))


def raw_bands(img, sigma=DEFAULT_SIGMA):
    """Resize, crop and stack (R, G, B, H, L) without standardization."""
    img = center_crop(resize_bilinear(img, RESIZE_SIDE), CROP_SIDE)
    rgb = img.astype(np.float64).transpose(2, 0, 1) / 255.0
    bright = to_brightness(img)
    return np.concatenate([rgb, hessian_ridge(bright, sigma)[None],
                           laplacian(bright, sigma)[None]]).astype(np.float32)


def preprocess(img, sigma=DEFAULT_SIGMA, stats=None):
    """Return the ``(5, 100, 100)`` float32 band tensor for one raw image."""
    bands = raw_bands(img, sigma)
    return stats.standardize(bands) if stats is not None else bands

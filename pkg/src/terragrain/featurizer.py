"""Handcrafted patch descriptor feeding the trainable projection head.

Per crop half (78 values): 4x4x4 RGB histogram (64), channel means and
population stds on [0, 1] (6), magnitude-weighted gradient orientation
histogram (8).  Foreground half first, background half second.
"""

from __future__ import annotations

import math

import numpy as np

HIST_BINS = 64
MOMENTS = 6
ORIENT_BINS = 8
HALF_DIM = HIST_BINS + MOMENTS + ORIENT_BINS  # 78
FULL_DIM = 2 * HALF_DIM  # 156


def feature_dim(background: bool = True) -> int:
    return FULL_DIM if background else HALF_DIM


def _color_hist(x: np.ndarray) -> np.ndarray:
    n, s = x.shape[0], x.shape[1] * x.shape[2]
    q = np.clip(np.floor(x / 64.0), 0, 3).astype(np.int64)
    bins = q[..., 0] * 16 + q[..., 1] * 4 + q[..., 2]
    flat = (bins.reshape(n, -1) + HIST_BINS * np.arange(n)[:, None]).ravel()
    counts = np.bincount(flat, minlength=n * HIST_BINS).reshape(n, HIST_BINS)
    return counts / float(s)


def _moments(x: np.ndarray) -> np.ndarray:
    # scale after reducing so a constant block has an exactly zero std
    y = x.reshape(x.shape[0], -1, 3)
    return np.concatenate([y.mean(axis=1), y.std(axis=1)], axis=1) / 255.0


def _orientation_hist(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    lum = x.mean(axis=-1)
    if lum.shape[1] < 2 or lum.shape[2] < 2:
        return np.zeros((n, ORIENT_BINS))
    gy, gx = np.gradient(lum, axis=(1, 2))
    mag = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx)
    # bins of width pi/4 centred on multiples of pi/4, so bin 0 holds +x
    bins = np.floor((theta + math.pi / 8) / (math.pi / 4)).astype(np.int64) % ORIENT_BINS
    flat = (bins.reshape(n, -1) + ORIENT_BINS * np.arange(n)[:, None]).ravel()
    hist = np.bincount(flat, weights=mag.ravel(), minlength=n * ORIENT_BINS).reshape(n, ORIENT_BINS)
    total = mag.reshape(n, -1).sum(axis=1)
    out = np.zeros_like(hist)
    nz = total > 0
    out[nz] = hist[nz] / total[nz, None]
    return out


def describe(blocks: np.ndarray) -> np.ndarray:
    """78-value descriptor for each block in an (N, S, S, 3) array of [0, 255] values."""
    blocks = np.asarray(blocks, dtype=np.float64)
    return np.concatenate(
        [_color_hist(blocks), _moments(blocks), _orientation_hist(blocks)], axis=1)


def featurize_batch(fg: np.ndarray, bg: np.ndarray | None = None) -> np.ndarray:
    f = describe(fg)
    if bg is None:
        return f
    return np.concatenate([f, describe(bg)], axis=1)


def featurize(crop) -> np.ndarray:
    """Descriptor for one :class:`~terragrain.sampling.PatchCrop` (156 values, or 78 without background)."""
    fg = crop.foreground[None]
    bg = None if crop.background is None else crop.background[None]
    return featurize_batch(fg, bg)[0]


def featurize_crops(crops) -> np.ndarray:
    crops = list(crops)
    fg = np.stack([c.foreground for c in crops])
    if crops[0].background is None:
        return featurize_batch(fg)
    return featurize_batch(fg, np.stack([c.background for c in crops]))

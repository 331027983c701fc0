"""Anchor-based query / positive / negative sampling and sample composition.

A training sample is a foreground crop plus a larger co-centred background
crop, both resized to ``S x S``.  Crops near the border are shifted inside
the image rather than shrunk or padded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rng import SplitMix64

RESIZE_TO = 32


@dataclass(frozen=True)
class AnchorPatch:
    """Annotated square patch.  ``label_id`` is only meaningful within its frame."""

    frame_id: int
    center_u: int
    center_v: int
    size: int
    label_id: int


@dataclass
class PatchCrop:
    foreground: np.ndarray  # (S, S, 3) float64 in [0, 255]
    background: np.ndarray | None  # None when background context is disabled


@dataclass
class SampleBatch:
    query: PatchCrop
    positive: PatchCrop
    negatives: list[PatchCrop]


@dataclass(frozen=True)
class AugmentParams:
    flip_p: float = 0.5
    gray_p: float = 0.2
    jitter_low: float = 0.6
    jitter_high: float = 1.4


IDENTITY_AUGMENT = AugmentParams(flip_p=0.0, gray_p=0.0, jitter_low=1.0, jitter_high=1.0)


def split_by_label(anchors, query):
    """Partition one frame's anchors by whether they share ``query``'s label.

    The positive set includes the query anchor itself.
    """
    positives = [a for a in anchors if a.label_id == query.label_id]
    negatives = [a for a in anchors if a.label_id != query.label_id]
    if not negatives:
        raise DataError(f"no negatives available on frame {query.frame_id}")
    return positives, negatives


def clamp_origin(center: int, size: int, limit: int) -> int:
    """Top/left coordinate of a ``size`` window centred at ``center``, shifted to fit."""
    if size > limit:
        raise DataError(f"window of size {size} does not fit in dimension {limit}")
    return min(max(center - size // 2, 0), limit - size)


def neighborhood_clip(anchor: AnchorPatch, rng: SplitMix64, width: int, height: int):
    """Random same-size region whose centre lies inside the anchor's rectangle.

    Returns ``(center_u, center_v, size)`` after shifting the region inside
    the image.
    """
    half = anchor.size // 2
    du = rng.randint(2 * half + 1) - half
    dv = rng.randint(2 * half + 1) - half
    size = anchor.size
    left = clamp_origin(anchor.center_u + du, size, width)
    top = clamp_origin(anchor.center_v + dv, size, height)
    return left + size // 2, top + size // 2, size


def resize_index(src: int, dst: int) -> np.ndarray:
    return (np.arange(dst) * src) // dst


def crop_resized(image: np.ndarray, center_u: int, center_v: int, size: int,
                 out: int = RESIZE_TO) -> np.ndarray:
    h, w = image.shape[:2]
    top = clamp_origin(center_v, size, h)
    left = clamp_origin(center_u, size, w)
    idx = resize_index(size, out)
    return image[(top + idx)[:, None], (left + idx)[None, :]].astype(np.float64)


def compose_sample(image: np.ndarray, center, fg_size: int, bg_size: int | None,
                   out: int = RESIZE_TO) -> PatchCrop:
    """Foreground/background pair around ``center`` (u, v); ``bg_size=None`` skips the background."""
    u, v = int(center[0]), int(center[1])
    h, w = image.shape[:2]
    if not (0 <= u < w and 0 <= v < h):
        raise DataError(f"center ({u},{v}) outside {w}x{h} image")
    if bg_size is not None and bg_size < fg_size:
        raise DataError(f"bg_size {bg_size} smaller than fg_size {fg_size}")
    fg = crop_resized(image, u, v, fg_size, out)
    bg = crop_resized(image, u, v, bg_size, out) if bg_size is not None else None
    return PatchCrop(fg, bg)


def _gray(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=-1, keepdims=True)


def _jitter(x: np.ndarray, brightness: float, contrast: float, saturation: float) -> np.ndarray:
    # blends written as x*f + ref*(1-f) so a factor of exactly 1 is an exact identity
    x = np.clip(x * brightness, 0.0, 255.0)
    x = np.clip(x * contrast + x.mean() * (1.0 - contrast), 0.0, 255.0)
    return np.clip(x * saturation + _gray(x) * (1.0 - saturation), 0.0, 255.0)


def augment(crop: PatchCrop, rng: SplitMix64, params: AugmentParams = AugmentParams()) -> PatchCrop:
    """Random horizontal flip, greyscale and colour jitter, shared by fg and bg.

    Draw order is fixed (flip, greyscale, brightness, contrast, saturation)
    so a seed fully determines the result.
    """
    flip = rng.bernoulli(params.flip_p)
    gray = rng.bernoulli(params.gray_p)
    lo, hi = params.jitter_low, params.jitter_high
    factors = (rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi))

    def apply(x):
        if x is None:
            return None
        if flip:
            x = x[:, ::-1]
        if gray:
            x = np.repeat(_gray(x), 3, axis=-1)
        return _jitter(x, *factors)

    return PatchCrop(apply(crop.foreground), apply(crop.background))


def sample_batch(anchors, query: AnchorPatch, image: np.ndarray, rng: SplitMix64,
                 fg_size: int, bg_size: int | None, max_negatives: int = 10) -> SampleBatch:
    """Query, one positive and up to ``max_negatives`` negatives from one frame."""
    h, w = image.shape[:2]
    positives, negatives = split_by_label(anchors, query)

    def crop_near(anchor):
        u, v, _ = neighborhood_clip(anchor, rng, w, h)
        return compose_sample(image, (u, v), fg_size, bg_size)

    q = crop_near(query)
    pos = crop_near(positives[rng.randint(len(positives))])
    n = min(max_negatives, len(negatives))
    negs = [crop_near(negatives[i]) for i in rng.choice_without_replacement(len(negatives), n)]
    return SampleBatch(q, pos, negs)

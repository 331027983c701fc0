"""Dense label maps by sliding-window patch classification over the lower half of a frame."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import clustering, encoder
from .dataset_io import SENTINEL
from .errors import DataError
from .featurizer import featurize_batch
from .sampling import RESIZE_TO, resize_index

CHUNK = 2048


@dataclass
class SegmentationConfig:
    fg_size: int = 64
    bg_size: int = 320
    step: int = 3
    background: bool = True

    @property
    def bg(self) -> int | None:
        return self.bg_size if self.background else None


@dataclass
class LabelMap:
    labels: np.ndarray  # (H, W) uint8, SENTINEL where unlabeled
    similarity: np.ndarray  # (H, W) winning exp-cosine similarity, 0 where unlabeled (auxiliary)
    windows: np.ndarray  # (M, 4): cu, cv, label, similarity

    @property
    def roi_top(self) -> int:
        return self.labels.shape[0] // 2

    def write_windows_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cu", "cv", "label", "similarity"])
            for cu, cv, lab, sim in self.windows:
                w.writerow([int(cu), int(cv), int(lab), "%.17g" % sim])


def roi_rows(height: int) -> tuple[int, int]:
    """Row range ``[top, bottom)`` of the region of interest (bottom half)."""
    return height // 2, height


def window_lattice(height: int, width: int, step: int):
    """Block origins covering the ROI on a ``step`` lattice; the last blocks may be truncated."""
    top, bottom = roi_rows(height)
    return np.arange(top, bottom, step), np.arange(0, width, step)


def gather_crops(image: np.ndarray, cu: np.ndarray, cv: np.ndarray, size: int,
                 out: int = RESIZE_TO) -> np.ndarray:
    """Batched equivalent of cropping ``size`` windows (shift-clamped) and nearest resizing."""
    h, w = image.shape[:2]
    top = np.clip(cv - size // 2, 0, h - size)
    left = np.clip(cu - size // 2, 0, w - size)
    idx = resize_index(size, out)
    rows = top[:, None] + idx[None, :]
    cols = left[:, None] + idx[None, :]
    return image[rows[:, :, None], cols[:, None, :]].astype(np.float64)


def check_config(image: np.ndarray, config: SegmentationConfig) -> None:
    h, w = image.shape[:2]
    if config.step < 1:
        raise DataError("step must be >= 1")
    if config.fg_size > h / 2 or config.fg_size > w:
        raise DataError(f"fg_size {config.fg_size} inconsistent with {w}x{h} image")
    if config.bg is not None and (config.bg_size > h or config.bg_size > w):
        raise DataError(f"bg_size {config.bg_size} exceeds {w}x{h} image")
    if config.bg is not None and config.bg_size < config.fg_size:
        raise DataError("bg_size must be >= fg_size")


def _paint(grid: np.ndarray, step: int) -> np.ndarray:
    return np.repeat(np.repeat(grid, step, axis=0), step, axis=1)


def segment_frame(image: np.ndarray, params, clusters, config: SegmentationConfig = SegmentationConfig()) -> LabelMap:
    """Classify windows on a ``step`` lattice and paint each label onto its ``step x step`` block."""
    check_config(image, config)
    if clusters.k > SENTINEL:
        raise DataError(f"at most {SENTINEL} clusters can be rendered")
    h, w = image.shape[:2]
    step = config.step
    r0, c0 = window_lattice(h, w, step)
    rr, cc = np.meshgrid(r0, c0, indexing="ij")
    rr, cc = rr.ravel(), cc.ravel()
    cv = np.minimum(rr + step // 2, h - 1)
    cu = np.minimum(cc + step // 2, w - 1)

    labels = np.full((h, w), SENTINEL, dtype=np.uint8)
    sim = np.zeros((h, w), dtype=np.float64)
    win_labels = np.empty(len(rr), dtype=np.int64)
    win_sims = np.empty(len(rr), dtype=np.float64)
    for s in range(0, len(rr), CHUNK):
        sl = slice(s, s + CHUNK)
        fg = gather_crops(image, cu[sl], cv[sl], config.fg_size)
        bg = gather_crops(image, cu[sl], cv[sl], config.bg_size) if config.bg is not None else None
        z = encoder.forward(params, featurize_batch(fg, bg))
        win_labels[sl], win_sims[sl] = clustering.assign_batch(clusters, z)

    # each block is [r, r + step) x [c, c + step), truncated at the ROI edge
    n_rows, n_cols = len(r0), len(c0)
    lab_grid = win_labels.reshape(n_rows, n_cols)
    sim_grid = win_sims.reshape(n_rows, n_cols)
    top, bottom = roi_rows(h)
    labels[top:bottom] = _paint(lab_grid, step)[: bottom - top, :w]
    sim[top:bottom] = _paint(sim_grid, step)[: bottom - top, :w]
    windows = np.column_stack([cu, cv, win_labels, win_sims])
    return LabelMap(labels, sim, windows)

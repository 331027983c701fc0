"""Procedural off-road-like scenes with ground-truth region masks.

Two layouts: ``bands`` (vertical, slightly converging strips that drift
between frames, like tracks and verges) and ``voronoi`` (drifting cells,
like patchy open terrain).  Region types share their textures across
scenes so a model trained on one layout can be scored on the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset_io import (DatasetManifest, FrameRecord, PoseRecord, write_anchors,
                         write_image, write_manifest, write_poses)
from .errors import DataError
from .rng import SplitMix64
from .sampling import AnchorPatch

MAX_TYPES = 16
MIN_COLOR_DISTANCE = 40
PLACEMENT_ATTEMPTS = 1000
FRAME_STEP_M = 0.5

# (base RGB, per-channel uniform noise amplitude)
TEXTURES = (
    ((150, 115, 75), 18),   # packed earth
    ((55, 125, 45), 40),    # vegetation
    ((150, 150, 145), 30),  # gravel
    ((70, 50, 35), 12),     # mud
    ((205, 185, 95), 25),   # dry grass
    ((170, 80, 30), 30),    # fallen leaves
    ((55, 85, 150), 15),    # standing water
    ((230, 215, 175), 10),  # sand
    ((100, 100, 100), 50),  # rock
    ((105, 170, 120), 30),  # moss
    ((20, 75, 25), 25),     # dense bush
    ((200, 130, 160), 20),  # flowering scrub
    ((60, 150, 200), 15),   # puddle reflection
    ((130, 20, 40), 20),    # red clay
    ((240, 240, 240), 8),   # snow
    ((15, 15, 20), 10),     # shadow
)


def color_distance(a, b) -> int:
    """Largest per-channel difference between two RGB triples."""
    return max(abs(int(x) - int(y)) for x, y in zip(a, b))


@dataclass
class SceneSpec:
    seed: int
    width: int = 640
    height: int = 480
    num_region_types: int = 4
    frames: int = 10
    layout: str = "bands"
    textures: list = field(default=None)
    illumination: float = 0.0  # max relative deviation of the per-frame global gain
    shading: float = 0.0  # amplitude of the smooth spatial gain field
    bands_per_type: int = 1

    def __post_init__(self):
        if self.num_region_types > MAX_TYPES:
            raise DataError(f"at most {MAX_TYPES} region types supported")
        if self.num_region_types < 2:
            raise DataError("need at least two region types")
        if self.frames < 1:
            raise DataError("scene needs at least one frame")
        if self.layout not in ("bands", "voronoi"):
            raise DataError(f"unknown layout {self.layout!r}")
        if self.width < 1 or self.height < 1:
            raise DataError("image dimensions must be positive")
        if self.textures is None:
            self.textures = list(TEXTURES[: self.num_region_types])
        if len(self.textures) != self.num_region_types:
            raise DataError("one texture per region type required")
        for i in range(len(self.textures)):
            for j in range(i):
                if color_distance(self.textures[i][0], self.textures[j][0]) < MIN_COLOR_DISTANCE:
                    raise DataError(f"region types {j} and {i} have near-identical base colors")


def _bands_layout(spec: SceneSpec):
    rng = SplitMix64(spec.seed).spawn(0)
    g, w, h = spec.num_region_types, spec.width, spec.height
    nb = g * spec.bands_per_type
    order = []
    for _ in range(spec.bands_per_type):
        perm = rng.choice_without_replacement(g, g)
        if order and perm[0] == order[-1]:
            perm = perm[1:] + perm[:1]
        order += perm
    spacing = w / nb
    phases = [rng.uniform(0.0, 2 * math.pi) for _ in range(nb - 1)]
    slopes = [rng.uniform(-0.15, 0.15) for _ in range(nb - 1)]
    ys = np.arange(h)[:, None] - h / 2.0
    xs = np.arange(w)[None, :]

    def mask(f: int) -> np.ndarray:
        m = np.zeros((h, w), dtype=np.int64)
        for k in range(1, nb):
            drift = 0.12 * spacing * math.sin(2 * math.pi * f / 40.0 + phases[k - 1])
            boundary = k * spacing + drift + slopes[k - 1] * ys
            m += xs >= boundary
        return np.asarray(order)[m].astype(np.uint8)

    return mask


def _voronoi_layout(spec: SceneSpec):
    rng = SplitMix64(spec.seed).spawn(0)
    g, w, h = spec.num_region_types, spec.width, spec.height
    n_sites = 2 * g
    sites = np.array([[rng.uniform(0, w), rng.uniform(0, h)] for _ in range(n_sites)])
    phases = np.array([[rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi)]
                       for _ in range(n_sites)])
    types = np.arange(n_sites) % g
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    def mask(f: int) -> np.ndarray:
        pos = sites + 15.0 * np.sin(2 * math.pi * f / 50.0 + phases)
        pos[:, 0] = np.clip(pos[:, 0], 0, w - 1)
        pos[:, 1] = np.clip(pos[:, 1], 0, h - 1)
        d = (xx[None] - pos[:, 0, None, None]) ** 2 + (yy[None] - pos[:, 1, None, None]) ** 2
        return types[d.argmin(axis=0)].astype(np.uint8)

    return mask


def _shading(spec: SceneSpec):
    """Per-frame smooth gain field: one slow sinusoid sweeping across the scene."""
    rng = SplitMix64(spec.seed).spawn(2)
    angle = rng.uniform(0.0, 2 * math.pi)
    phase = rng.uniform(0.0, 2 * math.pi)
    wavelength = max(spec.width, spec.height)
    yy, xx = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    proj = (xx * math.cos(angle) + yy * math.sin(angle)) / wavelength

    def field(f: int) -> np.ndarray:
        return 1.0 + spec.shading * np.sin(2 * math.pi * (proj + f / 60.0) + phase)

    return field


def render(mask: np.ndarray, textures, rng: SplitMix64, gain=1.0) -> np.ndarray:
    base = np.array([t[0] for t in textures], dtype=np.float64)
    amp = np.array([t[1] for t in textures], dtype=np.float64)
    noise = 2.0 * rng.uniform_array(mask.shape + (3,)) - 1.0
    img = base[mask] + amp[mask][..., None] * noise
    if np.ndim(gain):
        img *= gain[..., None]
    else:
        img *= gain
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def generate_scene(spec: SceneSpec):
    """``[(image, mask, pose), ...]`` for every frame; deterministic in ``spec.seed``."""
    layout = _bands_layout(spec) if spec.layout == "bands" else _voronoi_layout(spec)
    shade = _shading(spec) if spec.shading else (lambda f: 1.0)
    out = []
    for f in range(spec.frames):
        m = layout(f)
        rng = SplitMix64(spec.seed).spawn(1, f)
        gain = 1.0 + spec.illumination * (2.0 * rng.uniform() - 1.0)
        img = render(m, spec.textures, rng, gain * shade(f))
        out.append((img, m, PoseRecord(f, FRAME_STEP_M * f, 0.0, 0.0)))
    return out


def _purity_map(mask: np.ndarray, size: int) -> np.ndarray:
    """``pure[v, u]``: the size x size footprint centred at (u, v) is in-image and single-typed."""
    h, w = mask.shape
    pure = np.zeros((h, w), dtype=bool)
    if size > h or size > w:
        return pure
    half = size // 2
    for t in np.unique(mask):
        ii = np.zeros((h + 1, w + 1), dtype=np.int64)
        ii[1:, 1:] = np.cumsum(np.cumsum(mask == t, axis=0), axis=1)
        win = ii[size:, size:] - ii[:-size, size:] - ii[size:, :-size] + ii[:-size, :-size]
        pure[half:half + win.shape[0], half:half + win.shape[1]] |= win == size * size
    return pure


def derive_anchors(mask: np.ndarray, per_frame_count: int, min_margin: float, patch_size: int,
                   seed: int, frame_id: int = 0) -> list[AnchorPatch]:
    """Sample anchors whose whole footprint lies inside one ground-truth region.

    Returns an empty list (frame skipped) when the frame cannot provide two
    distinct labels.
    """
    if per_frame_count < 2:
        raise DataError("per_frame_count must be >= 2")
    if min_margin < patch_size / 2:
        raise DataError("min_margin must be >= patch_size / 2")
    if len(np.unique(mask)) < 2:
        return []
    h, w = mask.shape
    lo = math.ceil(min_margin)
    if w - 2 * lo <= 0 or h - 2 * lo <= 0:
        raise DataError("margin leaves no room for anchors")
    pure = _purity_map(mask, patch_size)
    rng = SplitMix64(seed).spawn(frame_id)
    anchors = []
    for _ in range(per_frame_count):
        for _ in range(PLACEMENT_ATTEMPTS):
            u = lo + rng.randint(w - 2 * lo)
            v = lo + rng.randint(h - 2 * lo)
            if pure[v, u]:
                anchors.append(AnchorPatch(frame_id, u, v, patch_size, int(mask[v, u])))
                break
        else:
            raise DataError(f"frame {frame_id}: no valid anchor placement after "
                            f"{PLACEMENT_ATTEMPTS} attempts")
    if len({a.label_id for a in anchors}) < 2:
        return []
    return anchors


def training_ids(frames: int, count: int) -> list[int]:
    count = min(count, frames)
    return [i * frames // count for i in range(count)] if count else []


def write_dataset(out_dir, spec: SceneSpec, subset_name: str, anchors_per_frame: int = 20,
                  patch_size: int = 64, train_count: int = 10) -> Path:
    """Write frames, masks, anchors, poses and a manifest; returns the manifest path."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    records, poses, anchors = [], [], []
    for img, m, pose in generate_scene(spec):
        f = pose.frame_id
        img_path = out / "frames" / f"frame_{f:05d}.ppm"
        write_image(img, img_path)
        write_image(m, out / "masks" / f"mask_{f:05d}.pgm")
        records.append(FrameRecord(f, img_path, len(poses)))
        poses.append(pose)
        anchors += derive_anchors(m, anchors_per_frame, patch_size / 2, patch_size, spec.seed, f)
    write_anchors(anchors, out / "anchors.csv")
    write_poses(poses, out / "poses.csv")
    manifest = DatasetManifest(subset_name, records, training_ids(spec.frames, train_count),
                               out / "anchors.csv", out / "poses.csv")
    path = out / "manifest.txt"
    write_manifest(manifest, path)
    return path

"""Bird's-eye semantic grid: flat-ground projection and per-cell label vote counts.

Camera frame: x right, y down, z forward.  Vehicle frame: x forward, y
left, z up, camera at the origin ``mount_height`` above the ground and
pitched down by ``pitch``.  World poses are planar (x, y, heading).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset_io import SENTINEL
from .errors import DataError

RANGE_GATE = 50.0
MIN_DOWNWARD = 1e-9


class ProjectionError(DataError):
    """Pixel ray does not hit the ground within range."""


@dataclass(frozen=True)
class CameraModel:
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 320.0
    cy: float = 240.0
    mount_height: float = 1.5
    pitch: float = 0.1

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DataError("focal lengths must be positive")
        if not self.mount_height > 0:
            raise DataError("mount height must be positive")


@dataclass(frozen=True)
class GridSpec:
    resolution: float = 0.2
    x_min: float = -5.0
    x_max: float = 60.0
    y_min: float = -20.0
    y_max: float = 20.0

    def __post_init__(self):
        if not self.resolution > 0:
            raise DataError("grid resolution must be positive")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise DataError("grid ranges must be non-empty")

    @property
    def shape(self) -> tuple[int, int]:
        """(nx, ny) cell counts."""
        return (math.ceil((self.x_max - self.x_min) / self.resolution - 1e-9),
                math.ceil((self.y_max - self.y_min) / self.resolution - 1e-9))

    def cell_of(self, x, y):
        ix = np.floor((np.asarray(x) - self.x_min) / self.resolution).astype(np.int64)
        iy = np.floor((np.asarray(y) - self.y_min) / self.resolution).astype(np.int64)
        return ix, iy

    def center(self, ix, iy):
        return (self.x_min + (np.asarray(ix) + 0.5) * self.resolution,
                self.y_min + (np.asarray(iy) + 0.5) * self.resolution)


def _camera_axes(pitch: float):
    """Camera right, down and forward unit axes expressed in the vehicle frame."""
    s, c = math.sin(pitch), math.cos(pitch)
    right = np.array([0.0, -1.0, 0.0])
    down = np.array([-s, 0.0, -c])
    forward = np.array([c, 0.0, -s])
    return right, down, forward


def pixels_to_vehicle(camera: CameraModel, u, v, range_gate: float = RANGE_GATE):
    """Vectorised ground intersection in the vehicle frame: ``(X, Y, ok)``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    rx = (u - camera.cx) / camera.fx
    ry = (v - camera.cy) / camera.fy
    s, c = math.sin(camera.pitch), math.cos(camera.pitch)
    downward = ry * c + s
    ok = downward > MIN_DOWNWARD
    t = np.where(ok, camera.mount_height / np.where(ok, downward, 1.0), 0.0)
    x = t * (c - ry * s)
    y = -t * rx
    ok &= np.hypot(x, y) <= range_gate
    return x, y, ok


def vehicle_to_world(pose, x, y):
    ch, sh = math.cos(pose.heading), math.sin(pose.heading)
    return pose.x + ch * x - sh * y, pose.y + sh * x + ch * y


def pixel_to_ground(camera: CameraModel, pose, pixel, range_gate: float = RANGE_GATE):
    """World ground point ``(x, y)`` seen at ``pixel`` = (u, v)."""
    u, v = pixel
    rx = (u - camera.cx) / camera.fx
    ry = (v - camera.cy) / camera.fy
    downward = ry * math.cos(camera.pitch) + math.sin(camera.pitch)
    if downward <= MIN_DOWNWARD:
        raise ProjectionError(f"pixel ({u},{v}) looks at or above the horizon")
    x, y, ok = pixels_to_vehicle(camera, u, v, range_gate)
    if not ok:
        raise ProjectionError(f"pixel ({u},{v}) hits the ground beyond {range_gate} m")
    wx, wy = vehicle_to_world(pose, float(x), float(y))
    return wx, wy


def ground_to_pixel(camera: CameraModel, pose, point):
    """Inverse of :func:`pixel_to_ground`: image coordinates of a world ground point."""
    dx, dy = point[0] - pose.x, point[1] - pose.y
    ch, sh = math.cos(pose.heading), math.sin(pose.heading)
    p = np.array([ch * dx + sh * dy, -sh * dx + ch * dy, -camera.mount_height])
    right, down, forward = _camera_axes(camera.pitch)
    zc = p @ forward
    if zc <= 1e-9:
        raise ProjectionError("point is behind the camera")
    return camera.cx + camera.fx * (p @ right) / zc, camera.cy + camera.fy * (p @ down) / zc


@dataclass
class SemanticGrid:
    spec: GridSpec
    num_labels: int
    counts: dict = field(default_factory=dict)  # (ix, iy) -> int64 array of num_labels
    projected: int = 0
    dropped: int = 0

    def copy(self) -> "SemanticGrid":
        return SemanticGrid(self.spec, self.num_labels,
                            {k: v.copy() for k, v in self.counts.items()},
                            self.projected, self.dropped)

    def total(self) -> int:
        return int(sum(v.sum() for v in self.counts.values()))

    def add_votes(self, ix, iy, labels) -> None:
        nx, ny = self.spec.shape
        key = (np.asarray(ix) * ny + np.asarray(iy)) * self.num_labels + np.asarray(labels)
        uniq, cnt = np.unique(key, return_counts=True)
        for k, n in zip(uniq.tolist(), cnt.tolist()):
            cell, lab = divmod(k, self.num_labels)
            c = divmod(cell, ny)
            vec = self.counts.get(c)
            if vec is None:
                vec = self.counts[c] = np.zeros(self.num_labels, dtype=np.int64)
            vec[lab] += n


_PROJECTION_CACHE: dict = {}


def _projected_pixels(camera: CameraModel, shape, range_gate: float):
    key = (camera, shape, range_gate)
    if key not in _PROJECTION_CACHE:
        h, w = shape
        vv, uu = np.mgrid[0:h, 0:w]
        _PROJECTION_CACHE.clear()
        _PROJECTION_CACHE[key] = pixels_to_vehicle(camera, uu, vv, range_gate)
    return _PROJECTION_CACHE[key]


def integrate_frame(grid: SemanticGrid, label_map, camera: CameraModel, pose,
                    range_gate: float = RANGE_GATE) -> None:
    """Add one vote per labelled pixel that projects into the grid."""
    labels = np.asarray(getattr(label_map, "labels", label_map))
    labelled = labels != SENTINEL
    if not labelled.any():
        return
    if labels[labelled].max() >= grid.num_labels:
        raise DataError("label map has labels beyond the grid's label count")
    x, y, ok = _projected_pixels(camera, labels.shape, range_gate)
    sel = labelled & ok
    wx, wy = vehicle_to_world(pose, x[sel], y[sel])
    ix, iy = grid.spec.cell_of(wx, wy)
    nx, ny = grid.spec.shape
    inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    grid.add_votes(ix[inside], iy[inside], labels[sel][inside].astype(np.int64))
    grid.projected += int(inside.sum())
    grid.dropped += int(labelled.sum() - inside.sum())


@dataclass
class GridSummary:
    cells: np.ndarray  # (M, 2) int: ix, iy sorted
    labels: np.ndarray  # (M,)
    confidence: np.ndarray  # (M,)
    totals: np.ndarray  # (M,)


def finalize(grid: SemanticGrid) -> GridSummary:
    """Majority label (ties to the lowest label) and max/total confidence per touched cell."""
    if not grid.counts:
        raise DataError("grid has no observations")
    keys = sorted(grid.counts)
    table = np.array([grid.counts[k] for k in keys])
    totals = table.sum(axis=1)
    labels = table.argmax(axis=1)
    conf = table.max(axis=1) / totals
    return GridSummary(np.array(keys, dtype=np.int64), labels, conf, totals)


def merge(a: SemanticGrid, b: SemanticGrid) -> SemanticGrid:
    if a.spec != b.spec or a.num_labels != b.num_labels:
        raise DataError("cannot merge grids with different specs")
    out = a.copy()
    for k, v in b.counts.items():
        if k in out.counts:
            out.counts[k] = out.counts[k] + v
        else:
            out.counts[k] = v.copy()
    out.projected += b.projected
    out.dropped += b.dropped
    return out


def write_grid_csv(summary: GridSummary, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_x", "cell_y", "label", "confidence", "total_count"])
        for (ix, iy), lab, c, t in zip(summary.cells, summary.labels, summary.confidence, summary.totals):
            w.writerow([int(ix), int(iy), int(lab), "%.17g" % c, int(t)])


def render_grid(summary: GridSummary, spec: GridSpec):
    """Bird's-eye label raster (SENTINEL where untouched) and confidence raster (NaN there).

    Row 0 is the largest y (vehicle left), column 0 the smallest x.
    """
    nx, ny = spec.shape
    labels = np.full((ny, nx), SENTINEL, dtype=np.uint8)
    conf = np.full((ny, nx), np.nan)
    rows = ny - 1 - summary.cells[:, 1]
    cols = summary.cells[:, 0]
    labels[rows, cols] = summary.labels
    conf[rows, cols] = summary.confidence
    return labels, conf


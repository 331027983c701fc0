"""Dataset loading and artifact writing.

Images are binary PPM (P6) / PGM (P5) with maxval 255.  Manifests, anchor
and pose files are small line-oriented text formats; see README for the
exact grammar.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .sampling import AnchorPatch

log = logging.getLogger(__name__)

ANCHOR_HEADER = ["frame_id", "center_u", "center_v", "patch_size", "label_id"]
POSE_HEADER = ["frame_id", "x", "y", "heading"]
SENTINEL = 255

# Fixed 16-colour palette for label renderings.
PALETTE = (
    (46, 204, 64), (0, 116, 217), (255, 220, 0), (255, 65, 54),
    (127, 219, 255), (177, 13, 201), (255, 133, 27), (1, 255, 112),
    (240, 18, 190), (57, 204, 204), (133, 20, 75), (61, 153, 112),
    (170, 170, 170), (0, 31, 63), (255, 255, 255), (128, 128, 0),
)


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    image_path: Path
    pose_index: int | None = None


@dataclass
class DatasetManifest:
    subset_name: str
    frames: list[FrameRecord]
    training_frame_ids: list[int]
    anchor_file: Path
    pose_file: Path | None = None
    path: Path | None = None

    def frame(self, frame_id: int) -> FrameRecord:
        for f in self.frames:
            if f.frame_id == frame_id:
                return f
        raise DataError(f"unknown frame_id {frame_id}")

    @property
    def test_frame_ids(self) -> list[int]:
        train = set(self.training_frame_ids)
        return [f.frame_id for f in self.frames if f.frame_id not in train]


@dataclass(frozen=True)
class PoseRecord:
    frame_id: int
    x: float
    y: float
    heading: float


def wrap_angle(a: float) -> float:
    """Map an angle into ``[-pi, pi)``; in-range values pass through unchanged."""
    if -math.pi <= a < math.pi:
        return a
    return (a + math.pi) % (2.0 * math.pi) - math.pi


# --------------------------------------------------------------------------
# Manifest


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    root = path.parent
    subset = None
    frames: list[FrameRecord] = []
    train: list[int] | None = None
    anchors = poses = None
    seen: set[int] = set()

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else root / q

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            parts = rest.split()
            try:
                if lineno == 1 or subset is None:
                    if key != "subset" or len(parts) != 1:
                        raise ValueError("first line must be 'subset <name>'")
                    subset = parts[0]
                elif key == "frame":
                    if len(parts) not in (2, 3):
                        raise ValueError("expected 'frame <id> <image_path> [<pose_index>]'")
                    fid = int(parts[0])
                    if fid < 0:
                        raise ValueError("frame_id must be non-negative")
                    if fid in seen:
                        raise DataError(f"{path}:{lineno}: duplicate frame_id {fid}")
                    seen.add(fid)
                    pose_index = int(parts[2]) if len(parts) == 3 else None
                    frames.append(FrameRecord(fid, resolve(parts[1]), pose_index))
                elif key == "train":
                    train = [int(t) for t in rest.replace(" ", "").split(",") if t]
                elif key == "anchors":
                    anchors = resolve(rest.strip())
                elif key == "poses":
                    poses = resolve(rest.strip())
                else:
                    raise ValueError(f"unknown directive {key!r}")
            except DataError:
                raise
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: parse error: {exc}") from None

    if subset is None:
        raise DataError(f"{path}:1: parse error: empty manifest")
    if not frames:
        raise DataError("manifest has no frames")
    if anchors is None:
        raise DataError(f"{path}: manifest has no 'anchors' line")
    train = train or []
    unknown = [t for t in train if t not in seen]
    if unknown:
        raise DataError(f"{path}: training frame ids not in manifest: {unknown}")
    for f in frames:
        if not f.image_path.is_file():
            raise DataError(f"missing file: {f.image_path}")
    for p in (anchors, poses):
        if p is not None and not p.is_file():
            raise DataError(f"missing file: {p}")
    return DatasetManifest(subset, frames, train, anchors, poses, path)


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    root = path.parent

    def rel(p: Path) -> str:
        try:
            return Path(p).relative_to(root).as_posix()
        except ValueError:
            return str(p)

    lines = [f"subset {manifest.subset_name}"]
    for f in manifest.frames:
        tail = f" {f.pose_index}" if f.pose_index is not None else ""
        lines.append(f"frame {f.frame_id} {rel(f.image_path)}{tail}")
    lines.append("train " + ",".join(str(t) for t in manifest.training_frame_ids))
    lines.append(f"anchors {rel(manifest.anchor_file)}")
    if manifest.pose_file is not None:
        lines.append(f"poses {rel(manifest.pose_file)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# PNM images


def _read_header(data: bytes, path) -> tuple[bytes, int, int, int, int]:
    """Parse ``magic width height maxval``; returns those plus the payload offset."""
    tokens: list[bytes] = []
    i, n = 0, len(data)
    while len(tokens) < 4:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise DataError(f"{path}: malformed header")
        tokens.append(data[start:i])
    if i >= n:
        raise DataError(f"{path}: malformed header")
    i += 1  # single whitespace byte before the raster
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise DataError(f"{path}: malformed header") from None
    if width < 1 or height < 1:
        raise DataError(f"{path}: malformed header (non-positive size)")
    return magic, width, height, maxval, i


def read_pnm(path) -> np.ndarray:
    """Read a P6 (H, W, 3) or P5 (H, W) image as uint8."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise DataError(f"missing file: {path}") from None
    magic, w, h, maxval, off = _read_header(data, path)
    if magic not in (b"P5", b"P6"):
        raise DataError(f"{path}: unsupported magic {magic.decode(errors='replace')!r}")
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval} (expected 255)")
    channels = 3 if magic == b"P6" else 1
    size = w * h * channels
    if len(data) - off < size:
        raise DataError(f"{path}: truncated payload ({len(data) - off} of {size} bytes)")
    arr = np.frombuffer(data, dtype=np.uint8, count=size, offset=off)
    return arr.reshape((h, w, 3) if channels == 3 else (h, w)).copy()


def load_image(path) -> np.ndarray:
    """Load an RGB frame; only P6 is accepted."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head != b"P6":
        raise DataError(f"{path}: unsupported magic {head.decode(errors='replace')!r}")
    return read_pnm(path)


def image_size(path) -> tuple[int, int]:
    """(width, height) from the header alone."""
    with open(path, "rb") as fh:
        data = fh.read(512)
    _, w, h, _, _ = _read_header(data, path)
    return w, h


def _write_pnm(arr: np.ndarray, path) -> None:
    magic = b"P6" if arr.ndim == 3 else b"P5"
    h, w = arr.shape[:2]
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(arr, dtype=np.uint8).tobytes())
    os.replace(tmp, path)


def colorize(labels: np.ndarray, palette=PALETTE) -> np.ndarray:
    present = np.unique(labels[labels != SENTINEL])
    for lab in present:
        if lab >= len(palette):
            raise DataError(f"unmapped label {int(lab)}")
    lut = np.zeros((256, 3), dtype=np.uint8)
    lut[: len(palette)] = np.asarray(palette, dtype=np.uint8)
    lut[SENTINEL] = 0
    return lut[labels]


def confidence_to_gray(conf: np.ndarray) -> np.ndarray:
    """Scale [0, 1] to 0..255 rounding half up; NaN (uncovered) becomes 0."""
    c = np.nan_to_num(np.asarray(conf, dtype=np.float64), nan=0.0)
    return np.floor(np.clip(c, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_image(image, path, palette=None) -> None:
    """Write an image, label map or confidence grid.

    * (H, W, 3) uint8 -> P6 as is
    * (H, W) integer labels with ``palette`` -> colourised P6 (sentinel 255 is black)
    * (H, W) integer labels without palette -> raw P5
    * (H, W) float confidence in [0, 1] -> P5 scaled to 0..255
    """
    arr = getattr(image, "labels", image)
    arr = np.asarray(arr)
    if arr.ndim == 3:
        if arr.shape[2] != 3:
            raise DataError("RGB image must have 3 channels")
        _write_pnm(arr.astype(np.uint8), path)
    elif arr.ndim == 2 and np.issubdtype(arr.dtype, np.floating):
        _write_pnm(confidence_to_gray(arr), path)
    elif arr.ndim == 2:
        if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
            raise DataError("label values must lie in 0..255")
        arr = arr.astype(np.uint8)
        _write_pnm(colorize(arr, palette) if palette is not None else arr, path)
    else:
        raise DataError(f"cannot write array of shape {arr.shape}")


# --------------------------------------------------------------------------
# Anchors and poses


def _read_csv(path, header: list[str]):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != header:
        raise DataError(f"{path}:1: expected header {','.join(header)}")
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        yield lineno, row


def parse_anchor(row, where: str = "") -> AnchorPatch:
    try:
        fid, u, v, size, label = (int(c) for c in row)
    except ValueError:
        raise DataError(f"{where}: parse error in anchor record {','.join(row)}") from None
    if size < 1:
        raise DataError(f"{where}: invalid patch_size {size}")
    return AnchorPatch(fid, u, v, size, label)


def load_anchors(path, image_sizes: dict[int, tuple[int, int]] | None = None) -> dict[int, list[AnchorPatch]]:
    """Anchors grouped by frame.

    ``image_sizes`` maps frame_id to (width, height); when given, anchor
    centres are checked against the image bounds.
    """
    grouped: dict[int, list[AnchorPatch]] = {}
    for lineno, row in _read_csv(path, ANCHOR_HEADER):
        a = parse_anchor(row, f"{path}:{lineno}")
        if image_sizes is not None:
            if a.frame_id not in image_sizes:
                raise DataError(f"{path}:{lineno}: anchor on unknown frame {a.frame_id}")
            w, h = image_sizes[a.frame_id]
            if not (0 <= a.center_u < w and 0 <= a.center_v < h):
                raise DataError(
                    f"{path}:{lineno}: anchor center ({a.center_u},{a.center_v}) "
                    f"outside {w}x{h} image bounds")
        grouped.setdefault(a.frame_id, []).append(a)
    return grouped


def write_anchors(anchors, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ANCHOR_HEADER)
        for a in anchors:
            w.writerow([a.frame_id, a.center_u, a.center_v, a.size, a.label_id])


def load_poses(path) -> list[PoseRecord]:
    poses = []
    for lineno, row in _read_csv(path, POSE_HEADER):
        try:
            fid = int(row[0])
            x, y, heading = (float(c) for c in row[1:])
        except ValueError:
            raise DataError(f"{path}:{lineno}: parse error in pose record") from None
        if not all(map(math.isfinite, (x, y, heading))):
            raise DataError(f"{path}:{lineno}: non-finite pose")
        poses.append(PoseRecord(fid, x, y, wrap_angle(heading)))
    return poses


def write_poses(poses, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POSE_HEADER)
        for p in poses:
            w.writerow([p.frame_id, repr(float(p.x)), repr(float(p.y)), repr(float(p.heading))])


# --------------------------------------------------------------------------
# Loaded dataset


@dataclass
class Dataset:
    """A manifest with its anchors and poses loaded and cross-validated."""

    manifest: DatasetManifest
    anchors: dict[int, list[AnchorPatch]]
    poses: list[PoseRecord] = field(default_factory=list)
    _cache: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @classmethod
    def open(cls, manifest_path) -> "Dataset":
        m = load_manifest(manifest_path)
        sizes = {f.frame_id: image_size(f.image_path) for f in m.frames}
        anchors = load_anchors(m.anchor_file, sizes)
        poses = load_poses(m.pose_file) if m.pose_file is not None else []
        for f in m.frames:
            if f.pose_index is not None and not 0 <= f.pose_index < len(poses):
                raise DataError(f"frame {f.frame_id}: pose_index {f.pose_index} out of range")
        return cls(m, anchors, poses)

    @property
    def name(self) -> str:
        return self.manifest.subset_name

    def image(self, frame_id: int) -> np.ndarray:
        if frame_id not in self._cache:
            self._cache[frame_id] = load_image(self.manifest.frame(frame_id).image_path)
        return self._cache[frame_id]

    def pose(self, frame_id: int) -> PoseRecord:
        rec = self.manifest.frame(frame_id)
        if rec.pose_index is None:
            raise DataError(f"frame {frame_id} has no pose")
        return self.poses[rec.pose_index]

    def eligible(self, frame_ids) -> list[int]:
        """Frames carrying at least two distinct anchor labels."""
        out = []
        for fid in frame_ids:
            if len({a.label_id for a in self.anchors.get(fid, [])}) >= 2:
                out.append(fid)
        return out

    def training_frames(self) -> list[int]:
        ids = self.manifest.training_frame_ids
        ok = self.eligible(ids)
        if len(ok) < len(ids):
            log.warning("%s: skipped %d training frames with fewer than two anchor labels",
                        self.name, len(ids) - len(ok))
        return ok

    def counts(self) -> dict[str, int]:
        """Frame / training-frame / training-anchor counts, one column of a statistics table."""
        train = set(self.manifest.training_frame_ids)
        return {
            "total_frames": len(self.manifest.frames),
            "training_frames": len(train),
            "anchors": sum(len(v) for k, v in self.anchors.items() if k in train),
        }

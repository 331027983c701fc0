"""Spherical k-means over unit-norm embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError
from .rng import SplitMix64

CLUSTER_HEADER = "terragrain-clusters v1"


@dataclass
class ClusterModel:
    centroids: np.ndarray  # (K, D), unit rows
    inertia: float = 0.0
    history: list[float] = field(default_factory=list)  # inertia after each assignment

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # explicit difference form keeps exact zeros for coincident points
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _normalize(v: np.ndarray) -> np.ndarray | None:
    n = np.linalg.norm(v)
    return None if n < 1e-12 else v / n


def _kmeans_pp(x: np.ndarray, k: int, rng: SplitMix64) -> np.ndarray:
    n = x.shape[0]
    chosen = [rng.randint(n)]
    d2 = _sq_dists(x, x[chosen]).min(axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass is zero: take the first unused point
            idx = next(i for i in range(n) if i not in chosen)
        else:
            r = rng.uniform() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(x, x[[idx]])[:, 0])
    return x[chosen].copy()


def fit_kmeans(embeddings, k: int, seed: int = 0, max_iters: int = 100,
               tol: float = 1e-6) -> ClusterModel:
    """k-means++ seeding then Lloyd iterations with centroids renormalised to unit length.

    Stops after ``max_iters`` or when the relative inertia change drops
    below ``tol``.  An empty cluster is re-seeded at the point farthest from
    its assigned centroid.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("embeddings must be an (N, D) array")
    if k < 1:
        raise DataError("K must be >= 1")
    if x.shape[0] < k:
        raise DataError(f"fewer points ({x.shape[0]}) than clusters ({k})")
    if np.any(np.abs(np.linalg.norm(x, axis=1) - 1.0) > 1e-6):
        raise NumericError("k-means input must be unit-norm")

    rng = SplitMix64(seed)
    c = _kmeans_pp(x, k, rng)
    history: list[float] = []
    for _ in range(max_iters):
        d2 = _sq_dists(x, c)
        assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(len(x)), assign].sum())
        if history:
            prev = history[-1]
            if abs(prev - inertia) <= tol * max(prev, 1e-300):
                history.append(inertia)
                break
        history.append(inertia)

        new = c.copy()
        for j in range(k):
            members = x[assign == j]
            if len(members):
                m = _normalize(members.sum(axis=0))
                if m is not None:
                    new[j] = m
        counts = np.bincount(assign, minlength=k)
        for j in np.flatnonzero(counts == 0):
            own = _sq_dists(x, new)[np.arange(len(x)), assign]
            far = int(own.argmax())
            new[j] = x[far]
            assign[far] = j
        c = new

    d2 = _sq_dists(x, c)
    inertia = float(d2.min(axis=1).sum())
    if inertia != history[-1]:
        history.append(inertia)
    return ClusterModel(c, inertia, history)


def assign(model: ClusterModel, z):
    """Best-matching prototype: ``(label, exp(z . centroid))``; ties go to the lowest index."""
    if model.k == 0:
        raise DataError("empty cluster model")
    dots = model.centroids @ np.asarray(z, dtype=np.float64)
    c = int(np.argmax(dots))
    return c, math.exp(float(dots[c]))


def assign_batch(model: ClusterModel, z: np.ndarray):
    """Vectorised :func:`assign` for an (N, D) array; returns (labels, similarities)."""
    if model.k == 0:
        raise DataError("empty cluster model")
    dots = np.asarray(z, dtype=np.float64) @ model.centroids.T
    labels = dots.argmax(axis=1)
    return labels, np.exp(dots[np.arange(len(labels)), labels])


def save_clusters(model: ClusterModel, path) -> None:
    k, d = model.centroids.shape
    lines = [CLUSTER_HEADER, f"{k} {d}"]
    lines += [" ".join("%.17g" % v for v in row) for row in model.centroids]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_clusters(path) -> ClusterModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    lines = [l for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]
    if not lines or lines[0].strip() != CLUSTER_HEADER:
        raise DataError(f"{path}:1: expected header {CLUSTER_HEADER!r}")
    try:
        k, d = (int(t) for t in lines[1].split())
        rows = [[float(v) for v in l.split()] for l in lines[2:]]
        c = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: malformed centroid file ({exc})") from None
    if c.shape != (k, d):
        raise DataError(f"{path}: expected {k}x{d} centroids, got shape {c.shape}")
    return ClusterModel(c)

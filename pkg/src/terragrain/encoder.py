"""Projection head ``f_theta``: affine -> tanh -> affine -> L2 normalise.

All arithmetic is float64.  Inputs may be a single feature vector or an
(N, in) batch; gradients from a batch are summed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError
from .rng import SplitMix64

NORM_GUARD = 1e-12
DEGENERATE_NORM = 1e-9
MODEL_HEADER = "terragrain-encoder v1"
DEFAULT_SIZES = (156, 64, 32)


@dataclass
class EncoderParams:
    sizes: tuple[int, int, int]
    w1: np.ndarray  # (H, in)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (D, H)
    b2: np.ndarray  # (D,)

    NAMES = ("w1", "b1", "w2", "b2")

    def tensors(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.sizes, *(t.copy() for t in self.tensors()))

    def zeros_like(self) -> "EncoderParams":
        return EncoderParams(self.sizes, *(np.zeros_like(t) for t in self.tensors()))

    def vector(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    def with_vector(self, v: np.ndarray) -> "EncoderParams":
        out, i = [], 0
        for t in self.tensors():
            out.append(np.asarray(v[i:i + t.size], dtype=np.float64).reshape(t.shape).copy())
            i += t.size
        return EncoderParams(self.sizes, *out)


def init_params(seed: int, sizes=DEFAULT_SIZES) -> EncoderParams:
    """Glorot-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 3 or min(sizes) <= 0:
        raise ValueError(f"layer sizes must be three positive integers, got {sizes}")
    n_in, hidden, dim = sizes
    rng = SplitMix64(seed)

    def glorot(fan_out, fan_in):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return (2.0 * rng.uniform_array((fan_out, fan_in)) - 1.0) * bound

    w1 = glorot(hidden, n_in)
    w2 = glorot(dim, hidden)
    return EncoderParams(sizes, w1, np.zeros(hidden), w2, np.zeros(dim))


def _pre_norm(params: EncoderParams, x: np.ndarray):
    if x.shape[-1] != params.sizes[0]:
        raise DataError(f"feature length {x.shape[-1]} does not match encoder input {params.sizes[0]}")
    h = np.tanh(x @ params.w1.T + params.b1)
    y = h @ params.w2.T + params.b2
    n = np.linalg.norm(y, axis=-1, keepdims=True)
    if np.any(n < DEGENERATE_NORM):
        raise NumericError("degenerate pre-normalisation norm (embedding collapsed to zero)")
    return h, y, n


def forward(params: EncoderParams, features) -> np.ndarray:
    """Unit-norm embedding(s) for a feature vector or an (N, in) batch."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    _, y, n = _pre_norm(params, np.atleast_2d(x))
    z = y / (n + NORM_GUARD)
    return z[0] if single else z


def backward(params: EncoderParams, features, upstream) -> EncoderParams:
    """Parameter gradients given dL/dz for each embedding (summed over the batch)."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    h, y, n = _pre_norm(params, x)
    z = y / (n + NORM_GUARD)
    # d z / d y = (I - z z^T) / |y|
    gy = (g - z * np.sum(g * z, axis=1, keepdims=True)) / (n + NORM_GUARD)
    gw2 = gy.T @ h
    gb2 = gy.sum(axis=0)
    ga = (gy @ params.w2) * (1.0 - h * h)
    gw1 = ga.T @ x
    gb1 = ga.sum(axis=0)
    return EncoderParams(params.sizes, gw1, gb1, gw2, gb2)


def similarity(z_i, z_j) -> float:
    """Exponential cosine similarity ``exp(z_i . z_j)`` of two unit vectors."""
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    for z in (z_i, z_j):
        if abs(np.linalg.norm(z) - 1.0) > 1e-3:
            raise NumericError("similarity requires unit-norm embeddings")
    return math.exp(float(z_i @ z_j))


# --------------------------------------------------------------------------
# Model file


def _fmt(values: np.ndarray) -> str:
    return " ".join("%.17g" % v for v in values.ravel())


def save_params(params: EncoderParams, path) -> None:
    lines = [MODEL_HEADER, " ".join(str(s) for s in params.sizes)]
    for name, t in zip(EncoderParams.NAMES, params.tensors()):
        shape = "x".join(str(d) for d in t.shape)
        lines.append(f"{name} {shape} {_fmt(t)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_params(path) -> EncoderParams:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise DataError(f"{path}:1: expected header {MODEL_HEADER!r}")
    try:
        sizes = tuple(int(s) for s in lines[1].split())
        tensors = {}
        for lineno, line in enumerate(lines[2:], start=3):
            if not line.strip():
                continue
            name, shape, *vals = line.split()
            dims = tuple(int(d) for d in shape.split("x"))
            arr = np.array([float(v) for v in vals], dtype=np.float64)
            if arr.size != math.prod(dims):
                raise DataError(f"{path}:{lineno}: {name} has {arr.size} values, shape {shape}")
            tensors[name] = arr.reshape(dims)
        params = EncoderParams(sizes, *(tensors[n] for n in EncoderParams.NAMES))
    except (ValueError, KeyError, IndexError) as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from None
    n_in, hidden, dim = sizes
    expected = [(hidden, n_in), (hidden,), (dim, hidden), (dim,)]
    if [t.shape for t in params.tensors()] != expected:
        raise DataError(f"{path}: tensor shapes inconsistent with sizes {sizes}")
    if not all(np.all(np.isfinite(t)) for t in params.tensors()):
        raise NumericError(f"{path}: non-finite parameters")
    return params

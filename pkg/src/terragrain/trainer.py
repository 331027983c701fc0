"""InfoNCE training of the projection head over per-frame anchor samples."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import encoder
from .errors import DataError, NumericError
from .featurizer import feature_dim, featurize_crops
from .rng import SplitMix64
from .sampling import augment, compose_sample, sample_batch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    temperature: float = 0.1
    steps: int = 3000
    learning_rate: float = 0.01
    momentum: float = 0.9
    negatives: int = 10
    fg_size: int = 64
    bg_size: int = 320
    seed: int = 0
    augmentation: bool = True
    background: bool = True
    hidden_size: int = 64
    embedding_dim: int = 32

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.background and self.bg_size < self.fg_size:
            raise ValueError("bg_size must be >= fg_size")

    @property
    def bg(self) -> int | None:
        return self.bg_size if self.background else None

    @property
    def sizes(self) -> tuple[int, int, int]:
        return feature_dim(self.background), self.hidden_size, self.embedding_dim

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class LossReport:
    losses: list[float] = field(default_factory=list)
    window: int = 100

    @property
    def final_average(self) -> float:
        tail = self.losses[-self.window:]
        return sum(tail) / len(tail)

    def average_at(self, step: int) -> float:
        """Mean of the ``window`` losses ending at 1-based ``step``."""
        chunk = self.losses[max(0, step - self.window):step]
        return sum(chunk) / len(chunk)

    def write_csv(self, path) -> None:
        lines = ["step,loss"] + [f"{i},{l!r}" for i, l in enumerate(self.losses, start=1)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class TrainState:
    params: encoder.EncoderParams
    velocity: encoder.EncoderParams

    @classmethod
    def fresh(cls, params: encoder.EncoderParams) -> "TrainState":
        return cls(params, params.zeros_like())


@dataclass
class TrainingFrame:
    frame_id: int
    image: np.ndarray
    anchors: list


def training_frames(dataset) -> list[TrainingFrame]:
    """Eligible (>= 2 labels) training frames of a :class:`~terragrain.dataset_io.Dataset`."""
    return [TrainingFrame(fid, dataset.image(fid), dataset.anchors[fid])
            for fid in dataset.training_frames()]


def info_nce_loss(z_q, z_pos, z_negs, tau: float):
    """InfoNCE loss for one query and its gradients w.r.t. every embedding.

    Returns ``(loss, grad_q, grad_pos, grad_negs)``.
    """
    if not tau > 0:
        raise ValueError("temperature must be positive")
    z_q = np.asarray(z_q, dtype=np.float64)
    z_pos = np.asarray(z_pos, dtype=np.float64)
    z_negs = np.atleast_2d(np.asarray(z_negs, dtype=np.float64))
    if z_negs.shape[0] == 0 or z_negs.size == 0:
        raise ValueError("InfoNCE needs at least one negative")
    logits = np.concatenate([[z_q @ z_pos], z_negs @ z_q]) / tau
    m = logits.max()
    lse = m + math.log(np.exp(logits - m).sum())
    loss = lse - logits[0]
    p = np.exp(logits - lse)
    coef = p.copy()
    coef[0] -= 1.0
    coef /= tau
    grad_q = coef[0] * z_pos + coef[1:] @ z_negs
    grad_pos = coef[0] * z_q
    grad_negs = coef[1:, None] * z_q[None, :]
    return max(loss, 0.0), grad_q, grad_pos, grad_negs


def batch_loss(params, features: np.ndarray, tau: float):
    """Loss and parameter gradients for rows ``[query, positive, negatives...]``."""
    z = encoder.forward(params, features)
    loss, gq, gp, gn = info_nce_loss(z[0], z[1], z[2:], tau)
    upstream = np.vstack([gq, gp, gn])
    return loss, encoder.backward(params, features, upstream)


def sample_features(frames: list[TrainingFrame], config: TrainConfig, rng: SplitMix64) -> np.ndarray:
    frame = frames[rng.randint(len(frames))]
    query = frame.anchors[rng.randint(len(frame.anchors))]
    batch = sample_batch(frame.anchors, query, frame.image, rng,
                         config.fg_size, config.bg, config.negatives)
    crops = [batch.query, batch.positive, *batch.negatives]
    if config.augmentation:
        crops = [augment(c, rng) for c in crops]
    return featurize_crops(crops)


def train_step(state: TrainState, frames: list[TrainingFrame], config: TrainConfig,
               rng: SplitMix64) -> float:
    """One SGD-with-momentum step on a freshly sampled batch; updates ``state`` in place."""
    if not frames:
        raise DataError("no eligible training frame (need >= 2 distinct anchor labels)")
    x = sample_features(frames, config, rng)
    loss, grads = batch_loss(state.params, x, config.temperature)
    if not math.isfinite(loss):
        raise NumericError("non-finite training loss")
    for p, v, g in zip(state.params.tensors(), state.velocity.tensors(), grads.tensors()):
        v *= config.momentum
        v += g
        p -= config.learning_rate * v
    return loss


def train(dataset, config: TrainConfig, progress=None):
    """Train from ``init_params(config.seed)``; returns ``(params, LossReport)``.

    ``dataset`` is a Dataset or a prepared list of TrainingFrame.
    """
    frames = dataset if isinstance(dataset, list) else training_frames(dataset)
    if not frames:
        raise DataError("no eligible training frame (need >= 2 distinct anchor labels)")
    state = TrainState.fresh(encoder.init_params(config.seed, config.sizes))
    rng = SplitMix64(config.seed).spawn(1)
    report = LossReport()
    for step in range(1, config.steps + 1):
        report.losses.append(train_step(state, frames, config, rng))
        if progress is not None and step % 500 == 0:
            progress(step, report.average_at(step))
    return state.params, report


def embed_anchors(params, image: np.ndarray, anchors, config: TrainConfig) -> np.ndarray:
    """Embeddings of anchors at their annotated centres, without augmentation."""
    if not anchors:
        return np.zeros((0, params.sizes[2]))
    crops = [compose_sample(image, (a.center_u, a.center_v), config.fg_size, config.bg)
             for a in anchors]
    return encoder.forward(params, featurize_crops(crops))


def embed_training_anchors(params, dataset, config: TrainConfig, frame_ids=None) -> np.ndarray:
    ids = dataset.manifest.training_frame_ids if frame_ids is None else frame_ids
    parts = [embed_anchors(params, dataset.image(fid), dataset.anchors.get(fid, []), config)
             for fid in ids if dataset.anchors.get(fid)]
    if not parts:
        raise DataError(f"{dataset.name}: no anchors on the requested frames")
    return np.vstack(parts)

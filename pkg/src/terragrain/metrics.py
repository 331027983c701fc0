"""Anchor accuracy and the cross-scene / K-sweep evaluation harness."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import clustering
from .errors import DataError
from .trainer import TrainConfig, embed_anchors, embed_training_anchors, train

REPORT_HEADER = ["train_subset", "test_subset", "K", "bg_size", "mean_R", "frames_evaluated"]


def anchor_accuracy(anchor_labels, cluster_assignments) -> float:
    """Fraction of ordered anchor pairs whose same/different label relation the clustering keeps.

    Pairs with equal labels count when they share a cluster; pairs with
    different labels count when their clusters differ.  This is the Rand
    index over ordered pairs.
    """
    labels = np.asarray(anchor_labels)
    clusters = np.asarray(cluster_assignments)
    n = len(labels)
    if n < 2:
        raise DataError("anchor accuracy needs at least two anchors")
    if len(clusters) != n:
        raise DataError("one cluster assignment per anchor required")
    same_label = labels[:, None] == labels[None, :]
    same_cluster = clusters[:, None] == clusters[None, :]
    agree = same_label == same_cluster
    np.fill_diagonal(agree, False)
    return agree.sum() / (n * (n - 1))


def evaluate_frame(image, anchors, params, clusters, config: TrainConfig) -> float:
    if not anchors:
        raise DataError("frame has no anchors")
    z = embed_anchors(params, image, anchors, config)
    assigned, _ = clustering.assign_batch(clusters, z)
    return anchor_accuracy([a.label_id for a in anchors], assigned)


def evaluate_subset(dataset, params, clusters, config: TrainConfig, frame_ids=None):
    """Per-frame R on the held-out frames (or ``frame_ids``) having >= 2 anchors."""
    ids = dataset.manifest.test_frame_ids if frame_ids is None else frame_ids
    scores = {}
    for fid in ids:
        anchors = dataset.anchors.get(fid, [])
        if len(anchors) >= 2:
            scores[fid] = evaluate_frame(dataset.image(fid), anchors, params, clusters, config)
    return scores


@dataclass
class EvalRow:
    train_subset: str
    test_subset: str
    k: int
    bg_size: int
    mean_r: float
    frames_evaluated: int
    per_frame: dict = field(default_factory=dict, repr=False)


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def mean(self, test_subset: str | None = None, k: int | None = None) -> float:
        sel = [r.mean_r for r in self.rows
               if (test_subset is None or r.test_subset == test_subset) and (k is None or r.k == k)]
        return float(np.mean(sel))

    def k_curve(self, test_subset: str) -> dict[int, float]:
        return {r.k: r.mean_r for r in self.rows if r.test_subset == test_subset}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            for r in self.rows:
                w.writerow([r.train_subset, r.test_subset, r.k, r.bg_size,
                            "%.6f" % r.mean_r, r.frames_evaluated])


def cross_scene_eval(train_subset, test_subsets, config: TrainConfig, k_values,
                     params=None, kmeans_seed: int | None = None) -> EvalReport:
    """Train once on ``train_subset`` (unless ``params`` is given), then for each K
    fit prototypes on the training anchors and score each test subset's held-out frames.

    Frames are weighted equally in the mean.
    """
    if params is None:
        params, _ = train(train_subset, config)
    z = embed_training_anchors(params, train_subset, config)
    seed = config.seed if kmeans_seed is None else kmeans_seed
    report = EvalReport()
    for k in k_values:
        model = clustering.fit_kmeans(z, k, seed=seed)
        for test in test_subsets:
            scores = evaluate_subset(test, params, model, config)
            if not scores:
                raise DataError(f"{test.name}: no held-out frame with >= 2 anchors")
            report.rows.append(EvalRow(
                train_subset.name, test.name, k, config.bg_size if config.background else 0,
                float(np.mean(list(scores.values()))), len(scores), scores))
    return report

import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from terragrain import encoder
from terragrain.clustering import ClusterModel
from terragrain.dataset_io import Dataset
from terragrain.errors import DataError
from terragrain.featurizer import featurize
from terragrain.metrics import (EvalReport, anchor_accuracy, cross_scene_eval, evaluate_frame,
                                evaluate_subset)
from terragrain.sampling import AnchorPatch, compose_sample
from terragrain.trainer import TrainConfig


def brute_force(labels, clusters):
    n = len(labels)
    good = 0
    for i, j in itertools.permutations(range(n), 2):
        same_label = labels[i] == labels[j]
        same_cluster = clusters[i] == clusters[j]
        good += (same_label and same_cluster) or (not same_label and not same_cluster)
    return good / (n * (n - 1))


def test_examples():
    assert anchor_accuracy(["a", "a", "b"], [0, 0, 1]) == 1.0
    assert anchor_accuracy(["a", "a", "b"], [0, 0, 0]) == 2 / 6


def test_brute_force_oracle_100_instances():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 11))
        labels = rng.integers(0, 4, n).tolist()
        clusters = rng.integers(0, 4, n).tolist()
        assert anchor_accuracy(labels, clusters) == brute_force(labels, clusters)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=2, max_size=10),
       st.randoms())
def test_bounds_and_reordering(pairs, rnd):
    labels, clusters = zip(*pairs)
    r = anchor_accuracy(labels, clusters)
    assert 0 <= r <= 1
    perm = list(range(len(pairs)))
    rnd.shuffle(perm)
    assert anchor_accuracy([labels[i] for i in perm], [clusters[i] for i in perm]) == r


@given(st.lists(st.integers(0, 3), min_size=2, max_size=10))
def test_perfect_iff_partitions_agree(labels):
    relabel = [7 - l for l in labels]
    assert anchor_accuracy(labels, relabel) == 1.0


def test_errors():
    with pytest.raises(DataError):
        anchor_accuracy([0], [0])
    with pytest.raises(DataError):
        anchor_accuracy([0, 1], [0])


def _two_anchor_setup(labels):
    img = np.full((64, 64, 3), 90, np.uint8)
    anchors = [AnchorPatch(0, 20, 40, 8, labels[0]), AnchorPatch(0, 44, 40, 8, labels[1])]
    cfg = TrainConfig(fg_size=8, bg_size=16, hidden_size=8, embedding_dim=4)
    params = encoder.init_params(0, cfg.sizes)
    params.b2 += 0.3
    z = encoder.forward(params, featurize(compose_sample(img, (20, 40), 8, 16)))
    c = np.eye(5, 4)
    c[3] = z
    return img, anchors, params, ClusterModel(c), cfg


def test_two_anchors_same_label_same_cluster():
    img, anchors, params, clusters, cfg = _two_anchor_setup([1, 1])
    assert evaluate_frame(img, anchors, params, clusters, cfg) == 1.0


def test_two_anchors_different_label_same_cluster():
    img, anchors, params, clusters, cfg = _two_anchor_setup([0, 1])
    assert evaluate_frame(img, anchors, params, clusters, cfg) == 0.0


def test_evaluate_frame_without_anchors():
    img, _, params, clusters, cfg = _two_anchor_setup([0, 1])
    with pytest.raises(DataError):
        evaluate_frame(img, [], params, clusters, cfg)


QUICK = TrainConfig(steps=20, fg_size=16, bg_size=48, hidden_size=8, embedding_dim=4)


def test_cross_scene_report_shape(tiny_manifest, tmp_path):
    ds = Dataset.open(tiny_manifest)
    report = cross_scene_eval(ds, [ds, ds], QUICK, [2, 3, 4])
    assert len(report.rows) == 3 * 2
    for row in report.rows:
        assert 0 <= row.mean_r <= 1
        assert row.frames_evaluated == len(row.per_frame) == 3
        # frame-weighted mean of the per-frame values
        assert row.mean_r == pytest.approx(np.mean(list(row.per_frame.values())))
    report.write_csv(tmp_path / "eval.csv")
    lines = (tmp_path / "eval.csv").read_text().splitlines()
    assert lines[0] == "train_subset,test_subset,K,bg_size,mean_R,frames_evaluated"
    assert lines[1].startswith("tiny,tiny,2,48,")
    assert set(report.k_curve("tiny")) == {2, 3, 4}


def test_held_out_frames_only(tiny_manifest):
    ds = Dataset.open(tiny_manifest)
    from terragrain.trainer import train
    params, _ = train(ds, QUICK)
    clusters = ClusterModel(np.eye(3, 4))
    scores = evaluate_subset(ds, params, clusters, QUICK)
    assert set(scores) == set(ds.manifest.test_frame_ids)


def test_background_off_reports_zero_bg(tiny_manifest):
    ds = Dataset.open(tiny_manifest)
    cfg = TrainConfig(steps=5, fg_size=16, bg_size=48, background=False, hidden_size=8,
                      embedding_dim=4)
    report = cross_scene_eval(ds, [ds], cfg, [2])
    assert report.rows[0].bg_size == 0


def test_report_mean():
    from terragrain.metrics import EvalRow
    r = EvalReport([EvalRow("a", "b", 4, 320, 0.5, 3), EvalRow("a", "c", 4, 320, 1.0, 2)])
    assert r.mean() == 0.75 and r.mean("b") == 0.5

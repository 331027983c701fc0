import numpy as np
import pytest

from terragrain.dataset_io import Dataset
from terragrain.synthgen import SceneSpec, write_dataset

# Shared by the acceptance suite and the slow end-to-end tests.
SCENE_A = dict(seed=1, layout="bands", frames=30, illumination=0.25, bands_per_type=2)
SCENE_B = dict(seed=2, layout="voronoi", frames=30, illumination=0.25)

_SUMMARY: list[str] = []


def record(line: str) -> None:
    _SUMMARY.append(line)


def pytest_terminal_summary(terminalreporter):
    if _SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in _SUMMARY:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def scene_a(tmp_path_factory):
    path = write_dataset(tmp_path_factory.mktemp("scene_a"), SceneSpec(**SCENE_A), "bands1")
    return Dataset.open(path)


@pytest.fixture(scope="session")
def scene_b(tmp_path_factory):
    path = write_dataset(tmp_path_factory.mktemp("scene_b"), SceneSpec(**SCENE_B), "voronoi2")
    return Dataset.open(path)


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """Six 160x120 frames with 16-pixel anchors; small enough for quick CLI runs."""
    spec = SceneSpec(seed=5, width=160, height=120, frames=6)
    return write_dataset(tmp_path_factory.mktemp("tiny"), spec, "tiny",
                         anchors_per_frame=8, patch_size=16, train_count=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def trained_bg(scene_a):
    """Encoder trained with default settings on scene A (background on); (params, report, seconds)."""
    import time
    from terragrain.trainer import TrainConfig, train
    t = time.perf_counter()
    params, report = train(scene_a, TrainConfig())
    return params, report, time.perf_counter() - t


@pytest.fixture(scope="session")
def trained_nobg(scene_a):
    from terragrain.trainer import TrainConfig, train
    params, report = train(scene_a, TrainConfig(background=False))
    return params, report

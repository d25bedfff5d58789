import os
from pathlib import Path

import numpy as np
import pytest

from core.memory_core import Hyperparams, learn_pattern, new_store
from utils.idx_ingest import IDX_IMAGE_MAGIC, Precision, RawImageSet, load_idx, normalize, patterns, serialize_idx

ROWS = 28
COLS = 28
RECALL_SIZE = ROWS * COLS

MNIST_NAMES = ("train-images-idx3-ubyte", "train-images-idx3-ubyte.gz")


@pytest.fixture(autouse=True)
def isolated_home(tmp_path, monkeypatch):
    home = tmp_path / "home"
    monkeypatch.setenv("CUEBALL_HOME", str(home))
    return home


@pytest.fixture
def rng():
    return np.random.default_rng(20190101)


def random_images(rng, count, size=RECALL_SIZE, density=0.4):
    """Sparse 8-bit images, each with at least one lit pixel"""
    images = rng.integers(0, 256, size=(count, size), dtype=np.uint8)
    images[rng.random((count, size)) > density] = 0
    lit = rng.integers(0, size, size=count)
    images[np.arange(count), lit] = rng.integers(1, 256, size=count, dtype=np.uint8)
    return images


def random_patterns(rng, count, precision=Precision.F64):
    return [normalize(image, precision, ROWS, COLS, pattern_id=index)
            for index, image in enumerate(random_images(rng, count))]


def random_image_set(rng, count):
    pixels = random_images(rng, count).ravel()
    return RawImageSet(magic=IDX_IMAGE_MAGIC, count=count, rows=ROWS, cols=COLS, pixels=pixels)


def train(raw_or_patterns, capacity=None, precision=Precision.F64, params=None):
    items = list(raw_or_patterns)
    store = new_store(RECALL_SIZE, capacity or len(items), params or Hyperparams(), precision)
    for pattern in items:
        learn_pattern(store, pattern, pattern.pattern_id)
    return store


@pytest.fixture
def image_set(rng):
    return random_image_set(rng, 40)


@pytest.fixture
def idx_file(tmp_path, image_set):
    path = tmp_path / "images-idx3-ubyte"
    path.write_bytes(serialize_idx(image_set))
    return path


@pytest.fixture
def trained_store(image_set):
    return train(patterns(image_set, 0, 20))


def _mnist_path():
    candidates = []
    if os.environ.get("CUEBALL_MNIST"):
        candidates.append(Path(os.environ["CUEBALL_MNIST"]))
    data_dir = Path(__file__).parent / "data"
    candidates.extend(data_dir / name for name in MNIST_NAMES)
    for path in candidates:
        if path.exists():
            return path
    return None


@pytest.fixture(scope="session")
def mnist():
    path = _mnist_path()
    if path is None:
        pytest.skip("MNIST training images not available (set CUEBALL_MNIST)")
    return load_idx(str(path))


@pytest.fixture(scope="session")
def mnist_store(mnist):
    return train(patterns(mnist, 0, 1000))


@pytest.fixture(scope="session")
def mnist_store_f32(mnist):
    return train(patterns(mnist, 0, 1000, Precision.F32), precision=Precision.F32)

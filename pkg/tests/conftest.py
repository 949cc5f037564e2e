"""Shared fixtures. The desk-scale trained models are expensive (minutes),
so they are session-scoped and cached on disk keyed by their exact recipe;
delete tests/.cache to retrain from scratch."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from meshdeform import Mesh, ModelConfig, ModelParams, synth_dataset, train
from meshdeform.synth import PoseDataset
from meshdeform.training import TrainConfig

CACHE_DIR = Path(__file__).parent / ".cache"

DESK_SEED = 7
DESK_COUNT = 20
DESK_EPOCHS = 300


def _dataset_digest(datasets):
    h = hashlib.sha1()
    for ds in datasets:
        h.update(ds.neutral.vertices.tobytes())
        h.update(ds.neutral.faces.tobytes())
        for pose in ds.poses:
            h.update(pose.vertices.tobytes())
        h.update(json.dumps([ds.train_indices, ds.test_indices]).encode())
    return h.hexdigest()


def train_cached(name, datasets, config):
    """Train (or load a cached copy of) a model for the given recipe."""
    datasets = datasets if isinstance(datasets, list) else [datasets]
    key = hashlib.sha1(
        (name + _dataset_digest(datasets) + json.dumps(config.to_dict(), sort_keys=True)).encode()
    ).hexdigest()
    CACHE_DIR.mkdir(exist_ok=True)
    weights = CACHE_DIR / f"{name}.pnds"
    meta = CACHE_DIR / f"{name}.json"
    if weights.exists() and meta.exists():
        stored = json.loads(meta.read_text())
        if stored.get("key") == key:
            params = ModelParams.load(weights)
            return params, stored["history"], stored["train_seconds"]
    import time

    t0 = time.perf_counter()
    params, history = train(datasets if len(datasets) > 1 else datasets[0], config)
    seconds = time.perf_counter() - t0
    params.save(weights)
    meta.write_text(json.dumps({"key": key, "history": history, "train_seconds": seconds}))
    return params, history, seconds


@pytest.fixture(scope="session")
def desk_dataset():
    return synth_dataset("bend-bar", DESK_COUNT, seed=DESK_SEED, target_vertices=600)


@pytest.fixture(scope="session")
def desk_run(desk_dataset):
    config = TrainConfig(epochs=DESK_EPOCHS, learning_rate=1e-4, lambda_n=1e-5, seed=0)
    return train_cached("desk_bend", desk_dataset, config)


@pytest.fixture(scope="session")
def desk_model(desk_run):
    return desk_run[0]


def make_duo_datasets():
    """Two bar identities with identical connectivity but different widths,
    each with its own bend pose family."""
    from meshdeform.synth import pose_from_param

    base = synth_dataset("bend-bar", 10, seed=21, target_vertices=600)
    narrow_scale = np.array([1.0, 0.6, 1.0])
    neutral_b = Mesh(base.neutral.vertices * narrow_scale, base.neutral.faces,
                     id="bar-b-neutral")
    poses_b = [
        pose_from_param(neutral_b, "bend-bar", p, id=f"bar-b-{i:03d}")
        for i, p in enumerate(base.params)
    ]
    ds_b = PoseDataset(neutral=neutral_b, poses=poses_b, params=list(base.params),
                       kind="bend-bar", train_indices=list(base.train_indices),
                       test_indices=list(base.test_indices))
    return base, ds_b


@pytest.fixture(scope="session")
def duo_datasets():
    return make_duo_datasets()


@pytest.fixture(scope="session")
def duo_model(duo_datasets):
    config = TrainConfig(
        epochs=250, learning_rate=1e-4, lambda_n=1e-5, seed=3,
        model=ModelConfig(eigen_count=24, blocks=3, width=96),
    )
    params, _, _ = train_cached("duo_bend", list(duo_datasets), config)
    return params


@pytest.fixture(scope="session")
def tiny_config():
    return ModelConfig(local_dim=6, code_dim=6, freq_count=2, eigen_count=6,
                       blocks=1, width=10, enc_channels=6, gen_hidden=10)

"""Shared fixtures: trained grids are expensive, so they are session-scoped.

Three grids cover the suite. `detector_grid` is a mid-sized grid for
behavioural tests of the classifier. `default_train_run` executes the
full default-configuration recipe at 20k symbols and keeps the harvested
samples and wall time so the training-integrity checks can inspect every
stage. `campaign_grid` is trained at the campaign's operating SNR, which
is how the detector is meant to be fielded (train where you operate).
"""

import time

import pytest

from cora.channel import TrainConfig
from cora.detector import collect_training_features, grid_from_samples, save_grid


@pytest.fixture(scope="session")
def detector_grid():
    cfg = TrainConfig(n_symbols=10_000, seed=11, snr_db=10.0)
    return grid_from_samples(collect_training_features(cfg), cfg)


@pytest.fixture(scope="session")
def detector_grid_file(detector_grid, tmp_path_factory):
    path = tmp_path_factory.mktemp("grids") / "detector.grid"
    save_grid(detector_grid, path)
    return path


@pytest.fixture(scope="session")
def default_train_run():
    cfg = TrainConfig(n_symbols=20_000, seed=7)
    start = time.perf_counter()
    samples = collect_training_features(cfg)
    grid = grid_from_samples(samples, cfg)
    elapsed = time.perf_counter() - start
    return cfg, samples, grid, elapsed


@pytest.fixture(scope="session")
def campaign_grid():
    cfg = TrainConfig(n_symbols=20_000, seed=7, snr_db=10.0)
    return grid_from_samples(collect_training_features(cfg), cfg)

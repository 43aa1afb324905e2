import numpy as np
import pytest

from graphcoreset.bundle import from_edges
from graphcoreset.synth import random_bundle, sbm_bundle


@pytest.fixture
def k2_bundle():
    """Two nodes, one edge, both class 0."""
    return from_edges(
        2, np.array([[0, 1]]), np.zeros((2, 3), np.float32), np.array([0, 0]),
        {"train": [0, 1], "val": [], "test": []}, num_classes=1, name="k2",
    )


@pytest.fixture
def path3_bundle():
    return from_edges(
        3, np.array([[0, 1], [1, 2]]), np.eye(3, dtype=np.float32),
        np.array([0, 1, 0]), {"train": [0, 1, 2], "val": [], "test": []},
        num_classes=2, name="path3",
    )


@pytest.fixture
def small_sbm():
    return sbm_bundle(n=60, num_classes=3, p_in=0.2, p_out=0.03, feature_dim=8,
                      seed=7, train_frac=0.4)


@pytest.fixture
def er_bundle():
    return random_bundle(n=50, edge_prob=0.12, num_classes=3, feature_dim=8, seed=3)

"""Synthetic graph generators: all tests and sweeps run offline on these."""

from __future__ import annotations

import numpy as np

from .bundle import GraphBundle, from_edges


def sbm_bundle(
    n: int = 200,
    num_classes: int = 4,
    p_in: float = 0.1,
    p_out: float = 0.01,
    feature_dim: int = 16,
    separation: float = 1.0,
    train_frac: float = 0.5,
    val_frac: float = 0.25,
    seed: int = 0,
    class_priors=None,
    name: str = "sbm",
) -> GraphBundle:
    """Stochastic block model with class-informative Gaussian features.

    Each node's feature vector is its class mean (a random Gaussian direction
    scaled by `separation`) plus unit noise. Splits are drawn disjointly at
    random. `separation=0` gives uninformative features; `class_priors` skews
    the class sizes.
    """
    rng = np.random.default_rng(seed)
    if class_priors is None:
        labels = rng.integers(0, num_classes, size=n)
    else:
        priors = np.asarray(class_priors, dtype=np.float64)
        labels = rng.choice(num_classes, size=n, p=priors / priors.sum())
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = np.column_stack([iu[keep], ju[keep]])

    means = rng.normal(size=(num_classes, feature_dim)) * separation
    features = means[labels] + rng.normal(size=(n, feature_dim))

    perm = rng.permutation(n)
    n_train = int(round(train_frac * n))
    n_val = int(round(val_frac * n))
    splits = {
        "train": perm[:n_train],
        "val": perm[n_train:n_train + n_val],
        "test": perm[n_train + n_val:],
    }
    return from_edges(n, edges, features.astype(np.float32), labels, splits,
                      num_classes=num_classes, name=name)


def random_bundle(
    n: int = 50,
    edge_prob: float = 0.1,
    num_classes: int = 3,
    feature_dim: int = 8,
    seed: int = 0,
    name: str = "random",
) -> GraphBundle:
    """Erdos-Renyi graph with random labels and features, for property tests."""
    return sbm_bundle(
        n=n,
        num_classes=num_classes,
        p_in=edge_prob,
        p_out=edge_prob,
        feature_dim=feature_dim,
        separation=0.0,
        seed=seed,
        name=name,
    )

"""Fetch and convert Planetoid-style citation datasets (cora/citeseer/pubmed).

The raw distribution is eight pickled files per dataset
(ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index}). Download is opt-in via
`fetch`; conversion reassembles the standard split layout (train = first
len(y) nodes, val = next 500, test = test.index) and writes a bundle
directory. Citeseer's gap test indices become zero-feature unlabeled nodes.
"""

from __future__ import annotations

import pickle
import urllib.request
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .bundle import UNLABELED, GraphBundle, from_edges

MIRROR = "https://github.com/kimiyoung/planetoid/raw/master/data"
PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")
DATASETS = ("cora", "citeseer", "pubmed")


def fetch_planetoid(name: str, out_dir: str | Path, mirror: str = MIRROR) -> Path:
    """Download the eight raw files for one dataset. Requires network access."""
    if name not in DATASETS:
        raise ValueError(f"unknown planetoid dataset {name!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for part in PARTS:
        fname = f"ind.{name}.{part}"
        dest = out_dir / fname
        if dest.exists():
            continue
        with urllib.request.urlopen(f"{mirror}/{fname}") as resp:
            dest.write_bytes(resp.read())
    return out_dir


def _load_pickle(path: Path):
    with path.open("rb") as fh:
        return pickle.load(fh, encoding="latin1")


def planetoid_to_bundle(raw_dir: str | Path, name: str) -> GraphBundle:
    """Assemble the raw pickles into a GraphBundle."""
    raw_dir = Path(raw_dir)
    for part in PARTS:
        if not (raw_dir / f"ind.{name}.{part}").exists():
            raise FileNotFoundError(f"missing raw file ind.{name}.{part}")
    x = _load_pickle(raw_dir / f"ind.{name}.x")
    tx = _load_pickle(raw_dir / f"ind.{name}.tx")
    allx = _load_pickle(raw_dir / f"ind.{name}.allx")
    y = np.asarray(_load_pickle(raw_dir / f"ind.{name}.y"))
    ty = np.asarray(_load_pickle(raw_dir / f"ind.{name}.ty"))
    ally = np.asarray(_load_pickle(raw_dir / f"ind.{name}.ally"))
    graph = _load_pickle(raw_dir / f"ind.{name}.graph")
    test_idx = np.loadtxt(raw_dir / f"ind.{name}.test.index", dtype=np.int64)

    test_sorted = np.sort(test_idx)
    full_range = np.arange(test_sorted.min(), test_sorted.max() + 1)
    if full_range.size != test_idx.size:
        # Gap indices (citeseer): pad tx/ty with zero rows for missing ids.
        tx_ext = sp.lil_matrix((full_range.size, x.shape[1]))
        tx_ext[test_sorted - full_range.min()] = tx
        tx = tx_ext.tocsr()
        ty_ext = np.zeros((full_range.size, y.shape[1]))
        ty_ext[test_sorted - full_range.min()] = ty
        ty = ty_ext

    features = sp.vstack([allx, tx]).tolil()
    features[test_idx] = features[full_range]
    features = np.asarray(features.todense(), dtype=np.float32)

    onehot = np.vstack([ally, ty])
    onehot[test_idx] = onehot[full_range]
    labels = np.full(onehot.shape[0], UNLABELED, dtype=np.int64)
    has_label = onehot.sum(axis=1) > 0
    labels[has_label] = onehot[has_label].argmax(axis=1)

    n = features.shape[0]
    edges = []
    for u, nbrs in graph.items():
        for v in nbrs:
            if 0 <= u < n and 0 <= v < n:
                edges.append((u, v))
    edges = np.asarray(edges, dtype=np.int64)

    n_train = y.shape[0]
    splits = {
        "train": np.arange(n_train),
        "val": np.arange(n_train, n_train + 500),
        "test": test_sorted,
    }
    return from_edges(n, edges, features, labels, splits,
                      num_classes=onehot.shape[1], name=name)

import json

import numpy as np
import pytest
import scipy.sparse as sp

from graphcoreset.bundle import (BundleError, add_random_edges,
                                 build_diffusion, build_normalized_laplacian,
                                 from_edges, homophily, ingest_bundle,
                                 save_bundle, write_features_bin)
from graphcoreset.synth import random_bundle, sbm_bundle


def make_bundle_dir(tmp_path, n=2, d=2, k=1, edges="0\t1\n", labels="0\t0\n1\t0\n",
                    splits=None, features=None):
    path = tmp_path / "bundle"
    path.mkdir(parents=True)
    (path / "manifest.json").write_text(json.dumps({"n": n, "d": d, "k": k, "name": "t"}))
    (path / "edges.tsv").write_text(edges)
    (path / "labels.tsv").write_text(labels)
    x = np.zeros((n, d), np.float32) if features is None else features
    write_features_bin(path / "features.bin", x)
    splits = splits or {"train": list(range(n)), "val": [], "test": []}
    (path / "splits.json").write_text(json.dumps(splits))
    return path


def test_ingest_minimal_two_node(tmp_path):
    g = ingest_bundle(make_bundle_dir(tmp_path))
    assert g.n == 2 and g.m == 1
    assert g.degrees.tolist() == [1, 1]


def test_ingest_drops_self_loops_and_duplicates(tmp_path):
    path = make_bundle_dir(tmp_path, n=4, edges="0\t1\n1\t0\n3\t3\n1\t2\n",
                           labels="0\t0\n1\t0\n2\t0\n3\t0\n")
    g = ingest_bundle(path)
    assert g.m == 2
    assert g.adjacency.diagonal().sum() == 0


def test_ingest_errors(tmp_path):
    path = make_bundle_dir(tmp_path)
    (path / "edges.tsv").unlink()
    with pytest.raises(BundleError, match="missing file"):
        ingest_bundle(path)

    path = make_bundle_dir(tmp_path / "a", labels="0\t5\n")
    with pytest.raises(BundleError, match="label"):
        ingest_bundle(path)

    path = make_bundle_dir(tmp_path / "b",
                           splits={"train": [0], "val": [0], "test": []})
    with pytest.raises(BundleError, match="overlapping"):
        ingest_bundle(path)

    path = make_bundle_dir(tmp_path / "c", edges="0\tx\n")
    with pytest.raises(BundleError, match="edges.tsv:1"):
        ingest_bundle(path)


def test_feature_header_mismatch(tmp_path):
    path = make_bundle_dir(tmp_path)
    write_features_bin(path / "features.bin", np.zeros((3, 2), np.float32))
    with pytest.raises(BundleError, match="manifest"):
        ingest_bundle(path)


def test_save_ingest_round_trip(tmp_path, small_sbm):
    save_bundle(small_sbm, tmp_path / "out")
    g2 = ingest_bundle(tmp_path / "out")
    assert g2.n == small_sbm.n and g2.m == small_sbm.m
    assert (g2.adjacency != small_sbm.adjacency).nnz == 0
    assert np.array_equal(g2.features, small_sbm.features)
    assert np.array_equal(g2.labels, small_sbm.labels)
    for key in ("train", "val", "test"):
        assert np.array_equal(g2.splits[key], small_sbm.splits[key])


def test_diffusion_single_edge(k2_bundle):
    p = build_diffusion(k2_bundle).p_csr.toarray()
    assert np.allclose(p, [[0.5, 0.5], [0.5, 0.5]])


def test_diffusion_triangle():
    tri = from_edges(3, np.array([[0, 1], [1, 2], [0, 2]]),
                     np.zeros((3, 1), np.float32), np.zeros(3, np.int64),
                     {"train": [0], "val": [], "test": []}, 1)
    p = build_diffusion(tri).p_csr.toarray()
    for i in range(3):
        assert p[i, i] == 0.5
        assert np.allclose(sorted(p[i]), [0.25, 0.25, 0.5])


def test_diffusion_path_center_row(path3_bundle):
    p = build_diffusion(path3_bundle).p_csr.toarray()
    assert np.allclose(p[1], [0.25, 0.5, 0.25])


def test_diffusion_row_stochastic_and_isolated():
    g = from_edges(3, np.array([[0, 1]]), np.zeros((3, 1), np.float32),
                   np.zeros(3, np.int64), {"train": [0], "val": [], "test": []}, 1)
    diff = build_diffusion(g)
    ones = np.ones(3)
    assert np.allclose(diff.p_csr @ ones, ones, atol=1e-9)
    assert diff.p_csr[2, 2] == 1.0
    assert (diff.col_norms > 0).all()


def test_diffusion_row_stochastic_random():
    for seed in range(5):
        g = random_bundle(n=40, edge_prob=0.1, seed=seed)
        diff = build_diffusion(g)
        rows = np.asarray(diff.p_csr.sum(axis=1)).ravel()
        assert np.allclose(rows, 1.0, atol=1e-9)
        dense = diff.p_csr.toarray()
        assert dense.min() >= 0.0 and dense.max() <= 1.0


def test_laplacian_k2(k2_bundle):
    l = build_normalized_laplacian(k2_bundle).l_csr.toarray()
    assert np.allclose(l, [[1, -1], [-1, 1]])
    assert np.allclose(np.linalg.eigvalsh(l), [0, 2])


def test_laplacian_path3_eigenvalues(path3_bundle):
    # oracle: dense eigensolve of the 3x3 matrix
    l = build_normalized_laplacian(path3_bundle).l_csr.toarray()
    assert np.allclose(np.linalg.eigvalsh(l), [0, 1, 2], atol=1e-12)


def test_laplacian_isolated_node():
    g = from_edges(1, np.zeros((0, 2)), np.zeros((1, 1), np.float32),
                   np.zeros(1, np.int64), {"train": [0], "val": [], "test": []}, 1)
    l = build_normalized_laplacian(g).l_csr.toarray()
    assert np.allclose(l, [[1.0]])


def test_laplacian_psd_and_spectrum_bound():
    rng = np.random.default_rng(0)
    for seed in range(4):
        g = random_bundle(n=80, edge_prob=0.08, seed=seed)
        l = build_normalized_laplacian(g).l_csr
        assert abs(l - l.T).max() < 1e-12
        dense = l.toarray()
        for _ in range(25):
            v = rng.normal(size=g.n)
            assert v @ (dense @ v) >= -1e-9
        assert np.linalg.eigvalsh(dense).max() <= 2 + 1e-8


def test_homophily_basic():
    same = from_edges(2, np.array([[0, 1]]), np.zeros((2, 1), np.float32),
                      np.array([1, 1]), {"train": [], "val": [], "test": []}, 2)
    diff_lbl = from_edges(2, np.array([[0, 1]]), np.zeros((2, 1), np.float32),
                          np.array([0, 1]), {"train": [], "val": [], "test": []}, 2)
    assert homophily(same) == 1.0
    assert homophily(diff_lbl) == 0.0


def test_homophily_no_edges_error():
    g = from_edges(3, np.zeros((0, 2)), np.zeros((3, 1), np.float32),
                   np.zeros(3, np.int64), {"train": [], "val": [], "test": []}, 1)
    with pytest.raises(ValueError, match="undefined homophily"):
        homophily(g)


def test_add_random_edges_identity(small_sbm):
    g2 = add_random_edges(small_sbm, 0, seed=0)
    assert (g2.adjacency != small_sbm.adjacency).nnz == 0


def test_add_random_edges_exhaustive_k2_plus_isolated():
    g = from_edges(3, np.array([[0, 1]]), np.zeros((3, 1), np.float32),
                   np.zeros(3, np.int64), {"train": [], "val": [], "test": []}, 1)
    seen = set()
    for seed in range(20):
        g2 = add_random_edges(g, 1, seed=seed)
        assert g2.m == 2
        new = sp.triu(g2.adjacency - g.adjacency, k=1).tocoo()
        seen.add((int(new.row[0]), int(new.col[0])))
    assert seen == {(0, 2), (1, 2)}


def test_add_random_edges_deterministic(small_sbm):
    a = add_random_edges(small_sbm, 15, seed=42)
    b = add_random_edges(small_sbm, 15, seed=42)
    assert (a.adjacency != b.adjacency).nnz == 0
    assert a.m == small_sbm.m + 15


def test_add_random_edges_count_too_large():
    g = from_edges(3, np.array([[0, 1], [1, 2], [0, 2]]),
                   np.zeros((3, 1), np.float32), np.zeros(3, np.int64),
                   {"train": [], "val": [], "test": []}, 1)
    with pytest.raises(ValueError, match="absent"):
        add_random_edges(g, 1, seed=0)


def test_add_random_edges_lowers_homophily_on_average():
    g = sbm_bundle(n=100, num_classes=2, p_in=0.2, p_out=0.01, seed=1)
    h0 = homophily(g)
    hs = [homophily(add_random_edges(g, 200, seed=s)) for s in range(5)]
    assert np.mean(hs) < h0

import numpy as np
import pytest

from graphcoreset.bundle import build_normalized_laplacian
from graphcoreset.spectral import (eig_dense, fix_signs, rsd_of_ego_embeddings,
                                   spectral_decay_profile, spectral_response,
                                   spectral_transform)
from graphcoreset.synth import random_bundle


def test_eig_identity():
    basis = eig_dense(np.eye(2))
    assert np.allclose(basis.eigenvalues, [1, 1])
    assert np.allclose(basis.vectors.T @ basis.vectors, np.eye(2), atol=1e-12)


def test_eig_k2_laplacian():
    l = np.array([[1.0, -1.0], [-1.0, 1.0]])
    basis = eig_dense(l)
    assert np.allclose(basis.eigenvalues, [0, 2])
    assert np.allclose(np.abs(basis.vectors[:, 0]), [1 / np.sqrt(2)] * 2)
    # sign convention: largest-|entry| (first on tie) nonnegative
    assert basis.vectors[0, 0] > 0 and basis.vectors[0, 1] > 0


def test_eig_path3():
    g_l = np.array([
        [1.0, -1 / np.sqrt(2), 0.0],
        [-1 / np.sqrt(2), 1.0, -1 / np.sqrt(2)],
        [0.0, -1 / np.sqrt(2), 1.0],
    ])
    basis = eig_dense(g_l)
    assert np.allclose(basis.eigenvalues, [0, 1, 2], atol=1e-12)


def test_eig_rejects_nonsymmetric_and_oversize():
    with pytest.raises(ValueError, match="symmetric"):
        eig_dense(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError, match="cap"):
        eig_dense(np.eye(5), cap=4)


def test_eig_reconstruction_and_orthonormality():
    rng = np.random.default_rng(1)
    for _ in range(5):
        a = rng.normal(size=(12, 12))
        sym = (a + a.T) / 2
        basis = eig_dense(sym)
        u, lam = basis.vectors, basis.eigenvalues
        assert np.all(np.diff(lam) >= -1e-12)
        assert np.linalg.norm(u.T @ u - np.eye(12)) < 1e-8
        recon = u @ np.diag(lam) @ u.T
        assert np.linalg.norm(recon - sym) / np.linalg.norm(sym) < 1e-8


def test_sign_fix_idempotent():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(8, 8))
    basis = eig_dense((a + a.T) / 2)
    assert np.array_equal(fix_signs(basis.vectors), basis.vectors)


def test_spectral_transform_orthonormality_cases():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(8, 8))
    basis = eig_dense((a + a.T) / 2)
    assert np.allclose(spectral_transform(basis, basis.vectors), np.eye(8), atol=1e-10)
    assert np.allclose(spectral_transform(basis, np.zeros((8, 3))), 0.0)
    x = rng.normal(size=(8, 3))
    round_trip = basis.vectors @ spectral_transform(basis, x)
    assert np.linalg.norm(round_trip - x) < 1e-8


def test_spectral_transform_linear():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(6, 6))
    basis = eig_dense((a + a.T) / 2)
    x, y = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    lhs = spectral_transform(basis, 2.5 * x - 0.7 * y)
    rhs = 2.5 * spectral_transform(basis, x) - 0.7 * spectral_transform(basis, y)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_spectral_transform_shape_mismatch():
    basis = eig_dense(np.eye(4))
    with pytest.raises(ValueError):
        spectral_transform(basis, np.zeros((5, 2)))


def test_rsd_identical_embeddings_zero():
    z = np.ones((3, 2))
    assert rsd_of_ego_embeddings([z, z, z]) == 0.0


def test_rsd_two_scalars():
    # embeddings {0, 2}: mean 1, sqrt((1+1)/2)/1 = 1
    assert rsd_of_ego_embeddings([np.array([[0.0]]), np.array([[2.0]])]) == pytest.approx(1.0)


def test_rsd_squared_variant():
    # embeddings {0, 3}: mean 1.5, deviations both 1.5
    embs = [np.array([[0.0]]), np.array([[3.0]])]
    printed = rsd_of_ego_embeddings(embs, variant="printed")
    squared = rsd_of_ego_embeddings(embs, variant="squared")
    assert printed == pytest.approx(np.sqrt(1.5) / 1.5)
    assert squared == pytest.approx(1.0)


def test_rsd_degenerate_mean():
    embs = [np.array([[1.0]]), np.array([[-1.0]])]
    with pytest.raises(ValueError, match="degenerate"):
        rsd_of_ego_embeddings(embs)


def test_rsd_rotation_invariant():
    rng = np.random.default_rng(5)
    embs = [rng.normal(size=(4, 3)) for _ in range(6)]
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    base = rsd_of_ego_embeddings(embs)
    rotated = rsd_of_ego_embeddings([z @ q for z in embs])
    assert abs(base - rotated) < 1e-10


def test_spectral_response_identity_and_scaling(er_bundle):
    x = er_bundle.features.astype(np.float64)
    resp1 = spectral_response(er_bundle, x)
    defined = ~np.isnan(resp1[:, 1])
    assert np.allclose(resp1[defined, 1], 1.0, atol=1e-8)
    resp2 = spectral_response(er_bundle, 2.0 * x)
    assert np.allclose(resp2[defined, 1], 2.0, atol=1e-8)


def test_spectral_response_random_gcn(er_bundle):
    from graphcoreset import gnn

    model = gnn.init_model("gcn", er_bundle.d, er_bundle.num_classes,
                           hidden_dim=8, seed=0)
    conv = gnn.build_conv(er_bundle.adjacency, er_bundle.degrees)
    out = gnn.forward(model, conv, er_bundle.features.astype(np.float64))
    resp = spectral_response(er_bundle, out)
    defined = ~np.isnan(resp[:, 1])
    assert defined.any()
    assert (resp[defined, 1] >= 0).all()
    assert np.isfinite(resp[defined, 1]).all()


def test_decay_profile_k2_smallest(k2_bundle):
    feats = [np.array([[1.0], [0.5]]), np.array([[0.3], [0.2]])]
    prof = spectral_decay_profile(k2_bundle, feats, depth=0)
    assert prof.shape == (2, 3)
    assert np.allclose(sorted(prof[:, 0]), [0, 2])
    # depth 0 reference curve is identically 1
    assert np.allclose(prof[:, 2], 1.0)


def test_decay_reference_zero_at_lambda_two(k2_bundle):
    feats = [np.zeros((2, 1)), np.zeros((2, 1))]
    for depth in (1, 2, 3):
        prof = spectral_decay_profile(k2_bundle, feats, depth=depth)
        at_two = prof[np.isclose(prof[:, 0], 2.0), 2]
        assert np.allclose(at_two, 0.0)


def test_eigen_reconstruction_on_graph_laplacians():
    for seed in range(3):
        g = random_bundle(n=30, edge_prob=0.15, seed=seed)
        l = build_normalized_laplacian(g).l_csr.toarray()
        basis = eig_dense(l)
        recon = basis.vectors @ np.diag(basis.eigenvalues) @ basis.vectors.T
        assert np.linalg.norm(recon - l) / max(np.linalg.norm(l), 1e-12) < 1e-8
        assert basis.eigenvalues.min() > -1e-8
        assert basis.eigenvalues.max() < 2 + 1e-8

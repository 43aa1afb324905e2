"""Eigendecomposition, spectral transforms, and spread/decay diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import GraphBundle, build_normalized_laplacian

DENSE_EIG_CAP = 4096


@dataclass(frozen=True)
class EigenBasis:
    """Ascending eigenpairs of a symmetric matrix with deterministic signs.

    Columns of `vectors` are eigenvectors; each column is flipped so its
    largest-magnitude entry (ties: lowest index) is nonnegative.
    """

    size: int
    eigenvalues: np.ndarray
    vectors: np.ndarray


def fix_signs(u: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-|entry| (first on ties) is >= 0. Idempotent."""
    u = u.copy()
    lead = np.argmax(np.abs(u), axis=0)
    flip = u[lead, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1.0
    return u


def eig_dense(l: np.ndarray, cap: int = DENSE_EIG_CAP) -> EigenBasis:
    """Full symmetric eigendecomposition (dense, LAPACK), sign-canonicalized."""
    l = np.asarray(l, dtype=np.float64)
    p = l.shape[0]
    if l.ndim != 2 or l.shape[0] != l.shape[1]:
        raise ValueError(f"expected square matrix, got {l.shape}")
    if p > cap:
        raise ValueError(f"matrix size {p} exceeds dense-eig cap {cap}")
    if p and np.max(np.abs(l - l.T)) > 1e-10:
        raise ValueError("matrix is not symmetric within 1e-10")
    vals, vecs = np.linalg.eigh(l)
    return EigenBasis(size=p, eigenvalues=vals, vectors=fix_signs(vecs))


def spectral_transform(basis: EigenBasis, x: np.ndarray) -> np.ndarray:
    """Project into the eigenbasis: returns U^T x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != basis.size:
        raise ValueError(f"row count {x.shape[0]} != basis size {basis.size}")
    return basis.vectors.T @ x


def rsd_of_ego_embeddings(embeddings, variant: str = "printed") -> float:
    """Relative spread of per-center spectral embeddings around their mean.

    `variant="printed"` takes sqrt(mean of Frobenius norms) / ||mean||_F;
    `variant="squared"` uses squared norms inside the mean (the conventional
    relative standard deviation), kept for sensitivity analysis.
    """
    stack = np.stack([np.asarray(z, dtype=np.float64) for z in embeddings])
    mean = stack.mean(axis=0)
    mean_norm = np.linalg.norm(mean)
    if mean_norm == 0.0:
        raise ValueError("degenerate mean embedding")
    devs = np.linalg.norm(stack - mean, axis=(1, 2) if stack.ndim == 3 else 1)
    if variant == "printed":
        return float(np.sqrt(devs.mean()) / mean_norm)
    if variant == "squared":
        return float(np.sqrt((devs ** 2).mean()) / mean_norm)
    raise ValueError(f"unknown rsd variant {variant!r}")


def spectral_response(g: GraphBundle, gnn_output: np.ndarray) -> np.ndarray:
    """Per-eigenvalue output/input energy ratio of a node-embedding map.

    Returns an (n, 2) array of (lambda_i, ||[U^T F]_i|| / ||[U^T X]_i||) rows;
    rows where the input spectral energy is below 1e-12 get NaN (undefined).
    """
    gnn_output = np.asarray(gnn_output, dtype=np.float64)
    if gnn_output.shape[0] != g.n:
        raise ValueError("gnn_output row count != n")
    basis = eig_dense(build_normalized_laplacian(g).l_csr.toarray())
    out_spec = np.linalg.norm(basis.vectors.T @ gnn_output, axis=1)
    in_spec = np.linalg.norm(basis.vectors.T @ g.features.astype(np.float64), axis=1)
    response = np.full(g.n, np.nan)
    defined = in_spec >= 1e-12
    response[defined] = out_spec[defined] / in_spec[defined]
    return np.column_stack([basis.eigenvalues, response])


def spectral_decay_profile(g: GraphBundle, ego_features, depth: int) -> np.ndarray:
    """Alignment of collected per-center spectral features with each eigenvector.

    `ego_features` holds one equal-shape spectral feature matrix per node, in
    node order. For each full-graph eigenvalue the mean |inner product| of the
    entrywise-collected signals with the eigenvector is reported next to the
    smooth reference curve (1 - lambda/2)^depth.

    Returns an (n, 3) array of (lambda, measured, reference) rows.
    """
    stack = np.stack([np.asarray(f, dtype=np.float64) for f in ego_features])
    if stack.shape[0] != g.n:
        raise ValueError("need one spectral feature matrix per node")
    flat = stack.reshape(g.n, -1)
    basis = eig_dense(build_normalized_laplacian(g).l_csr.toarray())
    measured = np.abs(basis.vectors.T @ flat).mean(axis=1)
    reference = (1.0 - 0.5 * basis.eigenvalues) ** depth
    return np.column_stack([basis.eigenvalues, measured, reference])

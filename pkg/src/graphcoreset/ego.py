"""Ego-graph extraction (standard hop-limited and diffusion top-p variants).

Ego-graphs keep ORIGINAL-graph degrees so an L-layer nearest-neighbor
message-passing model applied to the depth-L ego reproduces the full-graph
embedding of the center exactly (the receptive-field identity). The center is
always renumbered as local node 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bundle import DiffusionMatrix, GraphBundle, normalized_laplacian_csr
from .spectral import EigenBasis, eig_dense, spectral_transform


@dataclass(frozen=True)
class EgoGraph:
    center: int
    nodes: np.ndarray            # original ids, center first then ascending
    adjacency: sp.csr_matrix     # induced subgraph in local indices
    local_features: np.ndarray
    original_degrees: np.ndarray
    kind: str                    # "standard" or "diffusion"
    depth: int
    size: int | None = None      # requested p for diffusion egos

    def __len__(self) -> int:
        return self.nodes.size


@dataclass(frozen=True)
class SpectralEgo:
    """Eigenbasis of an ego-graph plus its center row, zero-padded to p."""

    ego: EgoGraph
    basis: EigenBasis
    v: np.ndarray


def bfs_distances(adjacency: sp.csr_matrix, source: int, max_depth: int | None = None) -> np.ndarray:
    """Hop distances from `source`; -1 where unreachable (or beyond max_depth)."""
    n = adjacency.shape[0]
    indptr, indices = adjacency.indptr, adjacency.indices
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = [source]
    depth = 0
    while frontier and (max_depth is None or depth < max_depth):
        depth += 1
        nxt = []
        for u in frontier:
            for v in indices[indptr[u]:indptr[u + 1]]:
                if dist[v] < 0:
                    dist[v] = depth
                    nxt.append(v)
        frontier = nxt
    return dist


def _induce(g: GraphBundle, nodes: np.ndarray) -> sp.csr_matrix:
    sub = g.adjacency[nodes][:, nodes].tocsr()
    sub.sort_indices()
    return sub


def _finish(g: GraphBundle, center: int, others: np.ndarray, kind: str,
            depth: int, size: int | None = None) -> EgoGraph:
    nodes = np.concatenate([[center], np.sort(others)]).astype(np.int64)
    return EgoGraph(
        center=center,
        nodes=nodes,
        adjacency=_induce(g, nodes),
        local_features=g.features[nodes],
        original_degrees=g.degrees[nodes],
        kind=kind,
        depth=depth,
        size=size,
    )


def extract_standard_ego(g: GraphBundle, center: int, depth: int) -> EgoGraph:
    """Induced subgraph of all nodes within `depth` hops of `center`."""
    if not 0 <= center < g.n:
        raise ValueError(f"center {center} out of range [0, {g.n})")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    dist = bfs_distances(g.adjacency, center, max_depth=depth)
    others = np.nonzero((dist > 0))[0]
    return _finish(g, center, others, "standard", depth)


def diffusion_row(diff: DiffusionMatrix, center: int, depth: int) -> sp.csr_matrix:
    """Row `center` of P^depth via repeated sparse vector-matrix products."""
    row = sp.csr_matrix(
        (np.ones(1), (np.zeros(1, dtype=np.int64), np.asarray([center]))),
        shape=(1, diff.n),
    )
    for _ in range(depth):
        row = row @ diff.p_csr
    return row.tocsr()


def extract_diffusion_ego(diff: DiffusionMatrix, g: GraphBundle, center: int,
                          depth: int, size: int) -> EgoGraph:
    """Nodes carrying the top-`size` entries of the center's row of P^depth.

    Ties break to the lower node id; the center is force-included and counted
    first. If the radius-`depth` ball is smaller than `size`, the walk is
    deepened until the support reaches `size` or the component is exhausted.
    """
    if not 0 <= center < g.n:
        raise ValueError(f"center {center} out of range [0, {g.n})")
    if size < 1:
        raise ValueError("size must be >= 1")
    row = diffusion_row(diff, center, depth)

    def _top_others(r, budget, exclude):
        ids, vals = r.indices, r.data
        keep = (ids != center) & ~np.isin(ids, exclude)
        ids, vals = ids[keep], vals[keep]
        order = np.lexsort((ids, -vals))
        return ids[order][:budget]

    if row.nnz >= size:
        others = _top_others(row, size - 1, np.empty(0, dtype=np.int64))
    else:
        # Ball smaller than p: keep the whole radius-L ball and deepen the
        # walk to fill the remaining slots (or stop when the component ends).
        ball = row.indices[row.indices != center]
        grown = row
        while grown.nnz < size:
            nxt = (grown @ diff.p_csr).tocsr()
            if nxt.nnz == grown.nnz:
                break
            grown = nxt
        extra = _top_others(grown, size - 1 - ball.size, ball)
        others = np.concatenate([ball, extra])
    return _finish(g, center, others, "diffusion", depth, size)


def ego_laplacian(ego: EgoGraph, degree_source: str = "original") -> np.ndarray:
    """Dense normalized Laplacian of the ego; degrees from the full graph by default."""
    if degree_source == "original":
        deg = ego.original_degrees
    elif degree_source == "induced":
        deg = np.diff(ego.adjacency.indptr)
    else:
        raise ValueError(f"unknown degree_source {degree_source!r}")
    return normalized_laplacian_csr(ego.adjacency, deg).toarray()


def spectral_ego(ego: EgoGraph, pad_to: int, degree_source: str = "original") -> SpectralEgo:
    """Eigendecompose the ego Laplacian; v = first row of U, zero-padded to p."""
    q = len(ego)
    if q > pad_to:
        raise ValueError(f"ego has {q} nodes > pad_to {pad_to}")
    basis = eig_dense(ego_laplacian(ego, degree_source))
    v = np.zeros(pad_to)
    v[:q] = basis.vectors[0, :]
    return SpectralEgo(ego=ego, basis=basis, v=v)


def training_spectral_egos(g: GraphBundle, diff: DiffusionMatrix, depth: int,
                           size: int, degree_source: str = "original") -> list[SpectralEgo]:
    """Diffusion-ego spectral views for every training node, in split order."""
    return [
        spectral_ego(extract_diffusion_ego(diff, g, int(i), depth, size), size,
                     degree_source)
        for i in g.train_ids
    ]


def all_spectral_egos(g: GraphBundle, diff: DiffusionMatrix, depth: int,
                      size: int, nodes: np.ndarray | None = None) -> list[SpectralEgo]:
    """Diffusion-ego spectral views for the given nodes (default: every node)."""
    if nodes is None:
        nodes = np.arange(g.n)
    return [
        spectral_ego(extract_diffusion_ego(diff, g, int(i), depth, size), size)
        for i in nodes
    ]


def spectral_ego_embeddings(g: GraphBundle, diff: DiffusionMatrix, model,
                            depth: int, size: int,
                            nodes: np.ndarray | None = None,
                            egos: list[SpectralEgo] | None = None) -> list[np.ndarray]:
    """Per-node spectral model outputs U^T f(A_ego, X_ego), zero-padded to p rows.

    Feeds the spread diagnostic: one (p, K) matrix per requested node. Pass
    precomputed `egos` to amortize eigendecompositions across model draws.
    """
    from . import gnn  # local import; gnn does not import this module

    if egos is None:
        egos = all_spectral_egos(g, diff, depth, size, nodes)
    out = []
    for se in egos:
        ego = se.ego
        conv = gnn.build_conv(ego.adjacency, ego.original_degrees)
        logits = gnn.forward(model, conv, ego.local_features.astype(np.float64),
                             train_mode=False)
        z = spectral_transform(se.basis, logits)
        padded = np.zeros((size, logits.shape[1]))
        padded[: z.shape[0]] = z
        out.append(padded)
    return out


def spectral_ego_features(g: GraphBundle, diff: DiffusionMatrix, features: np.ndarray,
                          depth: int, size: int,
                          egos: list[SpectralEgo] | None = None) -> list[np.ndarray]:
    """Per-node spectral input features U^T X_ego, zero-padded to p rows."""
    if egos is None:
        egos = all_spectral_egos(g, diff, depth, size)
    feats = np.asarray(features, dtype=np.float64)
    out = []
    for se in egos:
        local = feats[se.ego.nodes]
        z = spectral_transform(se.basis, local)
        padded = np.zeros((size, local.shape[1]))
        padded[: z.shape[0]] = z
        out.append(padded)
    return out


def receptive_field_check(g: GraphBundle, model, node: int, depth: int) -> float:
    """Max-abs difference between full-graph and ego-graph center embeddings."""
    from . import gnn

    ego = extract_standard_ego(g, node, depth)
    full_conv = gnn.build_conv(g.adjacency, g.degrees)
    full = gnn.forward(model, full_conv, g.features.astype(np.float64), train_mode=False)
    ego_conv = gnn.build_conv(ego.adjacency, ego.original_degrees)
    local = gnn.forward(model, ego_conv, ego.local_features.astype(np.float64),
                        train_mode=False)
    return float(np.max(np.abs(full[node] - local[0])))

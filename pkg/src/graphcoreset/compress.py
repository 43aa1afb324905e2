"""Coreset graph assembly and distance-stratified low-rank feature storage.

The output graph is the union of the selected centers' depth-L ego-graphs.
Center features are kept at half precision; every non-center node falls into
the stratum of its hop distance to the nearest center, and each stratum's
feature block is replaced by a truncated-SVD factor pair (also half precision)
whose rank halves per level, so total stored values stay within c*d.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .bundle import UNLABELED, GraphBundle
from .gnn import TrainingGraph
from .selection import CoresetResult

COMPRESSED_MAGIC = b"GCC1"


def multi_source_bfs(adjacency: sp.csr_matrix, sources) -> np.ndarray:
    """Hop distance to the nearest source; -1 where unreachable."""
    n = adjacency.shape[0]
    indptr, indices = adjacency.indptr, adjacency.indices
    dist = np.full(n, -1, dtype=np.int64)
    frontier = []
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            frontier.append(int(s))
    depth = 0
    while frontier:
        depth += 1
        nxt = []
        for u in frontier:
            for v in indices[indptr[u]:indptr[u + 1]]:
                if dist[v] < 0:
                    dist[v] = depth
                    nxt.append(int(v))
        frontier = nxt
    return dist


@dataclass(frozen=True)
class UnionAssembly:
    nodes: np.ndarray          # original ids: centers first, then by (level, id)
    adjacency: sp.csr_matrix   # induced, local indices
    d_min: np.ndarray          # per union node, distance to nearest center
    strata: dict               # level -> local indices into `nodes`


def assemble_union(g: GraphBundle, selected, depth: int) -> UnionAssembly:
    """Union of depth-L balls around the centers with distance strata."""
    selected = np.asarray(selected, dtype=np.int64)
    if selected.size == 0:
        raise ValueError("selected must be nonempty")
    dist = multi_source_bfs(g.adjacency, selected)
    in_union = (dist >= 0) & (dist <= depth)
    others = np.nonzero(in_union)[0]
    others = others[~np.isin(others, selected)]
    order = np.lexsort((others, dist[others]))
    nodes = np.concatenate([selected, others[order]])
    sub = g.adjacency[nodes][:, nodes].tocsr()
    sub.sort_indices()
    d_min = dist[nodes]
    strata = {
        int(level): np.nonzero(d_min == level)[0]
        for level in range(1, depth + 1)
    }
    return UnionAssembly(nodes=nodes, adjacency=sub, d_min=d_min, strata=strata)


def stratum_rank(c: int, d: int, stratum_size: int, level: int) -> int:
    """Retained rank for one distance level; floor of the halving schedule,
    clamped so the factor pair never exceeds the block itself."""
    if level < 1:
        raise ValueError("level must be >= 1")
    if stratum_size == 0:
        return 0
    raw = (c * d) / (stratum_size + d + 1) * 0.5 ** level
    return int(np.clip(np.floor(raw), 0, min(stratum_size, d)))


def compress_stratum(features: np.ndarray, rank: int):
    """Best rank-q factors of a raw feature block, quantized to half precision.

    Returns (row_factors, basis, err_pre, err_post): squared Frobenius
    reconstruction errors before and after the 16-bit rounding. rank 0 yields
    empty factors and the full block energy as the error.
    """
    x = np.asarray(features, dtype=np.float64)
    rows, d = x.shape
    if rank > min(rows, d):
        raise ValueError(f"rank {rank} exceeds min{rows, d}")
    if rank == 0:
        energy = float((x ** 2).sum())
        return (np.zeros((rows, 0), dtype=np.float16),
                np.zeros((0, d), dtype=np.float16), energy, energy)
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    row_factors = (u[:, :rank] * s[:rank]).astype(np.float16)
    basis = vt[:rank].astype(np.float16)
    err_pre = float((s[rank:] ** 2).sum())
    approx = row_factors.astype(np.float64) @ basis.astype(np.float64)
    err_post = float(((x - approx) ** 2).sum())
    return row_factors, basis, err_pre, err_post


@dataclass(frozen=True)
class StratumFactors:
    level: int
    members: np.ndarray        # local indices into the union node list
    rank: int
    row_factors: np.ndarray    # float16, (|V_l|, q)
    basis: np.ndarray          # float16, (q, d)
    err_pre: float
    err_post: float


@dataclass(frozen=True)
class CompressedCoreset:
    nodes: np.ndarray
    adjacency: sp.csr_matrix
    center_ids: np.ndarray
    center_features: np.ndarray    # float16, (c, d)
    center_labels: np.ndarray
    strata: list
    weights: np.ndarray            # combined coreset weights, per center
    original_degrees: np.ndarray   # full-graph degrees of every union node
    depth: int
    feature_dim: int

    def strata_values(self) -> int:
        d = self.feature_dim
        return sum((s.members.size + d + 1) * s.rank for s in self.strata)

    def stored_values(self) -> int:
        c, d = self.center_features.shape
        return c * d + self.strata_values()

    def budget_limit(self) -> int:
        c, d = self.center_features.shape
        return c * d


def compress_coreset(g: GraphBundle, result: CoresetResult, depth: int) -> CompressedCoreset:
    union = assemble_union(g, result.selected, depth)
    c = result.selected.size
    d = g.d
    strata = []
    for level in sorted(union.strata):
        members = union.strata[level]
        rank = stratum_rank(c, d, members.size, level)
        block = g.features[union.nodes[members]]
        rf, basis, err_pre, err_post = compress_stratum(block, rank)
        strata.append(StratumFactors(level=level, members=members, rank=rank,
                                     row_factors=rf, basis=basis,
                                     err_pre=err_pre, err_post=err_post))
    return CompressedCoreset(
        nodes=union.nodes,
        adjacency=union.adjacency,
        center_ids=result.selected,
        center_features=g.features[result.selected].astype(np.float16),
        center_labels=g.labels[result.selected],
        strata=strata,
        weights=result.selected_weights(),
        original_degrees=g.degrees[union.nodes],
        depth=depth,
        feature_dim=d,
    )


def decompress(cc: CompressedCoreset) -> TrainingGraph:
    """Training-ready coreset graph with approximate non-center features."""
    n_union = cc.nodes.size
    c = cc.center_ids.size
    features = np.zeros((n_union, cc.feature_dim), dtype=np.float32)
    features[:c] = cc.center_features.astype(np.float32)
    for s in cc.strata:
        if s.rank > 0:
            block = s.row_factors.astype(np.float32) @ s.basis.astype(np.float32)
            features[s.members] = block
    labels = np.full(n_union, UNLABELED, dtype=np.int64)
    labels[:c] = cc.center_labels
    return TrainingGraph(
        n=n_union,
        adjacency=cc.adjacency,
        conv_degrees=cc.original_degrees,
        features=features,
        labels=labels,
        train_ids=np.arange(c),
        weights=cc.weights,
        name="compressed-coreset",
    )


def coreset_training_graph(g: GraphBundle, result: CoresetResult, depth: int,
                           compressed: bool = True,
                           centers_only: bool = False) -> TrainingGraph:
    """Build the graph a model trains on for a given selection.

    `centers_only` induces the subgraph on the centers alone (node-wise
    convention); otherwise the union of ego-graphs is used, optionally with
    compressed features.
    """
    if centers_only:
        nodes = result.selected
        sub = g.adjacency[nodes][:, nodes].tocsr()
        sub.sort_indices()
        return TrainingGraph(
            n=nodes.size, adjacency=sub, conv_degrees=g.degrees[nodes],
            features=g.features[nodes], labels=g.labels[nodes],
            train_ids=np.arange(nodes.size), weights=result.selected_weights(),
            name="centers-only-coreset",
        )
    if compressed:
        return decompress(compress_coreset(g, result, depth))
    union = assemble_union(g, result.selected, depth)
    c = result.selected.size
    labels = np.full(union.nodes.size, UNLABELED, dtype=np.int64)
    labels[:c] = g.labels[result.selected]
    return TrainingGraph(
        n=union.nodes.size, adjacency=union.adjacency,
        conv_degrees=g.degrees[union.nodes],
        features=g.features[union.nodes], labels=labels,
        train_ids=np.arange(c), weights=result.selected_weights(),
        name="union-coreset",
    )


def storage_report(cc: CompressedCoreset) -> list:
    """Rows of (level, size, rank, stored values, err_pre, err_post)."""
    rows = []
    for s in cc.strata:
        values = (s.members.size + cc.feature_dim + 1) * s.rank
        rows.append((s.level, int(s.members.size), s.rank, values,
                     s.err_pre, s.err_post))
    return rows


def compressed_bytes(cc: CompressedCoreset) -> int:
    """Feature payload bytes (half precision)."""
    c, d = cc.center_features.shape
    total = c * d * 2
    for s in cc.strata:
        total += (s.row_factors.size + s.basis.size) * 2
    return total


def uncompressed_bytes(cc: CompressedCoreset) -> int:
    """Raw union feature payload at float32."""
    return cc.nodes.size * cc.feature_dim * 4


# ---------------------------------------------------------------------------
# File format: magic GCC1, manifest JSON, little-endian blobs
# ---------------------------------------------------------------------------

def write_compressed(path: str | Path, cc: CompressedCoreset) -> None:
    path = Path(path)
    coo = sp.triu(cc.adjacency, k=1).tocoo()
    edges = np.column_stack([coo.row, coo.col]).astype("<u8")
    blobs = [("edges", edges),
             ("center_features", np.ascontiguousarray(cc.center_features, dtype="<f2"))]
    for s in cc.strata:
        blobs.append((f"stratum{s.level}_rows", np.ascontiguousarray(s.row_factors, dtype="<f2")))
        blobs.append((f"stratum{s.level}_basis", np.ascontiguousarray(s.basis, dtype="<f2")))
    manifest = {
        "version": 1,
        "depth": cc.depth,
        "feature_dim": cc.feature_dim,
        "node_count": int(cc.nodes.size),
        "nodes": [int(i) for i in cc.nodes],
        "centers": [int(i) for i in cc.center_ids],
        "center_labels": [int(i) for i in cc.center_labels],
        "weights": [float(v) for v in cc.weights],
        "degrees": [int(v) for v in cc.original_degrees],
        "strata": [{
            "level": s.level, "rank": s.rank,
            "members": [int(i) for i in s.members],
            "err_pre": s.err_pre, "err_post": s.err_post,
        } for s in cc.strata],
        "blobs": [],
    }
    offset = 0
    for name, arr in blobs:
        manifest["blobs"].append({
            "name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
            "offset": offset,
        })
        offset += arr.nbytes
    payload = json.dumps(manifest).encode()
    with path.open("wb") as fh:
        fh.write(COMPRESSED_MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for _, arr in blobs:
            fh.write(arr.tobytes())


def read_compressed(path: str | Path) -> CompressedCoreset:
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(4) != COMPRESSED_MAGIC:
            raise ValueError(f"{path}: not a compressed-coreset file")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode())
        body = fh.read()
    arrays = {}
    for spec in manifest["blobs"]:
        arr = np.frombuffer(body, dtype=np.dtype(spec["dtype"]),
                            count=int(np.prod(spec["shape"])) if spec["shape"] else 0,
                            offset=spec["offset"])
        arrays[spec["name"]] = arr.reshape(spec["shape"])
    n_union = manifest["node_count"]
    edges = arrays["edges"].astype(np.int64)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adjacency = sp.csr_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(n_union, n_union))
    adjacency.sort_indices()
    strata = []
    for s in manifest["strata"]:
        strata.append(StratumFactors(
            level=s["level"], members=np.asarray(s["members"], dtype=np.int64),
            rank=s["rank"],
            row_factors=arrays[f"stratum{s['level']}_rows"],
            basis=arrays[f"stratum{s['level']}_basis"],
            err_pre=s["err_pre"], err_post=s["err_post"],
        ))
    return CompressedCoreset(
        nodes=np.asarray(manifest["nodes"], dtype=np.int64),
        adjacency=adjacency,
        center_ids=np.asarray(manifest["centers"], dtype=np.int64),
        center_features=arrays["center_features"],
        center_labels=np.asarray(manifest["center_labels"], dtype=np.int64),
        strata=strata,
        weights=np.asarray(manifest["weights"], dtype=np.float64),
        original_degrees=np.asarray(manifest["degrees"], dtype=np.int64),
        depth=manifest["depth"],
        feature_dim=manifest["feature_dim"],
    )

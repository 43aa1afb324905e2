"""Graph data model: dataset ingestion, diffusion/Laplacian operators, statistics.

A dataset lives on disk as a *bundle directory* (manifest.json, edges.tsv,
features.bin, labels.tsv, splits.json) and in memory as an immutable
:class:`GraphBundle`. Adjacency is always symmetric, binary, zero-diagonal.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

FEATURE_MAGIC = b"GFB1"
UNLABELED = -1


class BundleError(ValueError):
    """A dataset directory or bundle field violates the format contract."""


@dataclass(frozen=True)
class GraphBundle:
    """Loaded node-classification dataset.

    Attributes
    ----------
    n, m : node count and undirected edge count.
    adjacency : symmetric binary CSR with zero diagonal (both directions stored).
    features : dense float32 matrix, shape (n, d).
    labels : int64 class id per node, -1 where unlabeled.
    splits : dict with disjoint "train"/"val"/"test" index arrays.
    degrees : int64 per-node degree of `adjacency`.
    num_classes : number of classes K.
    name : dataset name from the manifest.
    """

    n: int
    m: int
    adjacency: sp.csr_matrix
    features: np.ndarray
    labels: np.ndarray
    splits: dict
    degrees: np.ndarray
    num_classes: int
    name: str = "unnamed"

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def train_ids(self) -> np.ndarray:
        return self.splits["train"]

    def validate(self) -> None:
        a = self.adjacency
        if a.shape != (self.n, self.n):
            raise BundleError(f"adjacency shape {a.shape} != ({self.n}, {self.n})")
        if a.diagonal().any():
            raise BundleError("adjacency has nonzero diagonal")
        if (a != a.T).nnz != 0:
            raise BundleError("adjacency is not symmetric")
        if a.nnz != 2 * self.m:
            raise BundleError(f"stored entries {a.nnz} != 2*m = {2 * self.m}")
        if self.features.shape[0] != self.n:
            raise BundleError("feature row count != n")
        if self.labels.shape != (self.n,):
            raise BundleError("labels length != n")
        labeled = self.labels[self.labels != UNLABELED]
        if labeled.size and (labeled.min() < 0 or labeled.max() >= self.num_classes):
            raise BundleError("label out of range [0, K)")
        seen = np.concatenate([self.splits[k] for k in ("train", "val", "test")])
        if seen.size and (seen.min() < 0 or seen.max() >= self.n):
            raise BundleError("split index out of range")
        if np.unique(seen).size != seen.size:
            raise BundleError("overlapping splits")
        if not np.array_equal(self.degrees, np.diff(a.indptr)):
            raise BundleError("degrees do not match adjacency")


def _canonical_edges(edges: np.ndarray, n: int) -> np.ndarray:
    """Dedup + drop self-loops + orient (min, max); returns sorted (m, 2) array."""
    if edges.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.min() < 0 or edges.max() >= n:
        raise BundleError(f"edge endpoint out of range [0, {n})")
    keep = edges[:, 0] != edges[:, 1]
    edges = edges[keep]
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    pairs = np.unique(lo * n + hi)
    return np.column_stack([pairs // n, pairs % n])


def from_edges(
    n: int,
    edges: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    splits: dict,
    num_classes: int,
    name: str = "unnamed",
) -> GraphBundle:
    """Build a validated bundle from a (possibly dirty) directed edge list."""
    und = _canonical_edges(edges, n)
    m = und.shape[0]
    rows = np.concatenate([und[:, 0], und[:, 1]])
    cols = np.concatenate([und[:, 1], und[:, 0]])
    adj = sp.csr_matrix(
        (np.ones(rows.size, dtype=np.float64), (rows, cols)), shape=(n, n)
    )
    adj.sum_duplicates()
    adj.sort_indices()
    g = GraphBundle(
        n=n,
        m=m,
        adjacency=adj,
        features=np.asarray(features, dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int64),
        splits={k: np.sort(np.asarray(v, dtype=np.int64)) for k, v in splits.items()},
        degrees=np.diff(adj.indptr).astype(np.int64),
        num_classes=num_classes,
        name=name,
    )
    g.validate()
    return g


def _read_tsv_pairs(path: Path) -> np.ndarray:
    pairs = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise BundleError(f"{path.name}:{lineno}: expected two tab-separated fields")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise BundleError(f"{path.name}:{lineno}: non-integer field") from exc
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def read_features_bin(path: Path) -> np.ndarray:
    with path.open("rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise BundleError(f"{path.name}: bad magic {magic!r}")
        n, d = struct.unpack("<QQ", fh.read(16))
        data = np.fromfile(fh, dtype="<f4", count=n * d)
    if data.size != n * d:
        raise BundleError(f"{path.name}: truncated feature blob")
    return data.reshape(n, d)


def write_features_bin(path: Path, x: np.ndarray) -> None:
    x = np.ascontiguousarray(x, dtype="<f4")
    with path.open("wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<QQ", x.shape[0], x.shape[1]))
        x.tofile(fh)


def ingest_bundle(path: str | Path) -> GraphBundle:
    """Load and validate a bundle directory.

    Duplicate and self-loop edges are dropped; directed input is symmetrized.
    """
    path = Path(path)
    for fname in ("manifest.json", "edges.tsv", "features.bin", "labels.tsv", "splits.json"):
        if not (path / fname).exists():
            raise BundleError(f"missing file: {fname}")
    manifest = json.loads((path / "manifest.json").read_text())
    n, d, k = int(manifest["n"]), int(manifest["d"]), int(manifest["k"])

    features = read_features_bin(path / "features.bin")
    if features.shape != (n, d):
        raise BundleError(
            f"feature blob is {features.shape}, manifest says ({n}, {d})"
        )

    edges = _read_tsv_pairs(path / "edges.tsv")

    labels = np.full(n, UNLABELED, dtype=np.int64)
    label_pairs = _read_tsv_pairs(path / "labels.tsv")
    for node, cls in label_pairs:
        if node < 0 or node >= n:
            raise BundleError(f"labels.tsv: node id {node} out of range")
        if cls < 0 or cls >= k:
            raise BundleError(f"labels.tsv: label {cls} out of range [0, {k})")
        labels[node] = cls

    raw_splits = json.loads((path / "splits.json").read_text())
    splits = {key: np.asarray(raw_splits.get(key, []), dtype=np.int64) for key in ("train", "val", "test")}

    return from_edges(n, edges, features, labels, splits, num_classes=k,
                      name=manifest.get("name", path.name))


def save_bundle(g: GraphBundle, path: str | Path) -> None:
    """Serialize a bundle to the on-disk directory format (bit-exact features)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "manifest.json").write_text(
        json.dumps({"n": g.n, "d": g.d, "k": g.num_classes, "name": g.name}) + "\n"
    )
    coo = sp.triu(g.adjacency, k=1).tocoo()
    order = np.lexsort((coo.col, coo.row))
    with (path / "edges.tsv").open("w") as fh:
        for u, v in zip(coo.row[order], coo.col[order]):
            fh.write(f"{u}\t{v}\n")
    write_features_bin(path / "features.bin", g.features)
    with (path / "labels.tsv").open("w") as fh:
        for node in np.nonzero(g.labels != UNLABELED)[0]:
            fh.write(f"{node}\t{g.labels[node]}\n")
    (path / "splits.json").write_text(
        json.dumps({k: [int(i) for i in v] for k, v in g.splits.items()}) + "\n"
    )


@dataclass(frozen=True)
class DiffusionMatrix:
    """Lazy-random-walk operator P = I/2 + D^-1 A / 2 (row-stochastic).

    Isolated nodes get a unit diagonal so every row sums to one. `col_norms`
    holds per-column Euclidean norms (always positive: the diagonal is >= 1/2).
    """

    p_csr: sp.csr_matrix
    col_norms: np.ndarray
    n: int

    def normalized_column(self, i: int) -> np.ndarray:
        return self.p_csr[:, i].toarray().ravel() / self.col_norms[i]


def build_diffusion(g: GraphBundle) -> DiffusionMatrix:
    deg = g.degrees.astype(np.float64)
    inv = np.zeros_like(deg)
    nz = deg > 0
    inv[nz] = 0.5 / deg[nz]
    p = sp.diags(np.where(nz, 0.5, 1.0)) + sp.diags(inv) @ g.adjacency
    p = p.tocsr()
    p.sort_indices()
    col_norms = np.sqrt(np.asarray(p.power(2).sum(axis=0)).ravel())
    return DiffusionMatrix(p_csr=p, col_norms=col_norms, n=g.n)


@dataclass(frozen=True)
class NormalizedLaplacian:
    """L = I - D^-1/2 A D^-1/2; isolated nodes keep diagonal 1."""

    l_csr: sp.csr_matrix
    isolated_diag_one: bool = True


def build_normalized_laplacian(g: GraphBundle) -> NormalizedLaplacian:
    l = normalized_laplacian_csr(g.adjacency, g.degrees)
    return NormalizedLaplacian(l_csr=l)


def normalized_laplacian_csr(adjacency: sp.spmatrix, degrees: np.ndarray) -> sp.csr_matrix:
    """I - D^-1/2 A D^-1/2 with the given degree vector (may exceed row sums)."""
    deg = np.asarray(degrees, dtype=np.float64)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    scaled = sp.diags(inv_sqrt) @ adjacency @ sp.diags(inv_sqrt)
    l = sp.eye(adjacency.shape[0], format="csr") - scaled.tocsr()
    l = l.tocsr()
    l.sort_indices()
    return l


def homophily(g: GraphBundle) -> float:
    """Fraction of undirected edges whose endpoints share a class label."""
    if g.m == 0:
        raise ValueError("undefined homophily: graph has no edges")
    coo = sp.triu(g.adjacency, k=1).tocoo()
    ya, yb = g.labels[coo.row], g.labels[coo.col]
    if (ya == UNLABELED).any() or (yb == UNLABELED).any():
        raise ValueError("homophily requires labels on all edge endpoints")
    return float(np.mean(ya == yb))


def add_random_edges(g: GraphBundle, count: int, seed: int) -> GraphBundle:
    """Add `count` distinct absent undirected edges, sampled uniformly.

    Deterministic given `seed`. Used to degrade homophily.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    total_pairs = g.n * (g.n - 1) // 2
    absent = total_pairs - g.m
    if count > absent:
        raise ValueError(f"count {count} exceeds number of absent node pairs {absent}")
    existing = sp.triu(g.adjacency, k=1).tocoo()
    old = np.column_stack([existing.row, existing.col])
    if count == 0:
        new = np.zeros((0, 2), dtype=np.int64)
    else:
        rng = np.random.default_rng(seed)
        if g.n <= 2048:
            # Small graphs: enumerate absent pairs and draw without replacement.
            dense = g.adjacency.toarray().astype(bool)
            iu, ju = np.triu_indices(g.n, k=1)
            mask = ~dense[iu, ju]
            candidates = np.column_stack([iu[mask], ju[mask]])
            pick = rng.choice(candidates.shape[0], size=count, replace=False)
            new = candidates[np.sort(pick)]
        else:
            taken = set(int(u) * g.n + int(v) for u, v in old)
            new_keys = []
            while len(new_keys) < count:
                u = int(rng.integers(0, g.n))
                v = int(rng.integers(0, g.n))
                if u == v:
                    continue
                key = min(u, v) * g.n + max(u, v)
                if key in taken:
                    continue
                taken.add(key)
                new_keys.append(key)
            new_keys = np.asarray(new_keys, dtype=np.int64)
            new = np.column_stack([new_keys // g.n, new_keys % g.n])
    edges = np.vstack([old, new])
    return from_edges(g.n, edges, g.features, g.labels, g.splits,
                      num_classes=g.num_classes, name=g.name)

"""Coreset selection over training nodes.

Methods:

* ``sggc``         -- two-stage greedy: geodesic-ascent spread over normalized
                      diffusion columns picks a candidate slab per iteration,
                      facility-location marginal gain refines the pick.
* ``scgiga``       -- spread stage alone (slack 1, no refinement weights).
* ``craig_linear`` -- facility-location greedy alone, counting weights.
* ``uniform`` / ``herding`` / ``kcenter`` -- model-agnostic baselines on raw
                      features.

All tie-breaks resolve to the lowest training-node id, so runs are exactly
reproducible.
"""

from __future__ import annotations

import heapq
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bundle import DiffusionMatrix, GraphBundle, build_diffusion

DEGENERATE_RESIDUAL = 1e-12
DISTANCE_CACHE_LIMIT = 4096

# Named sub-streams hanging off the user seed.
_STREAM_UNIFORM = 101


@dataclass
class CoresetConfig:
    size_c: int
    method: str = "sggc"
    kappa: float = 0.999           # slack in (0,1]; 0 = pure submodular picking
    ego_size_p: int = 16
    depth_l: int = 2
    max_budget_s: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must be in [0, 1]")
        if self.size_c < 1:
            raise ValueError("size_c must be >= 1")
        if self.max_budget_s < 1:
            raise ValueError("max_budget_s must be >= 1")


@dataclass
class CoresetResult:
    """Selected training nodes with stage and combined weights.

    Weight vectors are dense over the training split (aligned with
    `train_ids`); `selected` lists original node ids in pick order. The JSON
    form stores the nonzero weight entries aligned with `selected`.
    """

    method: str
    selected: np.ndarray
    w_a: np.ndarray
    w_c: np.ndarray
    w: np.ndarray
    train_ids: np.ndarray
    trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def selected_weights(self) -> np.ndarray:
        pos = _positions(self.train_ids, self.selected)
        return self.w[pos]

    def to_json(self) -> str:
        pos = _positions(self.train_ids, self.selected)
        payload = {
            "method": self.method,
            "selected": [int(i) for i in self.selected],
            "w": [float(v) for v in self.w[pos]],
            "w_a": [float(v) for v in self.w_a[pos]],
            "w_c": [float(v) for v in self.w_c[pos]],
            "n_train": int(self.train_ids.size),
            "train_ids": [int(i) for i in self.train_ids],
            "trace": self.trace,
            "warnings": self.warnings,
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CoresetResult":
        payload = json.loads(text)
        train_ids = np.asarray(payload["train_ids"], dtype=np.int64)
        selected = np.asarray(payload["selected"], dtype=np.int64)
        pos = _positions(train_ids, selected)
        dense = {}
        for key in ("w", "w_a", "w_c"):
            vec = np.zeros(train_ids.size)
            vec[pos] = payload[key]
            dense[key] = vec
        return cls(method=payload["method"], selected=selected,
                   w_a=dense["w_a"], w_c=dense["w_c"], w=dense["w"],
                   train_ids=train_ids, trace=payload.get("trace", []),
                   warnings=payload.get("warnings", []))


def _positions(train_ids: np.ndarray, node_ids: np.ndarray) -> np.ndarray:
    lookup = {int(t): i for i, t in enumerate(train_ids)}
    return np.asarray([lookup[int(i)] for i in node_ids], dtype=np.int64)


# ---------------------------------------------------------------------------
# Pairwise loss-difference surrogate and facility location
# ---------------------------------------------------------------------------

class LossDistanceOracle:
    """Pairwise surrogate for the worst-case loss difference of two nodes.

    d(i, j) = ||v_i - v_j||_2 when labels agree, else d_max (twice the largest
    same-class distance), which makes cross-class coverage maximally costly.
    The full matrix is cached only below `cache_limit` training nodes;
    otherwise columns are computed on demand.
    """

    def __init__(self, vs: np.ndarray, labels: np.ndarray,
                 cache_limit: int = DISTANCE_CACHE_LIMIT):
        self.vs = np.asarray(vs, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.n_t = self.vs.shape[0]
        self._sq = (self.vs ** 2).sum(axis=1)
        self._matrix = None
        self.d_max = self._compute_d_max(exact=self.n_t <= cache_limit)
        if self.n_t <= cache_limit:
            self._matrix = self._full_matrix()

    def _euclid_to(self, j: int) -> np.ndarray:
        diff2 = self._sq + self._sq[j] - 2.0 * (self.vs @ self.vs[j])
        return np.sqrt(np.maximum(diff2, 0.0))

    def _compute_d_max(self, exact: bool) -> float:
        best = 0.0
        for cls in np.unique(self.labels):
            members = np.nonzero(self.labels == cls)[0]
            if members.size < 2:
                continue
            pts = self.vs[members]
            if exact:
                sq = (pts ** 2).sum(axis=1)
                d2 = sq[:, None] + sq[None, :] - 2.0 * pts @ pts.T
                best = max(best, float(np.sqrt(max(d2.max(), 0.0))))
            else:
                # Diameter bound via the centroid: cheap and never below the
                # exact value, so cross-class stays maximally costly.
                centroid = pts.mean(axis=0)
                radius = np.linalg.norm(pts - centroid, axis=1).max()
                best = max(best, 2.0 * float(radius))
        if best == 0.0:
            # No informative same-class pair; fall back to the global spread.
            spread = float(np.linalg.norm(self.vs - self.vs.mean(axis=0), axis=1).max())
            best = 2.0 * spread if spread > 0 else 1.0
        return 2.0 * best

    def _full_matrix(self) -> np.ndarray:
        d2 = self._sq[:, None] + self._sq[None, :] - 2.0 * self.vs @ self.vs.T
        dist = np.sqrt(np.maximum(d2, 0.0))
        np.fill_diagonal(dist, 0.0)
        same = self.labels[:, None] == self.labels[None, :]
        return np.where(same, dist, self.d_max)

    def distance_column(self, j: int) -> np.ndarray:
        """d(i, j) for all training positions i."""
        if self._matrix is not None:
            return self._matrix[:, j]
        col = self._euclid_to(j)
        col[j] = 0.0
        return np.where(self.labels == self.labels[j], col, self.d_max)


def coverage_state(oracle: LossDistanceOracle, current) -> np.ndarray:
    """min over the current set (plus the auxiliary element at d_max)."""
    cur = np.full(oracle.n_t, oracle.d_max)
    for pos in current:
        np.minimum(cur, oracle.distance_column(int(pos)), out=cur)
    return cur


def facility_location_value(oracle: LossDistanceOracle, subset) -> float:
    """F(V) = H({aux}) - H(V + {aux}); monotone submodular, F(empty) = 0."""
    cur = coverage_state(oracle, subset)
    return float((oracle.d_max - cur).sum() / oracle.n_t)


def facility_location_gain(oracle: LossDistanceOracle, current, candidate: int) -> float:
    """Marginal gain F(current + {candidate}) - F(current); always >= 0."""
    cur = coverage_state(oracle, current)
    gain = np.maximum(0.0, cur - oracle.distance_column(int(candidate)))
    return float(gain.sum() / oracle.n_t)


def _gains_against(oracle: LossDistanceOracle, cur: np.ndarray, candidates) -> np.ndarray:
    out = np.empty(len(candidates))
    for k, pos in enumerate(candidates):
        out[k] = np.maximum(0.0, cur - oracle.distance_column(int(pos))).sum()
    return out / oracle.n_t


def assignment_counts(oracle: LossDistanceOracle, selected_pos) -> np.ndarray:
    """How many training nodes map to each selected element as their nearest.

    Ties to the lowest selected id; a selected node always maps to itself, so
    every selected element has count >= 1.
    """
    selected_pos = np.asarray(selected_pos, dtype=np.int64)
    order = np.argsort(selected_pos)  # lowest id wins argmin ties
    cols = np.stack([oracle.distance_column(int(p)) for p in selected_pos[order]], axis=1)
    best = np.argmin(cols, axis=1)
    pos_in_order = {int(p): k for k, p in enumerate(selected_pos[order])}
    for p in selected_pos:
        best[int(p)] = pos_in_order[int(p)]
    counts_ordered = np.bincount(best, minlength=selected_pos.size)
    counts = np.empty_like(counts_ordered)
    counts[order] = counts_ordered
    return counts.astype(np.float64)


# ---------------------------------------------------------------------------
# Geodesic ascent over normalized diffusion columns
# ---------------------------------------------------------------------------

def normalized_train_columns(diff: DiffusionMatrix, train_ids: np.ndarray):
    """(normalized columns, raw columns) of P restricted to training nodes."""
    csc = diff.p_csr.tocsc()
    raw = csc[:, train_ids]
    norms = diff.col_norms[train_ids]
    p_hat = raw @ sp.diags(1.0 / norms)
    return p_hat.tocsc(), raw.tocsc(), norms


def giga_direction(p_cols: sp.spmatrix, w_t: np.ndarray):
    """Residual target direction and per-candidate geodesic alignments.

    `p_cols` holds unit-norm candidate columns; `w_t` is the current sphere
    weight vector (zero at the first step). Returns (a_t, alignments) where a
    candidate already fully represented by the current combination gets -inf.
    """
    n = p_cols.shape[0]
    pw = np.asarray(p_cols @ w_t).ravel()
    return _direction_from_state(p_cols, pw, n)


def _direction_from_state(p_hat: sp.spmatrix, pw: np.ndarray, n: int):
    ones_dot_pw = pw.sum()
    a_num = 1.0 - ones_dot_pw * pw
    a_norm = np.linalg.norm(a_num)
    if a_norm < DEGENERATE_RESIDUAL:
        return np.zeros(n), np.full(p_hat.shape[1], -np.inf)
    a = a_num / a_norm
    c = np.asarray(p_hat.T @ pw).ravel()
    s = np.asarray(p_hat.T @ a).ravel()
    q = float(pw @ pw)
    resid_sq = np.maximum(1.0 - c * c * (2.0 - q), 0.0)
    resid = np.sqrt(resid_sq)
    a_dot_pw = float(a @ pw)
    with np.errstate(divide="ignore", invalid="ignore"):
        align = (s - c * a_dot_pw) / resid
    align[resid < DEGENERATE_RESIDUAL] = -np.inf
    return a, align


def _geodesic_step(ones_score: float, z1: float, z2: float) -> float:
    """Step size from the three inner products; clamped to [0, 1]."""
    num = ones_score - z1 * z2
    den = num + (z1 - ones_score * z2)
    if abs(den) < 1e-300:
        return 1.0 if num > 0 else 0.0
    return float(np.clip(num / den, 0.0, 1.0))


def _literal_rescale(n: int, s_raw_norm: float) -> float:
    # Scale mapping sphere weights back toward the 1/n target (printed form).
    if s_raw_norm <= 0.0:
        return 0.0
    return 1.0 / (n * s_raw_norm)


def _objective(n: int, scale: float, z1: float) -> float:
    # ||scale * P(w) - 1/n|| with P(w) on the unit sphere.
    val = scale * scale - 2.0 * scale * z1 / np.sqrt(n) + 1.0 / n
    return float(np.sqrt(max(val, 0.0)))


def _spread_loop(g: GraphBundle, diff: DiffusionMatrix, cfg: CoresetConfig,
                 oracle: LossDistanceOracle | None):
    """Shared engine for sggc (oracle given) and scgiga (oracle None)."""
    train_ids = g.train_ids
    n_t = train_ids.size
    if not 1 <= cfg.size_c <= n_t:
        raise ValueError(f"size_c must be in [1, {n_t}]")
    n = g.n
    p_hat, p_raw, _ = normalized_train_columns(diff, train_ids)
    ones_scores = np.asarray(p_hat.T @ np.full(n, 1.0 / np.sqrt(n))).ravel()

    w_sphere = np.zeros(n_t)
    pw = np.zeros(n)
    s_raw = np.zeros(n)
    cur = None if oracle is None else coverage_state(oracle, [])
    selected_pos: list[int] = []
    trace: list[dict] = []
    warn: list[str] = []

    stopped = False
    for t in range(cfg.size_c):
        if stopped or len(selected_pos) >= cfg.size_c:
            break
        _, align = _direction_from_state(p_hat, pw, n)
        max_align = align.max()
        if not np.isfinite(max_align):
            warn.append(f"terminated early at iteration {t}: all candidates represented")
            break
        if oracle is None:
            slab = np.asarray([int(np.argmax(align))])
        elif cfg.kappa == 0.0:
            slab = np.arange(n_t)
        elif max_align <= 0.0:
            slab = np.asarray([int(np.argmax(align))])
        else:
            slab = np.nonzero(align >= cfg.kappa * max_align)[0]

        budget = min(cfg.max_budget_s, cfg.size_c - len(selected_pos))
        if oracle is None:
            batch = [int(slab[0])]
        else:
            gains = _gains_against(oracle, cur, slab)
            order = np.lexsort((slab, -gains))
            batch = [int(slab[k]) for k in order[:budget]]

        for pos in batch:
            z1 = float(pw.sum()) / np.sqrt(n)
            z2 = float(np.asarray(p_hat[:, pos].T @ pw).ravel()[0])
            eta = _geodesic_step(float(ones_scores[pos]), z1, z2)
            col_hat = np.asarray(p_hat[:, pos].todense()).ravel()
            col_raw = np.asarray(p_raw[:, pos].todense()).ravel()
            new_pw = (1.0 - eta) * pw + eta * col_hat
            nrm = np.linalg.norm(new_pw)
            if nrm < DEGENERATE_RESIDUAL:
                warn.append(f"degenerate update at iteration {t}; stopping")
                stopped = True
                break
            w_sphere *= (1.0 - eta)
            w_sphere[pos] += eta
            w_sphere /= nrm
            pw = new_pw / nrm
            s_raw = ((1.0 - eta) * s_raw + eta * col_raw) / nrm
            gain_val = float("nan")
            if oracle is not None:
                col = oracle.distance_column(pos)
                gain_val = float(np.maximum(0.0, cur - col).sum() / oracle.n_t)
                np.minimum(cur, col, out=cur)
            if pos not in selected_pos:
                selected_pos.append(pos)
            z1_new = float(pw.sum()) / np.sqrt(n)
            scale = _literal_rescale(n, float(np.linalg.norm(s_raw)))
            trace.append({
                "t": t,
                "chosen": int(train_ids[pos]),
                "alignment": float(align[pos]),
                "gain": gain_val,
                "objective": _objective(n, scale, z1_new),
                "target_alignment": z1_new,
            })
    return train_ids, np.asarray(selected_pos, dtype=np.int64), w_sphere, s_raw, trace, warn


def _finalize_spread(g, diff, train_ids, selected_pos, w_sphere, s_raw,
                     trace, warn, oracle, method):
    n_t = train_ids.size
    norms = diff.col_norms[train_ids]
    scale = _literal_rescale(g.n, float(np.linalg.norm(s_raw)))
    w_a = np.zeros(n_t)
    if selected_pos.size:
        w_a = w_sphere * scale / norms
        w_a[w_a < 0] = 0.0
    w_c = np.zeros(n_t)
    if selected_pos.size:
        if oracle is not None:
            w_c[selected_pos] = assignment_counts(oracle, selected_pos)
        else:
            w_c[selected_pos] = 1.0
    if method == "scgiga":
        combined = w_a.copy()
    else:
        combined = w_a * w_c
    total = combined.sum()
    if total > 0:
        combined = combined / total
    return CoresetResult(
        method=method,
        selected=train_ids[selected_pos],
        w_a=w_a, w_c=w_c, w=combined,
        train_ids=train_ids, trace=trace, warnings=warn,
    )


def sggc_select(g: GraphBundle, diff: DiffusionMatrix, spectral_egos,
                cfg: CoresetConfig) -> CoresetResult:
    """Two-stage greedy: slab by geodesic alignment, pick by facility gain."""
    vs = np.stack([se.v for se in spectral_egos])
    oracle = LossDistanceOracle(vs, g.labels[g.train_ids])
    parts = _spread_loop(g, diff, cfg, oracle)
    return _finalize_spread(g, diff, *parts, oracle=oracle, method="sggc")


def scgiga_select(g: GraphBundle, diff: DiffusionMatrix,
                  cfg: CoresetConfig) -> CoresetResult:
    """Spread stage alone: argmax alignment each step, weights from the sphere."""
    parts = _spread_loop(g, diff, cfg, oracle=None)
    return _finalize_spread(g, diff, *parts, oracle=None, method="scgiga")


def craig_linear_select(g: GraphBundle, spectral_egos,
                        cfg: CoresetConfig) -> CoresetResult:
    """Facility-location lazy greedy (CELF); weights are assignment counts."""
    train_ids = g.train_ids
    n_t = train_ids.size
    if not 1 <= cfg.size_c <= n_t:
        raise ValueError(f"size_c must be in [1, {n_t}]")
    vs = np.stack([se.v for se in spectral_egos])
    oracle = LossDistanceOracle(vs, g.labels[g.train_ids])
    cur = coverage_state(oracle, [])
    init_gains = _gains_against(oracle, cur, np.arange(n_t))
    heap = [(-init_gains[j], j, 0) for j in range(n_t)]
    heapq.heapify(heap)
    selected_pos: list[int] = []
    trace: list[dict] = []
    round_no = 0
    while len(selected_pos) < cfg.size_c and heap:
        round_no += 1
        while True:
            neg_gain, pos, stamp = heapq.heappop(heap)
            if stamp == round_no:
                break
            fresh = float(np.maximum(0.0, cur - oracle.distance_column(pos)).sum() / n_t)
            heapq.heappush(heap, (-fresh, pos, round_no))
        selected_pos.append(pos)
        np.minimum(cur, oracle.distance_column(pos), out=cur)
        trace.append({"t": round_no - 1, "chosen": int(train_ids[pos]),
                      "alignment": float("nan"), "gain": -neg_gain,
                      "objective": float("nan"), "target_alignment": float("nan")})
    selected_pos = np.asarray(selected_pos, dtype=np.int64)
    w_c = np.zeros(n_t)
    w_c[selected_pos] = assignment_counts(oracle, selected_pos)
    w_a = np.zeros(n_t)
    w_a[selected_pos] = 1.0 / selected_pos.size
    w = w_c / w_c.sum()
    return CoresetResult(method="craig_linear", selected=train_ids[selected_pos],
                         w_a=w_a, w_c=w_c, w=w, train_ids=train_ids, trace=trace)


# ---------------------------------------------------------------------------
# Model-agnostic baselines
# ---------------------------------------------------------------------------

def _herding_order(points: np.ndarray, budget: int) -> list[int]:
    """Greedy moment matching toward the mean; returns local indices."""
    target = points.mean(axis=0)
    chosen: list[int] = []
    taken = np.zeros(points.shape[0], dtype=bool)
    running = np.zeros_like(target)
    for t in range(budget):
        goal = target * (t + 1) - running
        dist = np.linalg.norm(points - goal, axis=1)
        dist[taken] = np.inf
        best = int(np.argmin(dist))
        chosen.append(best)
        taken[best] = True
        running = running + points[best]
    return chosen


def baseline_select(g: GraphBundle, features: np.ndarray,
                    cfg: CoresetConfig) -> CoresetResult:
    """uniform / herding / kcenter over raw feature rows of training nodes."""
    train_ids = g.train_ids
    n_t = train_ids.size
    if not 1 <= cfg.size_c <= n_t:
        raise ValueError(f"size_c must be in [1, {n_t}]")
    pts = np.asarray(features, dtype=np.float64)[train_ids]
    c = cfg.size_c
    warn: list[str] = []

    if cfg.method == "uniform":
        rng = np.random.default_rng([cfg.seed, _STREAM_UNIFORM])
        pos = np.sort(rng.choice(n_t, size=c, replace=False))
    elif cfg.method == "herding":
        labels = g.labels[train_ids]
        classes, counts = np.unique(labels, return_counts=True)
        if c < classes.size:
            warn.append("coreset smaller than the class count; some classes get budget 0")
        budgets = np.floor(c * counts / n_t).astype(int)
        remainder = c - budgets.sum()
        for idx in np.lexsort((classes, -counts))[:remainder]:
            budgets[idx] += 1
        pos_list: list[int] = []
        for cls, b in zip(classes, budgets):
            if b == 0:
                continue
            members = np.nonzero(labels == cls)[0]
            local = _herding_order(pts[members], min(b, members.size))
            pos_list.extend(int(members[i]) for i in local)
        pos = np.asarray(sorted(pos_list), dtype=np.int64)
    elif cfg.method == "kcenter":
        center = pts.mean(axis=0)
        seed_pos = int(np.argmin(np.linalg.norm(pts - center, axis=1)))
        pos_list = [seed_pos]
        min_dist = np.linalg.norm(pts - pts[seed_pos], axis=1)
        while len(pos_list) < c:
            far = int(np.argmax(min_dist))
            pos_list.append(far)
            np.minimum(min_dist, np.linalg.norm(pts - pts[far], axis=1), out=min_dist)
        pos = np.asarray(pos_list, dtype=np.int64)
    else:
        raise ValueError(f"unknown baseline method {cfg.method!r}")

    w = np.zeros(n_t)
    w[pos] = 1.0 / c
    w_c = np.zeros(n_t)
    w_c[pos] = 1.0
    trace = [{"t": t, "chosen": int(train_ids[p]), "alignment": float("nan"),
              "gain": float("nan"), "objective": float("nan"),
              "target_alignment": float("nan")} for t, p in enumerate(pos)]
    return CoresetResult(method=cfg.method, selected=train_ids[pos],
                         w_a=w.copy(), w_c=w_c, w=w, train_ids=train_ids,
                         trace=trace, warnings=warn)


def select_coreset(g: GraphBundle, cfg: CoresetConfig,
                   diff: DiffusionMatrix | None = None,
                   spectral_egos=None) -> CoresetResult:
    """Dispatch on cfg.method, building diffusion/spectral inputs as needed."""
    from .ego import training_spectral_egos

    if cfg.method in ("uniform", "herding", "kcenter"):
        return baseline_select(g, g.features, cfg)
    if diff is None:
        diff = build_diffusion(g)
    if cfg.method == "scgiga":
        return scgiga_select(g, diff, cfg)
    if spectral_egos is None:
        spectral_egos = training_spectral_egos(g, diff, cfg.depth_l, cfg.ego_size_p)
    if cfg.method == "sggc":
        return sggc_select(g, diff, spectral_egos, cfg)
    if cfg.method == "craig_linear":
        return craig_linear_select(g, spectral_egos, cfg)
    raise ValueError(f"unknown method {cfg.method!r}")

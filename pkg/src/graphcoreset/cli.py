"""Command-line pipeline: fetch, ingest, select, compress, train, eval, sweep, report.

Every command is a pure function of (inputs, config, seeds). Exit codes:
0 success, 1 numerical/runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import compress as comp
from . import gnn
from .bundle import (BundleError, add_random_edges, build_diffusion, homophily,
                     ingest_bundle, save_bundle)
from .ego import spectral_ego_embeddings, training_spectral_egos
from .planetoid import DATASETS, fetch_planetoid, planetoid_to_bundle
from .selection import (CoresetConfig, CoresetResult, LossDistanceOracle,
                        facility_location_value, select_coreset)
from .spectral import rsd_of_ego_embeddings

# (kappa, max budget, diffusion ego size) tuned per dataset.
PRESETS = {
    "cora": (0.999, 1, 16),
    "citeseer": (0.5, 1, 8),
    "pubmed": (0.1, 1, 16),
    "flickr": (0.5, 10, 8),
    "arxiv": (0.1, 10, 8),
    "products": (0.1, 8, 2),
    "reddit": (0.1, 8, 8),
}

# Named sub-streams of the global seed.
_STREAM_SELECT = 1
_STREAM_EDGES = 3


def _parse_seeds(text: str) -> list:
    seeds = [int(s) for s in text.replace(" ", "").split(",") if s]
    if not seeds:
        raise ValueError("empty seed list")
    return seeds


def _parse_values(text: str) -> list:
    vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    return vals


def _load_config(path: str) -> dict:
    """TOML-style key=value lines; '#' comments allowed."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BundleError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value.strip("\"'")
    return out


def _stats_rows(g) -> list:
    total = max(g.n, 1)
    return [
        ("nodes", g.n), ("edges (directed entries)", 2 * g.m),
        ("features", g.d), ("classes", g.num_classes),
        ("train %", 100.0 * g.splits["train"].size / total),
        ("val %", 100.0 * g.splits["val"].size / total),
        ("test %", 100.0 * g.splits["test"].size / total),
    ]


def _print_stats(g) -> None:
    print(f"dataset: {g.name}")
    for key, val in _stats_rows(g):
        if isinstance(val, float):
            print(f"  {key:<26}{val:.1f}")
        else:
            print(f"  {key:<26}{val}")


def _coreset_size(ratio: float, n_train: int) -> int:
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must be in (0, 1]")
    return max(1, int(round(ratio * n_train)))


def cmd_fetch(args) -> int:
    fetch_planetoid(args.dataset, args.raw_dir)
    print(f"fetched {args.dataset} into {args.raw_dir}")
    return 0


def cmd_ingest(args) -> int:
    if args.format == "planetoid":
        g = planetoid_to_bundle(args.raw, args.name)
    elif args.format == "bundle":
        g = ingest_bundle(args.raw)
    else:
        raise BundleError(f"unknown format {args.format!r}")
    if args.out:
        save_bundle(g, args.out)
        print(f"wrote bundle to {args.out}")
    _print_stats(g)
    try:
        print(f"  homophily                 {homophily(g):.4f}")
    except ValueError:
        pass
    return 0


def _build_cfg(args, n_train: int) -> CoresetConfig:
    kappa, budget, ego_size = args.kappa, args.budget, args.ego_size
    if args.preset:
        pk, pb, pe = PRESETS[args.preset]
        kappa = pk if kappa is None else kappa
        budget = pb if budget is None else budget
        ego_size = pe if ego_size is None else ego_size
    kappa = 0.999 if kappa is None else kappa
    budget = 1 if budget is None else budget
    ego_size = 16 if ego_size is None else ego_size
    if args.size is not None:
        size_c = args.size
    else:
        size_c = _coreset_size(args.ratio, n_train)
    return CoresetConfig(size_c=size_c, method=args.method, kappa=kappa,
                         ego_size_p=ego_size, depth_l=args.depth,
                         max_budget_s=int(budget),
                         seed=int(np.random.SeedSequence([args.seed, _STREAM_SELECT])
                                  .generate_state(1)[0]))


def cmd_select(args) -> int:
    g = ingest_bundle(args.bundle)
    n_train = g.splits["train"].size
    cfg = _build_cfg(args, n_train)
    print(f"method={cfg.method} c={cfg.size_c} (c/n_t={cfg.size_c / n_train:.3f}, "
          f"c/n={cfg.size_c / g.n:.3f}) kappa={cfg.kappa} p={cfg.ego_size_p} "
          f"s={cfg.max_budget_s}")
    diff = build_diffusion(g) if cfg.method in ("sggc", "scgiga", "craig_linear") else None
    egos = None
    if cfg.method in ("sggc", "craig_linear"):
        egos = training_spectral_egos(g, diff, cfg.depth_l, cfg.ego_size_p)
    result = select_coreset(g, cfg, diff=diff, spectral_egos=egos)
    print(f"selected {result.selected.size} nodes")
    print(f"objective ||P w_a - 1/n||: initial {1.0 / np.sqrt(g.n):.6f}", end="")
    objectives = [row["objective"] for row in result.trace
                  if np.isfinite(row.get("objective", float("nan")))]
    print(f", final {objectives[-1]:.6f}" if objectives else ", final n/a")
    if egos is not None:
        vs = np.stack([se.v for se in egos])
        oracle = LossDistanceOracle(vs, g.labels[g.train_ids])
        pos = [int(np.where(g.train_ids == i)[0][0]) for i in result.selected]
        print(f"facility value F(V_w): {facility_location_value(oracle, pos):.6f}")
    out = Path(args.out or "coreset.json")
    out.write_text(result.to_json())
    print(f"wrote {out}")
    if args.trace_csv:
        _write_trace_csv(args.trace_csv, result)
    for msg in result.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    return 0


def _write_trace_csv(path: str, result: CoresetResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "chosen", "alignment", "gain", "objective",
                         "target_alignment"])
        for row in result.trace:
            writer.writerow([row["t"], row["chosen"], row["alignment"],
                             row["gain"], row["objective"],
                             row["target_alignment"]])


def cmd_compress(args) -> int:
    g = ingest_bundle(args.bundle)
    result = CoresetResult.from_json(Path(args.coreset).read_text())
    cc = comp.compress_coreset(g, result, args.depth)
    comp.write_compressed(args.out, cc)
    print(f"wrote {args.out}: union={cc.nodes.size} centers={cc.center_ids.size} "
          f"strata values={cc.strata_values()} (budget {cc.budget_limit()}), "
          f"center values={cc.center_ids.size * cc.feature_dim}")
    if args.report:
        _print_storage(cc)
    return 0


def _print_storage(cc) -> None:
    print(f"{'stratum':>8} {'|V|':>8} {'q':>5} {'values':>10} "
          f"{'err_pre':>12} {'err_post':>12}")
    for level, size, rank, values, pre, post in comp.storage_report(cc):
        print(f"{level:>8} {size:>8} {rank:>5} {values:>10} {pre:>12.4e} {post:>12.4e}")
    print(f"compressed feature bytes: {comp.compressed_bytes(cc)}")
    print(f"uncompressed union bytes: {comp.uncompressed_bytes(cc)}")


def train_eval_runs(g, data, arch: str, seeds, epochs: int, hidden: int,
                    lr: float = 0.01, weight_decay: float = 5e-4,
                    dropout: float = 0.5, jobs: int = 1):
    """Train per seed on `data` (bundle or coreset graph), test on `g`."""

    def one(seed: int) -> float:
        model = gnn.init_model(arch, g.d, g.num_classes, hidden_dim=hidden,
                               dropout_rate=dropout, seed=seed)
        cfg = gnn.TrainConfig(epochs=epochs, lr=lr, weight_decay=weight_decay,
                              seed=seed)
        gnn.train(model, data, cfg)
        return gnn.evaluate(model, g, "test")

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, seeds))
    return [one(s) for s in seeds]


def cmd_train(args) -> int:
    g = ingest_bundle(args.bundle)
    if args.coreset:
        result = CoresetResult.from_json(Path(args.coreset).read_text())
        if args.compressed:
            cc = comp.read_compressed(args.compressed)
            data = comp.decompress(cc)
        else:
            data = comp.coreset_training_graph(
                g, result, args.depth, compressed=args.compress_features,
                centers_only=args.centers_only)
    else:
        data = g
    seeds = _parse_seeds(args.seeds)
    accs = train_eval_runs(g, data, args.arch, seeds, args.epochs, args.hidden,
                           jobs=args.jobs)
    mean = float(np.mean(accs))
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    summary = {"mean": mean, "std": std, "runs": accs, "seeds": seeds,
               "arch": args.arch, "epochs": args.epochs}
    print(f"test accuracy: {100 * mean:.1f} +/- {100 * std:.1f} over {len(seeds)} seeds")
    if args.out:
        Path(args.out).write_text(json.dumps(summary, indent=1))
        print(f"wrote {args.out}")
    if args.history_csv or args.save_model:
        model = gnn.init_model(args.arch, g.d, g.num_classes, hidden_dim=args.hidden,
                               seed=seeds[0])
        cfg = gnn.TrainConfig(epochs=args.epochs, seed=seeds[0])
        val_graph = g if g.splits["val"].size else None
        _, history = gnn.train(model, data, cfg, val_graph=val_graph)
        if args.history_csv:
            with open(args.history_csv, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["epoch", "loss", "train_acc", "val_acc"])
                writer.writerows(history)
        if args.save_model:
            gnn.save_model(args.save_model, model)
    return 0


def cmd_eval(args) -> int:
    g = ingest_bundle(args.bundle)
    model = gnn.load_model(args.model)
    acc = gnn.evaluate(model, g, args.split)
    print(f"{args.split} accuracy: {acc:.4f}")
    return 0


def cmd_sweep(args) -> int:
    values = _parse_values(args.values)
    if not values:
        raise BundleError("empty sweep values")
    g = ingest_bundle(args.bundle)
    seeds = _parse_seeds(args.seeds)
    rows = []
    if args.axis == "rsd":
        diff = build_diffusion(g)
        for p in values:
            rsds = []
            for draw in range(args.draws):
                model = gnn.init_model("gcn", g.d, g.num_classes,
                                       hidden_dim=args.hidden, seed=1000 + draw)
                embs = spectral_ego_embeddings(g, diff, model, args.depth, int(p))
                rsds.append(rsd_of_ego_embeddings(embs))
            rows.append((int(p), float(np.mean(rsds))))
        header = ["p", "rsd"]
    elif args.axis in ("ego_size", "kappa", "budget"):
        for value in values:
            sel_args = _SweepArgs(args, value)
            cfg = _build_cfg(sel_args, g.splits["train"].size)
            result = select_coreset(g, cfg)
            data = comp.coreset_training_graph(g, result, args.depth, compressed=False)
            accs = train_eval_runs(g, data, args.arch, seeds, args.epochs,
                                   args.hidden, jobs=args.jobs)
            rows.append((value, float(np.mean(accs)),
                         float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0))
        header = [args.axis, "acc_mean", "acc_std"]
    elif args.axis == "homophily":
        for count in values:
            edge_seed = int(np.random.SeedSequence(
                [args.seed, _STREAM_EDGES, int(count)]).generate_state(1)[0])
            degraded = add_random_edges(g, int(count), seed=edge_seed)
            h = homophily(degraded)
            sel_args = _SweepArgs(args, None)
            cfg = _build_cfg(sel_args, degraded.splits["train"].size)
            result = select_coreset(degraded, cfg)
            # Select on the degraded graph; train and test on the original.
            data = comp.coreset_training_graph(g, result, args.depth, compressed=False)
            accs = train_eval_runs(g, data, args.arch, seeds, args.epochs,
                                   args.hidden, jobs=args.jobs)
            rows.append((int(count), h, float(np.mean(accs)),
                         float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0))
        header = ["added_edges", "homophily", "acc_mean", "acc_std"]
    else:
        raise BundleError(f"unknown sweep axis {args.axis!r}")
    out = args.out or f"sweep_{args.axis}.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


class _SweepArgs:
    """Per-value view of sweep args mapped onto the select-arg surface."""

    def __init__(self, args, value):
        self.seed = args.seed
        self.preset = args.preset
        self.depth = args.depth
        self.ratio = args.ratio
        self.size = None
        self.method = args.method
        self.kappa = args.kappa
        self.budget = args.budget
        self.ego_size = args.ego_size
        if value is not None:
            if args.axis == "ego_size":
                self.ego_size = int(value)
            elif args.axis == "budget":
                self.budget = int(value)
            elif args.axis == "kappa":
                self.kappa = float(value)
                # Endpoints collapse to the single-stage methods.
                if value == 0.0:
                    self.method, self.kappa = "craig_linear", 0.0
                elif value == 1.0:
                    self.method, self.kappa = "scgiga", 1.0


def cmd_report(args) -> int:
    if args.compressed:
        cc = comp.read_compressed(args.compressed)
        _print_storage(cc)
    if args.summary:
        payload = json.loads(Path(args.summary).read_text())
        print(f"test accuracy: {100 * payload['mean']:.1f} +/- "
              f"{100 * payload['std']:.1f} over {len(payload['runs'])} runs")
    if not args.compressed and not args.summary:
        raise BundleError("report needs --compressed and/or --summary")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphcoreset",
        description="ego-graph coreset selection and GCN verification pipeline")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--config", help="key=value file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download Planetoid raw files (opt-in)")
    p.add_argument("--dataset", choices=DATASETS, required=True)
    p.add_argument("--raw-dir", default="raw")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("ingest", help="convert raw data to a bundle directory")
    p.add_argument("--raw", required=True)
    p.add_argument("--format", choices=("planetoid", "bundle"), default="planetoid")
    p.add_argument("--name", default="cora")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("select", help="run a coreset selection method")
    p.add_argument("--bundle", required=True)
    p.add_argument("--method", default="sggc",
                   choices=("sggc", "scgiga", "craig_linear", "uniform",
                            "herding", "kcenter"))
    p.add_argument("--ratio", type=float, default=0.5, help="c / n_train")
    p.add_argument("--size", type=int, help="absolute coreset size (overrides ratio)")
    p.add_argument("--kappa", type=float)
    p.add_argument("--ego-size", type=int, dest="ego_size")
    p.add_argument("--budget", type=int)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--out")
    p.add_argument("--trace-csv", dest="trace_csv")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("compress", help="assemble and compress the coreset graph")
    p.add_argument("--bundle", required=True)
    p.add_argument("--coreset", required=True)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--out", default="coreset.gcc")
    p.add_argument("--report", action="store_true")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("train", help="train on a bundle or coreset, test on the bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--coreset")
    p.add_argument("--compressed", help="GCC1 file to train from")
    p.add_argument("--compress-features", action="store_true", dest="compress_features")
    p.add_argument("--centers-only", action="store_true", dest="centers_only")
    p.add_argument("--arch", choices=("gcn", "sgc"), default="gcn")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--seeds", default="0,1,2,3,4,5,6,7,8,9")
    p.add_argument("--epochs", type=int, default=600)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--out")
    p.add_argument("--history-csv", dest="history_csv")
    p.add_argument("--save-model", dest="save_model")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a split")
    p.add_argument("--bundle", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="one pipeline run per value; CSV out")
    p.add_argument("--bundle", required=True)
    p.add_argument("--axis", required=True,
                   choices=("ego_size", "kappa", "budget", "homophily", "rsd"))
    p.add_argument("--values", required=True, help="comma-separated")
    p.add_argument("--method", default="sggc")
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--kappa", type=float)
    p.add_argument("--ego-size", type=int, dest="ego_size")
    p.add_argument("--budget", type=int)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--arch", choices=("gcn", "sgc"), default="gcn")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--draws", type=int, default=5, help="model draws for rsd axis")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="print storage/result tables")
    p.add_argument("--compressed")
    p.add_argument("--summary")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        raw = _load_config(cfg_path)
        typed = {}
        for key, val in raw.items():
            if key in ("seed", "jobs", "size", "depth", "epochs", "hidden",
                       "budget", "ego_size", "draws"):
                typed[key] = int(val)
            elif key in ("ratio", "kappa"):
                typed[key] = float(val)
            else:
                typed[key] = val
        parser.set_defaults(**typed)
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (BundleError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

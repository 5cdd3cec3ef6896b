# Command-line orchestration: generate graphs and datasets, compute bound
# curves, train and run the inference methods, evaluate, and benchmark.
#
# Exit codes: 0 ok, 2 usage, 3 config error, 4 runtime failure. Every
# artifact embeds the config hash and seed; rerunning a subcommand with the
# same config and seed in single-threaded mode rewrites artifacts byte for
# byte (wall-clock measurements live in sidecar files and `bench` output,
# which are exempt).
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import read_scores, read_timing, row_from_scores, write_scores, write_timing
from .config import (
    SEED_DATASET,
    SEED_TRAIN,
    SCHEMA_VERSION,
    ConfigError,
    ExperimentConfig,
    config_hash,
)
from .datasets import FORMAT_VERSION, generate_dataset, read_dataset, write_dataset
from .dmp import dmp_infer
from .dynamics import mix64
from .gnn import CHECKPOINT_VERSION, forward, load_checkpoint, one_hot_states, save_checkpoint
from .limits import bound_curve
from .metrics import distance_centrality, evaluate, rumor_centrality
from .scores import SourceScores
from .training import TrainConfig, train, write_training_log


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "output_dir", None) is not None:
        overrides["output_dir"] = args.output_dir
    if overrides:
        cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _train_config(cfg: ExperimentConfig, args) -> TrainConfig:
    tc = cfg.train
    for name in ("epochs", "batch_size", "hidden", "layers", "dropout",
                 "initial_lr", "rule_kind", "patience"):
        value = getattr(args, name, None)
        if value is not None:
            tc = replace(tc, **{name: value})
    return tc


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_generate_graph(args) -> int:
    cfg = _load_config(args)
    g = cfg.graph.build(cfg.seed)
    g.meta["config_hash"] = config_hash(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    g.save(out)
    print(f"wrote {out} (n={g.n}, edges={g.n_edges})")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if args.preset:
        cfg = replace(cfg, epidemic=replace(cfg.epidemic, preset=args.preset))
        cfg.validate()
    g = cfg.graph.build(cfg.seed)
    params = cfg.epidemic.build(g)
    ds = generate_dataset(
        g, params, n_samples=cfg.dataset.n_samples, T=cfg.dataset.horizon,
        seed=mix64(cfg.seed, SEED_DATASET), threads=args.threads,
    )
    paths = write_dataset(ds, cfg.output_dir, config_hash=config_hash(cfg),
                          stem=cfg.dataset.stem)
    print(f"wrote {paths['manifest']} ({cfg.dataset.n_samples} snapshots, "
          f"model={params.model}, beta={params.beta:.4g})")
    return 0


def cmd_bounds(args) -> int:
    n = args.n
    p = 2.0 * np.log(n) / n if args.p == "auto" else float(args.p)
    r0_values = [float(tok) for tok in args.r0.split(",")]
    t_grid = np.linspace(0.0, args.t_max, args.points)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {"n": n, "p": p, "gamma": args.gamma, "r0": r0_values}
    with out.open("w", encoding="utf-8") as fh:
        fh.write(f"# config={json.dumps(meta, sort_keys=True)} seed=0\n")
        fh.write("r0,t,expected_gi,p_max\n")
        for r0 in r0_values:
            curve = bound_curve(n, p, args.gamma, r0, t_grid)
            for t, gi, pm in curve.rows():
                fh.write(f"{r0},{t},{gi},{pm}\n")
    print(f"wrote {out} ({len(r0_values)} curves x {args.points} points)")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    ds = read_dataset(args.manifest)
    tc = _train_config(cfg, args)
    seed = mix64(cfg.seed, SEED_TRAIN)
    model, logs = train(ds, tc, seed=seed)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / args.checkpoint_name
    save_checkpoint(model, ckpt)
    write_training_log(logs, out_dir / f"{ckpt.stem}.log.csv",
                       config_hash=config_hash(cfg), seed=seed)
    best = min(logs, key=lambda row: row.val_loss)
    print(f"wrote {ckpt} (best val_loss={best.val_loss:.4f} "
          f"val_top1={best.val_top1:.3f} at epoch {best.epoch})")
    return 0


def _split_samples(ds, split: str, limit: int | None):
    idxs = ds.splits[split]
    if limit is not None:
        idxs = idxs[:limit]
    return idxs


def cmd_infer_dmp(args) -> int:
    cfg = _load_config(args)
    ds = read_dataset(args.manifest)
    if ds.params.model != "sir":
        raise RuntimeError("message-passing inference expects an SIR dataset")
    idxs = _split_samples(ds, args.split, args.limit)

    def score_one(i: int):
        snap = ds.snapshots[i]
        g = ds.graph_for(snap)
        t_scan = range(1, ds.T + 1) if args.scan_t else None
        return row_from_scores(i, dmp_infer(g, ds.params, snap, t_scan=t_scan),
                               snap.source)

    t0 = time.perf_counter()
    if args.threads > 1:
        # snapshots are independent; results keep dataset order
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(score_one, idxs))
    else:
        rows = [score_one(i) for i in idxs]
    total = time.perf_counter() - t0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scores(rows, out, method="dmp", n_nodes=next(iter(ds.graphs.values())).n,
                 config_hash=config_hash(cfg), seed=cfg.seed,
                 split=args.split, limit=args.limit)
    write_timing(out.with_suffix(out.suffix + ".timings.json"), "dmp", total, len(rows))
    print(f"wrote {out} ({len(rows)} samples in {total:.2f}s)")
    return 0


def cmd_infer_gnn(args) -> int:
    cfg = _load_config(args)
    ds = read_dataset(args.manifest)
    model = load_checkpoint(args.checkpoint)
    idxs = _split_samples(ds, args.split, args.limit)
    rows = []
    t0 = time.perf_counter()
    by_graph: dict[str, list[int]] = {}
    for i in idxs:
        by_graph.setdefault(ds.snapshots[i].graph_id, []).append(i)
    for gid, members in by_graph.items():
        g = ds.graphs[gid]
        states = np.stack([ds.snapshots[i].states for i in members])
        x = one_hot_states(states, ds.params.model)
        logits = forward(model, g, x, mode="eval")
        for row_idx, i in enumerate(members):
            rows.append(row_from_scores(i, SourceScores(scores=logits[row_idx]),
                                        ds.snapshots[i].source))
    total = time.perf_counter() - t0
    rows.sort(key=lambda r: r.sample_id)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scores(rows, out, method="gnn", n_nodes=next(iter(ds.graphs.values())).n,
                 config_hash=config_hash(cfg), seed=cfg.seed,
                 split=args.split, limit=args.limit)
    write_timing(out.with_suffix(out.suffix + ".timings.json"), "gnn", total, len(rows))
    print(f"wrote {out} ({len(rows)} samples in {total:.2f}s)")
    return 0


def cmd_infer_baseline(args) -> int:
    cfg = _load_config(args)
    ds = read_dataset(args.manifest)
    idxs = _split_samples(ds, args.split, args.limit)
    fn = rumor_centrality if args.method == "rumor" else distance_centrality
    rows = []
    t0 = time.perf_counter()
    for i in idxs:
        snap = ds.snapshots[i]
        g = ds.graph_for(snap)
        infected = snap.ever_infected()
        try:
            scores = fn(g, infected)
        except ValueError:
            scores = distance_centrality(g, infected)
        rows.append(row_from_scores(i, scores, snap.source))
    total = time.perf_counter() - t0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scores(rows, out, method=args.method,
                 n_nodes=next(iter(ds.graphs.values())).n,
                 config_hash=config_hash(cfg), seed=cfg.seed,
                 split=args.split, limit=args.limit)
    write_timing(out.with_suffix(out.suffix + ".timings.json"), args.method,
                 total, len(rows))
    print(f"wrote {out} ({len(rows)} samples in {total:.2f}s)")
    return 0


class _RowScores:
    """Adapter: a stored ranking row acting as a score vector for metrics."""

    def __init__(self, row, n: int):
        self._row = row
        self.n = n

    def rank_of(self, node: int) -> int:
        return self._row.truth_rank  # stored for the truth only

    def topk(self, k: int):
        return self._row.top[:k]


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    ds = read_dataset(args.manifest)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary: dict = {"config_hash": config_hash(cfg), "seed": cfg.seed, "methods": {}}
    for scores_path in args.scores:
        header, rows = read_scores(scores_path)
        method = header["method"]
        n = header["n_nodes"]
        unknown = [r.sample_id for r in rows if r.sample_id >= len(ds.snapshots)]
        if unknown:
            raise RuntimeError(f"scores reference unknown sample ids {unknown[:5]}")
        declared = set(_split_samples(ds, header.get("split", "test"),
                                      header.get("limit")))
        missing = sorted(declared - {r.sample_id for r in rows})
        if missing:
            raise RuntimeError(
                f"{scores_path}: missing outputs for {len(missing)} "
                f"{header.get('split', 'test')} samples, e.g. {missing[:10]}"
            )
        times = [ds.snapshots[r.sample_id].t for r in rows]
        truths = [ds.snapshots[r.sample_id].source for r in rows]
        adapters = [_RowScores(r, n) for r in rows]
        report = evaluate(times, adapters, truths, bucket_width=args.bucket_width)
        csv_path = out_dir / f"metrics.{method}.csv"
        report.to_csv(csv_path, config_hash=config_hash(cfg), seed=cfg.seed)
        timing = read_timing(Path(scores_path).with_suffix(
            Path(scores_path).suffix + ".timings.json"))
        summary["methods"][method] = {
            "overall_topk": {str(k): v for k, v in report.overall_topk.items()},
            "overall_norm_rank": report.overall_norm_rank,
            "wall_clock_s": timing["total_s"] if timing else None,
            "csv": csv_path.name,
        }
        print(f"{method}: top1={report.overall_topk[1]:.3f} "
              f"norm_rank={report.overall_norm_rank:.3f} -> {csv_path}")
    (out_dir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    ds = read_dataset(args.manifest)
    model = load_checkpoint(args.checkpoint)
    idxs = _split_samples(ds, "test", args.samples)
    gid = ds.snapshots[idxs[0]].graph_id
    idxs = [i for i in idxs if ds.snapshots[i].graph_id == gid]
    g = ds.graphs[gid]

    states = np.stack([ds.snapshots[i].states for i in idxs])
    x = one_hot_states(states, ds.params.model)
    t0 = time.perf_counter()
    forward(model, g, x, mode="eval")
    gnn_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    for i in idxs:
        dmp_infer(g, ds.params, ds.snapshots[i])
    dmp_s = time.perf_counter() - t0

    payload = {
        "config_hash": config_hash(cfg), "seed": cfg.seed,
        "n_nodes": g.n, "n_edges": g.n_edges, "n_samples": len(idxs),
        "gnn_s": gnn_s, "dmp_s": dmp_s,
        "speedup": dmp_s / gnn_s if gnn_s > 0 else float("inf"),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"gnn={gnn_s:.2f}s dmp={dmp_s:.2f}s speedup={payload['speedup']:.1f}x -> {out}")
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON; flags override its values")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--threads", type=int, default=1,
                   help="worker-pool size where the stage supports it; "
                        "1 is the reproducibility mode")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="episource",
        description="Epidemic simulation and patient-zero inference toolkit",
    )
    parser.add_argument(
        "--version", action="version",
        version=(f"episource {__version__} (config schema {SCHEMA_VERSION}, "
                 f"dataset format {FORMAT_VERSION}, checkpoint {CHECKPOINT_VERSION})"),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-graph", help="build a graph and write its JSON")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate_graph)

    p = sub.add_parser("simulate", help="generate a snapshot dataset")
    _add_common(p)
    p.add_argument("--preset", choices=["covid"], default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("bounds", help="emit detectability bound curves as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", default="auto", help="edge probability or 'auto' = 2 ln(n)/n")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--r0", required=True, help="comma-separated list")
    p.add_argument("--t-max", type=float, default=30.0)
    p.add_argument("--points", type=int, default=61)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bounds)

    p = sub.add_parser("train", help="train the graph-convolution scorer")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint-name", default="model.ckpt")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--lr", dest="initial_lr", type=float, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--rule", dest="rule_kind",
                   choices=["symmetric", "random_walk", "mixture"], default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer-dmp", help="message-passing source inference")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--scan-t", action="store_true",
                   help="unknown observation time: take each candidate's best over 1..T")
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(fn=cmd_infer_dmp)

    p = sub.add_parser("infer-gnn", help="GCN source inference from a checkpoint")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(fn=cmd_infer_gnn)

    p = sub.add_parser("infer-baseline", help="centrality baseline inference")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=["rumor", "distance"], required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(fn=cmd_infer_baseline)

    p = sub.add_parser("evaluate", help="bucketed metrics from score files")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--scores", nargs="+", required=True)
    p.add_argument("--bucket-width", type=int, default=1)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("bench", help="inference speed comparison table")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

"""Command-line benchmark harness.

Subcommands cover the whole loop: synthesize a dataset (and a matched query
set), generate a runbook, replay it under a chosen regime, rebuild a static
baseline, and compare two traces with recall tolerances.  A JSON config
file can preload any flag of ``run``; explicit flags win.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .core import Dataset, Metric, generate_synthetic, load_vectors, save_vectors
from .graph import BuildParams
from .harness import Regime, RunConfig, compare, emit_trace, run
from .oracle import QuerySet
from .runbook import (gen_clustered, gen_expiration_time, gen_sliding_window,
                      parse_runbook, save_runbook, validate)
from .updates import DeleteParams

_METRICS = {"l2": Metric.SQUARED_EUCLIDEAN, "ip": Metric.NEGATIVE_INNER_PRODUCT}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    # required paths are validated post-parse so a --config file can supply them
    p.add_argument("--runbook", default=None, help="runbook text file")
    p.add_argument("--data", default=None, help="vector file with the dataset")
    p.add_argument("--queries", default=None, help="vector file with the query set")
    p.add_argument("--out", default=None, help="output CSV path (JSON lands beside it)")
    p.add_argument("--metric", choices=sorted(_METRICS), default="l2")
    p.add_argument("--regime", choices=[r.value for r in Regime], default="inplace")
    p.add_argument("--R", type=int, default=64, help="graph degree bound")
    p.add_argument("--l-build", type=int, default=128, help="build/search beam width")
    p.add_argument("--l-search", type=int, default=None,
                   help="query beam width (default: --l-build)")
    p.add_argument("--l-delete", type=int, default=128, help="repair-search beam width")
    p.add_argument("--alpha", type=float, default=1.2, help="prune slack factor")
    p.add_argument("--k-candidates", type=int, default=50,
                   help="replacement candidates per in-place delete")
    p.add_argument("--c", type=int, default=3, help="replacement edges per touched node")
    p.add_argument("--consolidation-threshold", type=float, default=0.2,
                   help="deletions/index-size fraction that triggers consolidation")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--recall-k", type=int, default=10)
    p.add_argument("--measure-every", type=int, default=1,
                   help="measure every Nth checkpoint")
    p.add_argument("--deterministic-timings", action="store_true",
                   help="record wall-clock columns as 0 for byte-stable traces")


def _build_config(args: argparse.Namespace, regime: str) -> RunConfig:
    return RunConfig(
        regime=Regime(regime),
        build=BuildParams(degree_bound=args.R, l_build=args.l_build, alpha=args.alpha),
        delete=DeleteParams(l_delete=args.l_delete, k_candidates=args.k_candidates,
                            c=args.c),
        threshold=args.consolidation_threshold,
        seed=args.seed,
        threads=args.threads,
        recall_k=args.recall_k,
        l_search=args.l_search,
        deterministic_timings=args.deterministic_timings,
    )


def _cmd_gen_data(args: argparse.Namespace) -> int:
    ds = generate_synthetic(args.count, args.dim, args.clusters, args.seed,
                            spread=args.spread, metric=_METRICS[args.metric])
    save_vectors(ds, args.out)
    print(f"wrote {args.count} x {args.dim} vectors to {args.out}")
    if args.queries_out:
        qs = generate_synthetic(args.query_count, args.dim, args.clusters,
                                args.query_seed, spread=args.spread,
                                metric=_METRICS[args.metric], center_seed=args.seed)
        save_vectors(qs, args.queries_out)
        print(f"wrote {args.query_count} matched queries to {args.queries_out}")
    return 0


def _cmd_gen_runbook(args: argparse.Namespace) -> int:
    if args.kind == "clustered":
        if not args.data:
            print("gen-runbook: --data is required for kind=clustered", file=sys.stderr)
            return 2
        ds = load_vectors(args.data)
        rb = gen_clustered(ds, args.n_clusters, args.rounds, args.seed, args.name)
    elif args.kind == "sliding-window":
        rb = gen_sliding_window(args.count, args.dim, args.t_max, args.seed, args.name)
    else:
        rb = gen_expiration_time(args.count, args.dim, args.t_max, args.seed, args.name)
    problems = validate(rb)
    if problems:
        for pr in problems:
            print(f"gen-runbook: {pr}", file=sys.stderr)
        return 1
    save_runbook(rb, args.out)
    print(f"wrote {len(rb.steps)}-step {rb.kind} runbook to {args.out}")
    return 0


def _measured_steps(rb, every: int) -> tuple[int, ...] | None:
    if every <= 1:
        return None
    checkpoints = [i for i, s in enumerate(rb.steps, 1) if s.checkpoint]
    return tuple(checkpoints[every - 1 :: every])


def _cmd_run(args: argparse.Namespace, regime: str | None = None) -> int:
    missing = [f for f in ("runbook", "data", "queries", "out")
               if getattr(args, f) is None]
    if missing:
        flags = ", ".join(f"--{m}" for m in missing)
        print(f"run: missing {flags} (flag or config file)", file=sys.stderr)
        return 2
    rb = parse_runbook(args.runbook)
    problems = validate(rb)
    if problems:
        for pr in problems:
            print(f"run: invalid runbook: {pr}", file=sys.stderr)
        return 1
    metric = _METRICS[args.metric]
    dataset = load_vectors(args.data, metric=metric)
    queries = QuerySet(load_vectors(args.queries, metric=metric).vectors)
    config = _build_config(args, regime or args.regime)
    steps = _measured_steps(rb, args.measure_every)
    if steps is not None:
        config = dataclasses.replace(config, measure_steps=steps)
    metrics, summary = run(rb, dataset, queries, config)
    emit_trace(metrics, summary, args.out)
    print(f"{config.regime.value}: {len(metrics)} checkpoints, "
          f"mean recall@{args.recall_k} {summary.mean_recall:.4f}, "
          f"insert {summary.total_insert_s:.2f}s, delete {summary.total_delete_s:.2f}s, "
          f"search {summary.total_search_s:.2f}s -> {args.out}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    try:
        report = compare(args.a, args.b,
                         max_mean_recall_drop=args.max_mean_recall_drop,
                         max_step_recall_drop=args.max_step_recall_drop)
    except ValueError as e:
        print(f"compare: {e}", file=sys.stderr)
        return 2
    print(f"rows compared: {report.rows}")
    print(f"mean recall: a={report.mean_recall_a:.4f} b={report.mean_recall_b:.4f} "
          f"delta={report.mean_recall_delta:+.4f}")
    print(f"worst step {report.worst_step}: delta {report.min_step_recall_delta:+.4f}")
    for f in report.failures:
        print(f"FAIL: {f}", file=sys.stderr)
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamann",
        description="streaming graph-index benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="synthesize a Gaussian-mixture dataset")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--clusters", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--spread", type=float, default=0.1)
    g.add_argument("--metric", choices=sorted(_METRICS), default="l2")
    g.add_argument("--out", required=True)
    g.add_argument("--queries-out", default=None,
                   help="also draw a query set from the same mixture")
    g.add_argument("--query-count", type=int, default=100)
    g.add_argument("--query-seed", type=int, default=1)
    g.set_defaults(fn=_cmd_gen_data)

    r = sub.add_parser("gen-runbook", help="generate a streaming workload")
    r.add_argument("--kind", choices=["sliding-window", "expiration-time", "clustered"],
                   required=True)
    r.add_argument("--count", type=int, default=0, help="dataset size (non-clustered kinds)")
    r.add_argument("--dim", type=int, default=0, help="recorded dataset dim")
    r.add_argument("--t-max", type=int, default=100)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--name", default="synthetic")
    r.add_argument("--data", default=None, help="vector file (clustered kind)")
    r.add_argument("--n-clusters", type=int, default=64)
    r.add_argument("--rounds", type=int, default=5)
    r.add_argument("--out", required=True)
    r.set_defaults(fn=_cmd_gen_runbook)

    x = sub.add_parser("run", help="replay a runbook and emit a trace")
    x.add_argument("--config", default=None,
                   help="JSON file preloading any long flag of this subcommand")
    _add_run_flags(x)
    x.set_defaults(fn=_cmd_run)

    b = sub.add_parser("rebuild-baseline",
                       help="replay with from-scratch rebuilds at measured checkpoints")
    b.add_argument("--config", default=None,
                   help="JSON file preloading any long flag of this subcommand")
    _add_run_flags(b)
    b.set_defaults(fn=lambda a: _cmd_run(a, regime="static-rebuild"))

    c = sub.add_parser("compare", help="diff two traces with recall tolerances")
    c.add_argument("--a", required=True, help="trace under test")
    c.add_argument("--b", required=True, help="reference trace")
    c.add_argument("--max-mean-recall-drop", type=float, default=None)
    c.add_argument("--max-step-recall-drop", type=float, default=None)
    c.set_defaults(fn=_cmd_compare)
    return parser


def _merge_config_argv(argv: list[str]) -> list[str]:
    """Expand a --config JSON file into trailing flags.

    Keys use flag spelling with dashes or underscores, e.g.
    ``{"l_build": 64, "regime": "baseline"}``.  A flag given explicitly on
    the command line wins over the config value; unknown keys surface as
    ordinary argparse errors.
    """
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise SystemExit("--config needs a file path")
    loaded = json.loads(Path(argv[at + 1]).read_text())
    if not isinstance(loaded, dict):
        raise SystemExit(f"config {argv[at + 1]} must hold a JSON object")
    extra: list[str] = []
    for key, value in loaded.items():
        flag = "--" + str(key).replace("_", "-")
        if flag in argv:
            continue
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        else:
            extra.extend((flag, str(value)))
    return argv + extra


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in ("run", "rebuild-baseline"):
        argv = _merge_config_argv(argv)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark harness: replay a runbook against an index and measure it.

A run replays steps in order (inserts before deletes within a step), lets
the consolidation policy fire after each step's updates, and at measured
checkpoints recomputes exact ground truth, runs the query set, and records
recall, distance-count, and timing metrics.  Ground-truth computation is
excluded from all timings and counters.

Every distance evaluation of a step lands in exactly one bucket (updates,
consolidation, or queries), so the per-step buckets always sum to the
counter's total movement.  With ``threads=1`` and fixed seeds a run is
fully deterministic; pair that with ``deterministic_timings`` (which pins
wall-clock columns to zero) to make emitted traces byte-identical across
runs.
"""

from __future__ import annotations

import concurrent.futures
import enum
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import BuildParams, Graph, rebuild_from_scratch
from .core import Dataset
from .oracle import QuerySet, brute_force_knn, recall_at_k
from .runbook import Runbook
from .updates import (ConsolidationMode, ConsolidationPolicy, DeleteParams,
                      consolidate_baseline, inplace_delete, lazy_delete,
                      maybe_consolidate)


class Regime(enum.Enum):
    INPLACE = "inplace"
    BASELINE = "baseline"
    STATIC_REBUILD = "static-rebuild"


@dataclass(frozen=True)
class RunConfig:
    regime: Regime = Regime.INPLACE
    build: BuildParams = field(default_factory=BuildParams)
    delete: DeleteParams = field(default_factory=DeleteParams)
    threshold: float = 0.2
    seed: int = 0
    threads: int = 1
    recall_k: int = 10
    l_search: int | None = None
    measure_steps: tuple[int, ...] | None = None
    deterministic_timings: bool = False

    def search_beam(self) -> int:
        l = self.build.l_build if self.l_search is None else self.l_search
        return max(l, self.recall_k)


@dataclass
class StepMetrics:
    """One measured checkpoint.

    Wall-clock fields accumulate everything since the previous measured
    checkpoint, so summing a column over all rows gives the run total.
    """

    step: int
    active: int
    recall: float
    dist_per_query: float
    qps: float
    insert_s: float
    delete_s: float
    consolidate_s: float
    cumulative_dist: int
    update_dist: int
    consolidate_dist: int
    query_dist: int


@dataclass
class RunSummary:
    total_insert_s: float
    total_delete_s: float
    total_search_s: float
    mean_recall: float
    insert_ops: int
    delete_ops: int


@dataclass
class StepInfo:
    """Facts about one replayed step, handed to the ``on_step`` callback."""

    step: int
    consolidated: bool
    consolidate_dist: int
    update_dist: int


def run(runbook: Runbook, dataset: Dataset, queries: QuerySet, config: RunConfig,
        on_step=None) -> tuple[list[StepMetrics], RunSummary]:
    """Replay ``runbook`` under ``config``; returns per-checkpoint metrics
    and the run summary.  ``on_step(graph, info)`` fires after every step."""
    if runbook.count > dataset.count:
        raise ValueError(
            f"runbook covers {runbook.count} ids, dataset has {dataset.count} rows")
    if queries.dim != dataset.dim:
        raise ValueError(f"query dim {queries.dim} != dataset dim {dataset.dim}")

    if config.measure_steps is not None:
        measured = set(config.measure_steps)
    else:
        measured = {i for i, s in enumerate(runbook.steps, 1) if s.checkpoint}

    streaming = config.regime in (Regime.INPLACE, Regime.BASELINE)
    graph = Graph(dataset, config.build, seed=config.seed) if streaming else None
    static_active: set[int] = set()
    policy = ConsolidationPolicy(
        config.threshold,
        ConsolidationMode.LIGHT if config.regime == Regime.INPLACE
        else ConsolidationMode.BASELINE)

    pool = None
    if config.threads > 1:
        pool = concurrent.futures.ThreadPoolExecutor(max_workers=config.threads)

    def apply(fn, ids):
        if pool is None:
            for i in ids:
                fn(i)
        else:
            list(pool.map(fn, ids))

    metrics: list[StepMetrics] = []
    recalls_all: list[float] = []
    cum_dist = 0
    acc_insert_s = acc_delete_s = acc_consolidate_s = 0.0
    total_insert_s = total_delete_s = total_search_s = 0.0
    insert_ops = delete_ops = 0
    last_total = 0  # graph counter snapshot (streaming regimes)

    def take_delta() -> int:
        nonlocal last_total
        now = graph.counter.total
        d = now - last_total
        last_total = now
        return d

    try:
        for idx, step in enumerate(runbook.steps, 1):
            update_dist = 0
            consolidate_dist = 0
            consolidated = False

            t0 = time.perf_counter()
            if streaming:
                apply(graph.insert, step.inserts)
            else:
                static_active.update(step.inserts)
            t1 = time.perf_counter()
            if config.regime == Regime.INPLACE:
                apply(lambda p: inplace_delete(graph, p, config.delete), step.deletes)
            elif config.regime == Regime.BASELINE:
                apply(lambda p: lazy_delete(graph, p), step.deletes)
            else:
                static_active.difference_update(step.deletes)
            t2 = time.perf_counter()
            if streaming:
                update_dist = take_delta()
                consolidated = maybe_consolidate(graph, policy, config.build)
                consolidate_dist = take_delta()
            t3 = time.perf_counter()

            insert_ops += len(step.inserts)
            delete_ops += len(step.deletes)
            acc_insert_s += t1 - t0
            acc_delete_s += t2 - t1
            acc_consolidate_s += t3 - t2
            total_insert_s += t1 - t0
            total_delete_s += (t2 - t1) + (t3 - t2)
            cum_dist += update_dist + consolidate_dist

            if idx in measured:
                if config.regime == Regime.STATIC_REBUILD:
                    t0 = time.perf_counter()
                    graph = rebuild_from_scratch(
                        dataset, np.asarray(sorted(static_active), np.int64),
                        config.build, seed=config.seed + idx)
                    rebuild_s = time.perf_counter() - t0
                    acc_insert_s += rebuild_s
                    total_insert_s += rebuild_s
                    last_total = 0
                    update_dist += take_delta()
                    cum_dist += update_dist

                active_ids = graph.active_ids()
                gt = brute_force_knn(dataset, active_ids, queries, config.recall_k)

                l_s = config.search_beam()
                step_recalls = np.empty(queries.count, np.float64)
                t0 = time.perf_counter()
                for qi in range(queries.count):
                    res = graph.greedy_search(queries.vectors[qi], config.recall_k, l_s)
                    step_recalls[qi] = recall_at_k(
                        res.answer_ids, res.answer_dists,
                        gt.ids[qi], gt.dists[qi], config.recall_k)
                search_s = time.perf_counter() - t0
                query_dist = take_delta()
                cum_dist += query_dist
                total_search_s += search_s

                recall = float(step_recalls.mean())
                recalls_all.append(recall)
                zero = config.deterministic_timings
                metrics.append(StepMetrics(
                    step=idx,
                    active=int(active_ids.size),
                    recall=recall,
                    dist_per_query=query_dist / queries.count,
                    qps=0.0 if zero else queries.count / max(search_s, 1e-12),
                    insert_s=0.0 if zero else acc_insert_s,
                    delete_s=0.0 if zero else acc_delete_s,
                    consolidate_s=0.0 if zero else acc_consolidate_s,
                    cumulative_dist=cum_dist,
                    update_dist=update_dist,
                    consolidate_dist=consolidate_dist,
                    query_dist=query_dist,
                ))
                acc_insert_s = acc_delete_s = acc_consolidate_s = 0.0

            if on_step is not None:
                on_step(graph, StepInfo(idx, consolidated, consolidate_dist, update_dist))
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    mean_recall = float(np.mean(recalls_all)) if recalls_all else 0.0
    if config.deterministic_timings:
        total_insert_s = total_delete_s = total_search_s = 0.0
    summary = RunSummary(total_insert_s, total_delete_s, total_search_s,
                         mean_recall, insert_ops, delete_ops)
    return metrics, summary


# -- trace emission -------------------------------------------------------------

CSV_COLUMNS = ("step", "active", "recall", "dist_per_query", "qps",
               "insert_s", "delete_s", "consolidate_s")


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def emit_trace(metrics: list[StepMetrics], summary: RunSummary,
               csv_path: str | Path, json_path: str | Path | None = None) -> None:
    """Write one CSV row per measured checkpoint plus a JSON summary.

    Floats carry 10 significant digits, so parsing the CSV back reproduces
    every value to well beyond 6 significant digits.
    """
    csv_path = Path(csv_path)
    lines = [",".join(CSV_COLUMNS)]
    for m in metrics:
        lines.append(",".join((
            str(m.step), str(m.active), _fmt(m.recall), _fmt(m.dist_per_query),
            _fmt(m.qps), _fmt(m.insert_s), _fmt(m.delete_s), _fmt(m.consolidate_s))))
    csv_path.write_text("\n".join(lines) + "\n", encoding="ascii")
    doc = {
        "total_insert_s": summary.total_insert_s,
        "total_delete_s": summary.total_delete_s,
        "total_search_s": summary.total_search_s,
        "mean_recall": summary.mean_recall,
        "insert_ops": summary.insert_ops,
        "delete_ops": summary.delete_ops,
    }
    jp = Path(json_path) if json_path is not None else csv_path.with_suffix(".json")
    jp.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="ascii")


def load_trace(csv_path: str | Path) -> list[dict]:
    """Parse a CSV trace back into one dict per row."""
    lines = Path(csv_path).read_text(encoding="ascii").splitlines()
    if not lines or tuple(lines[0].split(",")) != CSV_COLUMNS:
        raise ValueError(f"{csv_path}: not a trace file (bad header)")
    rows = []
    for ln, line in enumerate(lines[1:], 2):
        cells = line.split(",")
        if len(cells) != len(CSV_COLUMNS):
            raise ValueError(f"{csv_path}: line {ln} has {len(cells)} cells")
        row = {"step": int(cells[0]), "active": int(cells[1])}
        for name, cell in zip(CSV_COLUMNS[2:], cells[2:]):
            row[name] = float(cell)
        rows.append(row)
    return rows


@dataclass
class CompareReport:
    ok: bool
    rows: int
    mean_recall_a: float
    mean_recall_b: float
    mean_recall_delta: float
    min_step_recall_delta: float
    worst_step: int
    failures: list[str]


def compare(trace_a: str | Path, trace_b: str | Path,
            max_mean_recall_drop: float | None = None,
            max_step_recall_drop: float | None = None) -> CompareReport:
    """Align two traces by step and report how A's recall held up against B.

    Deltas are ``recall_a - recall_b``; a tolerance of X fails the report if
    A falls more than X below B (mean or any step).  Timing columns never
    affect the verdict.  Misaligned step columns raise ValueError.
    """
    rows_a = load_trace(trace_a)
    rows_b = load_trace(trace_b)
    steps_a = [r["step"] for r in rows_a]
    steps_b = [r["step"] for r in rows_b]
    if steps_a != steps_b:
        raise ValueError(
            f"traces are misaligned: steps {steps_a[:5]}... vs {steps_b[:5]}...")
    if not rows_a:
        raise ValueError("traces contain no rows")
    deltas = [a["recall"] - b["recall"] for a, b in zip(rows_a, rows_b)]
    mean_a = sum(r["recall"] for r in rows_a) / len(rows_a)
    mean_b = sum(r["recall"] for r in rows_b) / len(rows_b)
    worst_i = min(range(len(deltas)), key=lambda i: deltas[i])
    failures = []
    if max_mean_recall_drop is not None and mean_a - mean_b < -max_mean_recall_drop:
        failures.append(
            f"mean recall {mean_a:.4f} fell more than {max_mean_recall_drop} "
            f"below {mean_b:.4f}")
    if max_step_recall_drop is not None and deltas[worst_i] < -max_step_recall_drop:
        failures.append(
            f"step {steps_a[worst_i]} recall delta {deltas[worst_i]:.4f} "
            f"exceeds allowed drop {max_step_recall_drop}")
    return CompareReport(
        ok=not failures,
        rows=len(rows_a),
        mean_recall_a=mean_a,
        mean_recall_b=mean_b,
        mean_recall_delta=mean_a - mean_b,
        min_step_recall_delta=deltas[worst_i],
        worst_step=steps_a[worst_i],
        failures=failures,
    )

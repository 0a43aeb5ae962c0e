"""Streaming approximate nearest neighbor search on a proximity graph.

The index supports in-place insertion and two deletion disciplines: a
tombstone-and-consolidate baseline, and an in-place repair that patches
the neighborhood of a deleted node immediately so no tombstones linger.
A benchmark harness replays insert/delete workloads ("runbooks") and
reports recall against a brute-force oracle.
"""

from .core import (Dataset, DistanceCounter, FormatError, Metric, distance,
                   generate_synthetic, load_ids, load_vectors, save_ids,
                   save_vectors)
from .graph import (BuildParams, DuplicateIdError, Graph, NodeState, OpCounts,
                    SearchResult, UnknownIdError, rebuild_from_scratch)
from .harness import (CompareReport, Regime, RunConfig, RunSummary, StepMetrics,
                      compare, emit_trace, load_trace, run)
from .oracle import (GroundTruth, QuerySet, brute_force_knn, load_ground_truth,
                     recall_at_k, save_ground_truth)
from .runbook import (Runbook, Step, gen_clustered, gen_expiration_time,
                      gen_sliding_window, kmeans, parse_runbook, save_runbook,
                      validate)
from .updates import (ConsolidationMode, ConsolidationPolicy, DeleteParams,
                      DeleteStats, consolidate_baseline, consolidate_light,
                      inplace_delete, lazy_delete, maybe_consolidate)

__version__ = "0.1.0"

__all__ = [
    "BuildParams",
    "CompareReport",
    "ConsolidationMode",
    "ConsolidationPolicy",
    "Dataset",
    "DeleteParams",
    "DeleteStats",
    "DistanceCounter",
    "DuplicateIdError",
    "FormatError",
    "Graph",
    "GroundTruth",
    "Metric",
    "NodeState",
    "OpCounts",
    "QuerySet",
    "Regime",
    "RunConfig",
    "Runbook",
    "RunSummary",
    "SearchResult",
    "Step",
    "StepMetrics",
    "UnknownIdError",
    "brute_force_knn",
    "compare",
    "consolidate_baseline",
    "consolidate_light",
    "distance",
    "emit_trace",
    "gen_clustered",
    "gen_expiration_time",
    "gen_sliding_window",
    "generate_synthetic",
    "inplace_delete",
    "kmeans",
    "lazy_delete",
    "load_ground_truth",
    "load_ids",
    "load_trace",
    "load_vectors",
    "maybe_consolidate",
    "parse_runbook",
    "rebuild_from_scratch",
    "recall_at_k",
    "run",
    "save_ground_truth",
    "save_ids",
    "save_runbook",
    "save_vectors",
    "validate",
    "__version__",
]

"""Streaming workload generators and their text format.

A runbook is an ordered list of steps, each carrying an insert list, a
delete list, and a checkpoint flag.  Replaying a runbook against an index
reproduces a full insert/delete workload; checkpointed steps are where the
harness measures recall.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Dataset


@dataclass
class Step:
    inserts: list[int] = field(default_factory=list)
    deletes: list[int] = field(default_factory=list)
    checkpoint: bool = False


@dataclass
class Runbook:
    dataset_name: str
    count: int
    dim: int
    t_max: int
    seed: int
    kind: str
    steps: list[Step]


# -- k-means ------------------------------------------------------------------


@dataclass
class KMeansModel:
    k: int
    centroids: np.ndarray
    assignment: np.ndarray


def _pairwise_sq(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) squared euclidean distances in float64
    pn = (points * points).sum(axis=1)[:, None]
    cn = (centroids * centroids).sum(axis=1)[None, :]
    d = pn + cn - 2.0 * points @ centroids.T
    np.maximum(d, 0.0, out=d)
    return d


def kmeans(points: np.ndarray, k: int, seed: int, max_iters: int = 50) -> KMeansModel:
    """Lloyd's algorithm with distance-weighted seeding, deterministic in seed.

    Empty clusters are repaired by stealing the point farthest from its
    centroid out of the largest cluster.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k} n={n}")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, pts.shape[1]), np.float64)
    centroids[0] = pts[rng.integers(n)]
    d2 = ((pts - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centroids[j] = pts[idx]
        np.minimum(d2, ((pts - centroids[j]) ** 2).sum(axis=1), out=d2)

    assignment = np.full(n, -1, np.int64)
    for _ in range(max_iters):
        dists = _pairwise_sq(pts, centroids)
        new_assignment = dists.argmin(axis=1)
        counts = np.bincount(new_assignment, minlength=k)
        for j in np.flatnonzero(counts == 0):
            big = int(counts.argmax())
            members = np.flatnonzero(new_assignment == big)
            far = members[int(dists[members, big].argmax())]
            new_assignment[far] = j
            counts[big] -= 1
            counts[j] = 1
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for j in range(k):
            centroids[j] = pts[assignment == j].mean(axis=0)
    return KMeansModel(k, centroids, assignment)


# -- generators ---------------------------------------------------------------


def _split_parts(count: int, t_max: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(count)
    return np.array_split(perm, t_max)


def gen_sliding_window(count: int, dim: int, t_max: int, seed: int,
                       dataset_name: str = "synthetic") -> Runbook:
    """Insert the dataset in t_max batches; from the halfway point on, also
    delete the batch inserted t_max/2 steps earlier.  Steps past halfway are
    checkpoints; the live set hovers around count/2."""
    if t_max % 2 != 0 or t_max < 2:
        raise ValueError(f"t_max must be even and >= 2, got {t_max}")
    if count < t_max:
        raise ValueError(f"need count >= t_max, got count={count} t_max={t_max}")
    parts = _split_parts(count, t_max, seed)
    half = t_max // 2
    steps = []
    for t in range(1, t_max + 1):
        inserts = [int(i) for i in parts[t - 1]]
        deletes = [int(i) for i in parts[t - half - 1]] if t > half else []
        steps.append(Step(inserts, deletes, checkpoint=t > half))
    return Runbook(dataset_name, count, dim, t_max, seed, "sliding-window", steps)


LIFESPAN_WEIGHTS = (1.0 / 13.0, 2.0 / 13.0, 10.0 / 13.0)


def gen_expiration_time(count: int, dim: int, t_max: int, seed: int,
                        dataset_name: str = "synthetic") -> Runbook:
    """Insert in t_max batches; each point draws a lifespan of t_max,
    t_max/2, or t_max/10 steps with odds 1:2:10 and is deleted when it
    expires inside the horizon.  Every step is a checkpoint."""
    if t_max % 10 != 0 or t_max < 10:
        raise ValueError(f"t_max must be a positive multiple of 10, got {t_max}")
    if count < t_max:
        raise ValueError(f"need count >= t_max, got count={count} t_max={t_max}")
    parts = _split_parts(count, t_max, seed)
    rng = np.random.default_rng([seed, 1])
    spans = np.array([t_max, t_max // 2, t_max // 10], np.int64)
    steps = [Step(checkpoint=True) for _ in range(t_max)]
    for t in range(1, t_max + 1):
        batch = parts[t - 1]
        classes = rng.choice(3, size=batch.size, p=LIFESPAN_WEIGHTS)
        steps[t - 1].inserts = [int(i) for i in batch]
        for pid, cls in zip(batch, classes):
            expiry = t + int(spans[cls])
            if expiry <= t_max:
                steps[expiry - 1].deletes.append(int(pid))
    return Runbook(dataset_name, count, dim, t_max, seed, "expiration-time", steps)


def gen_clustered(dataset: Dataset, n_clusters: int, rounds: int, seed: int,
                  dataset_name: str = "synthetic") -> Runbook:
    """Cluster the dataset, then per round give every cluster an insert-step
    (a uniform random proportion of its not-yet-inserted points) followed by
    a delete-step per cluster (a uniform random proportion of its active
    points).  Total steps: rounds * n_clusters * 2, all checkpoints."""
    if rounds < 1 or n_clusters < 1:
        raise ValueError(f"need rounds >= 1 and n_clusters >= 1, got {rounds}, {n_clusters}")
    model = kmeans(dataset.vectors, n_clusters, seed)
    members = [np.flatnonzero(model.assignment == j) for j in range(n_clusters)]
    rng = np.random.default_rng([seed, 1])
    never_inserted = [set(int(i) for i in m) for m in members]
    active = [set() for _ in range(n_clusters)]
    steps: list[Step] = []
    for _ in range(rounds):
        for j in range(n_clusters):
            pool = sorted(never_inserted[j])
            cnt = int(rng.uniform() * len(pool) + 0.5)
            chosen = sorted(int(i) for i in rng.choice(pool, size=cnt, replace=False)) if cnt else []
            steps.append(Step(chosen, [], checkpoint=True))
            never_inserted[j].difference_update(chosen)
            active[j].update(chosen)
        for j in range(n_clusters):
            pool = sorted(active[j])
            cnt = int(rng.uniform() * len(pool) + 0.5)
            chosen = sorted(int(i) for i in rng.choice(pool, size=cnt, replace=False)) if cnt else []
            steps.append(Step([], chosen, checkpoint=True))
            active[j].difference_update(chosen)
    return Runbook(dataset_name, dataset.count, dataset.dim,
                   len(steps), seed, "clustered", steps)


# -- validation ----------------------------------------------------------------


def validate(runbook: Runbook) -> list[str]:
    """Replay the runbook; return a description of every violation found."""
    problems: list[str] = []
    active: set[int] = set()
    if len(runbook.steps) != runbook.t_max:
        problems.append(f"header t_max {runbook.t_max} != {len(runbook.steps)} steps")
    for idx, step in enumerate(runbook.steps, 1):
        if len(set(step.inserts)) != len(step.inserts):
            problems.append(f"step {idx}: duplicate ids in insert list")
        if len(set(step.deletes)) != len(step.deletes):
            problems.append(f"step {idx}: duplicate ids in delete list")
        overlap = set(step.inserts) & set(step.deletes)
        if overlap:
            problems.append(f"step {idx}: ids {sorted(overlap)} both inserted and deleted")
        for i in step.inserts:
            if not 0 <= i < runbook.count:
                problems.append(f"step {idx}: insert id {i} outside [0, {runbook.count})")
            elif i in active:
                problems.append(f"step {idx}: insert of already-active id {i}")
            else:
                active.add(i)
        for d in step.deletes:
            if not 0 <= d < runbook.count:
                problems.append(f"step {idx}: delete id {d} outside [0, {runbook.count})")
            elif d not in active:
                problems.append(f"step {idx}: delete of inactive id {d}")
            else:
                active.discard(d)
    return problems


# -- text serialization ---------------------------------------------------------


def serialize_runbook(runbook: Runbook) -> str:
    """Canonical line-per-step text form; parse(serialize(x)) is identity."""
    name = runbook.dataset_name
    if not name or any(ch.isspace() for ch in name):
        raise ValueError(f"dataset name must be non-empty without whitespace, got {name!r}")
    if not runbook.kind or any(ch.isspace() for ch in runbook.kind):
        raise ValueError(f"kind must be non-empty without whitespace, got {runbook.kind!r}")
    lines = [f"{name} {runbook.count} {runbook.dim} {runbook.t_max} {runbook.seed} {runbook.kind}"]
    for idx, step in enumerate(runbook.steps, 1):
        tokens = [str(idx), "I"]
        tokens += [str(i) for i in step.inserts]
        tokens.append("D")
        tokens += [str(d) for d in step.deletes]
        tokens.append("1" if step.checkpoint else "0")
        lines.append(" ".join(tokens))
    return "\n".join(lines) + "\n"


def save_runbook(runbook: Runbook, path: str | Path) -> None:
    Path(path).write_text(serialize_runbook(runbook), encoding="ascii")


def parse_runbook_text(text: str) -> Runbook:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty runbook text")
    head = lines[0].split(" ")
    if len(head) != 6:
        raise ValueError(f"line 1: header needs 6 fields, got {len(head)}")
    name, kind = head[0], head[5]
    try:
        count, dim, t_max, seed = (int(x) for x in head[1:5])
    except ValueError:
        raise ValueError(f"line 1: non-integer header field in {head[1:5]}") from None
    steps: list[Step] = []
    for ln, line in enumerate(lines[1:], 2):
        tokens = line.split(" ")
        if len(tokens) < 4 or tokens[1] != "I":
            raise ValueError(f"line {ln}: expected '<idx> I ... D ... <flag>'")
        if tokens[0] != str(len(steps) + 1):
            raise ValueError(f"line {ln}: expected step index {len(steps) + 1}, got {tokens[0]!r}")
        try:
            d_pos = tokens.index("D", 2)
        except ValueError:
            raise ValueError(f"line {ln}: missing 'D' marker") from None
        flag = tokens[-1]
        if flag not in ("0", "1"):
            raise ValueError(f"line {ln}: checkpoint flag must be 0 or 1, got {flag!r}")
        try:
            inserts = [int(x) for x in tokens[2:d_pos]]
            deletes = [int(x) for x in tokens[d_pos + 1 : -1]]
        except ValueError:
            raise ValueError(f"line {ln}: non-integer id") from None
        steps.append(Step(inserts, deletes, flag == "1"))
    if len(steps) != t_max:
        raise ValueError(f"header t_max {t_max} != {len(steps)} step lines")
    return Runbook(name, count, dim, t_max, seed, kind, steps)


def parse_runbook(path: str | Path) -> Runbook:
    return parse_runbook_text(Path(path).read_text(encoding="ascii"))

# Evaluation metrics and classical source-inference baselines.
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .graphs import Graph
from .scores import SourceScores

__all__ = [
    "topk_accuracy",
    "normalized_rank",
    "rumor_centrality",
    "distance_centrality",
    "BucketRow",
    "MetricsReport",
    "evaluate",
]

TOPK_LEVELS = (1, 5, 10, 20)


def topk_accuracy(scores: Sequence[SourceScores], truths: Sequence[int], k: int) -> float:
    """Fraction of samples whose truth is among the k best-scored nodes."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(scores) != len(truths):
        raise ValueError("scores and truths differ in length")
    hits = sum(1 for s, truth in zip(scores, truths) if s.rank_of(truth) < k)
    return hits / len(scores)


def normalized_rank(scores: Sequence[SourceScores], truths: Sequence[int]) -> float:
    """1 - mean(rank of truth) / N over samples; 1.0 means always ranked first.

    The rank is the 0-based position in the descending score list, so a
    perfect scorer attains exactly 1 and the worst possible value is 1/N.
    All samples must share one graph size N.
    """
    if len(scores) != len(truths):
        raise ValueError("scores and truths differ in length")
    sizes = {s.n for s in scores}
    if len(sizes) != 1:
        raise ValueError(f"normalized rank needs a single graph size, got {sorted(sizes)}")
    n = sizes.pop()
    total = sum(s.rank_of(truth) for s, truth in zip(scores, truths))
    return 1.0 - total / (len(scores) * n)


# --------------------------------------------------------------------------
# Baselines
# --------------------------------------------------------------------------


def _induced_adjacency(g: Graph, nodes: np.ndarray) -> list[list[int]]:
    local = {int(u): i for i, u in enumerate(nodes)}
    adj: list[list[int]] = [[] for _ in nodes]
    for i, u in enumerate(nodes):
        for v in g.neighbors(int(u)):
            j = local.get(int(v))
            if j is not None:
                adj[i].append(j)
    return adj


def rumor_centrality(g: Graph, infected: Sequence[int]) -> SourceScores:
    """Tree estimator: log R(u) = log(N!) - sum_v log|subtree_v(u)|.

    Scores every infected candidate root of the infected-induced subgraph
    in O(N) total using subtree-size rerooting; non-infected nodes score
    -inf. The estimator is only defined when the infected subgraph is a
    connected tree; anything else raises, and callers should fall back to
    a general-graph baseline such as :func:`distance_centrality`.
    """
    nodes = np.asarray(sorted(infected), dtype=np.int64)
    if nodes.size == 0:
        raise ValueError("rumor centrality needs at least one infected node")
    adj = _induced_adjacency(g, nodes)
    n_i = nodes.size
    n_edges = sum(len(a) for a in adj) // 2
    if n_edges != n_i - 1:
        raise ValueError(
            f"infected subgraph has {n_edges} edges over {n_i} nodes; rumor "
            "centrality needs a tree (use a general-graph baseline instead)"
        )

    # iterative rooted pass for subtree sizes and connectivity
    parent = np.full(n_i, -1, dtype=np.int64)
    order: list[int] = []
    seen = np.zeros(n_i, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        order.append(u)
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                stack.append(v)
    if not seen.all():
        raise ValueError(
            "infected subgraph is disconnected; rumor centrality needs a "
            "connected tree (use a general-graph baseline instead)"
        )
    size = np.ones(n_i, dtype=np.int64)
    for u in reversed(order):
        if parent[u] >= 0:
            size[parent[u]] += size[u]

    log_scores = np.empty(n_i)
    log_scores[0] = math.lgamma(n_i + 1) - sum(math.log(s) for s in size)
    # reroot: moving the root across edge (u -> child v) rescales exactly
    # two subtree sizes: |T_v| becomes N and |T_u| becomes N - |T_v|.
    queue = deque([0])
    visited = np.zeros(n_i, dtype=bool)
    visited[0] = True
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not visited[v]:
                visited[v] = True
                log_scores[v] = log_scores[u] + math.log(size[v]) - math.log(n_i - size[v])
                queue.append(v)

    out = np.full(g.n, -np.inf)
    out[nodes] = log_scores
    return SourceScores(scores=out)


def distance_centrality(g: Graph, infected: Sequence[int]) -> SourceScores:
    """score(u) = -sum of hop distances from u to every infected node.

    Distances run inside the infected-induced subgraph. If that subgraph
    is disconnected (which single-source dynamics never produce), each
    candidate is scored within its own component and components are ranked
    by size first: every missing (cross-component) pair costs more than
    any achievable within-component distance sum.
    """
    nodes = np.asarray(sorted(infected), dtype=np.int64)
    if nodes.size == 0:
        raise ValueError("distance centrality needs at least one infected node")
    adj = _induced_adjacency(g, nodes)
    n_i = nodes.size
    cross_penalty = float(n_i) * n_i + 1.0

    out = np.full(g.n, -np.inf)
    for i, u in enumerate(nodes):
        dist = np.full(n_i, -1, dtype=np.int64)
        dist[i] = 0
        queue = deque([i])
        while queue:
            a = queue.popleft()
            for b in adj[a]:
                if dist[b] < 0:
                    dist[b] = dist[a] + 1
                    queue.append(b)
        missing = int((dist < 0).sum())
        out[u] = -float(dist[dist >= 0].sum()) - cross_penalty * missing
    return SourceScores(scores=out)


# --------------------------------------------------------------------------
# Bucketed evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BucketRow:
    bucket: int
    count: int
    top1: float
    top5: float
    top10: float
    top20: float
    norm_rank: float


@dataclass(frozen=True)
class MetricsReport:
    rows: list[BucketRow]
    overall_topk: dict[int, float]
    overall_norm_rank: float
    runtime_s: dict[str, float]

    def to_csv(self, path: str | Path, config_hash: str = "", seed: int = 0) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            fh.write(f"# config={config_hash} seed={seed}\n")
            writer = csv.writer(fh)
            writer.writerow(["bucket", "n", "top1", "top5", "top10", "top20", "norm_rank"])
            for r in self.rows:
                writer.writerow([r.bucket, r.count, r.top1, r.top5, r.top10,
                                 r.top20, r.norm_rank])


def evaluate(
    times: Sequence[int],
    scores: Sequence[SourceScores],
    truths: Sequence[int],
    bucket_width: int = 1,
    runtime_s: dict[str, float] | None = None,
) -> MetricsReport:
    """Bucket samples by snapshot time and compute all metrics per bucket.

    ``bucket_width`` groups times into [w*b, w*(b+1)) bins; 1 buckets by
    exact step, wider values trade resolution for per-bucket sample count.
    """
    if not (len(times) == len(scores) == len(truths)):
        raise ValueError("times, scores and truths must have equal lengths")
    if len(scores) == 0:
        raise ValueError("nothing to evaluate")
    buckets: dict[int, list[int]] = {}
    for idx, t in enumerate(times):
        buckets.setdefault(int(t) // bucket_width, []).append(idx)
    rows = []
    for b in sorted(buckets):
        idxs = buckets[b]
        ss = [scores[i] for i in idxs]
        tt = [truths[i] for i in idxs]
        rows.append(BucketRow(
            bucket=b, count=len(idxs),
            top1=topk_accuracy(ss, tt, 1), top5=topk_accuracy(ss, tt, 5),
            top10=topk_accuracy(ss, tt, 10), top20=topk_accuracy(ss, tt, 20),
            norm_rank=normalized_rank(ss, tt),
        ))
    overall = {k: topk_accuracy(scores, truths, k) for k in TOPK_LEVELS}
    return MetricsReport(
        rows=rows, overall_topk=overall,
        overall_norm_rank=normalized_rank(scores, truths),
        runtime_s=dict(runtime_s or {}),
    )

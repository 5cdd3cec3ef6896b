# Graph container, synthetic generators, spectral/metric utilities and
# node-equivalence hashing. Everything downstream (simulators, DMP, GCN)
# iterates edges through the CSR arrays defined here.
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path
from scipy.spatial import cKDTree

__all__ = [
    "Graph",
    "GraphError",
    "ConnectivityError",
    "PropagationRule",
    "generate_er",
    "generate_ba",
    "generate_rgg",
    "load_edge_list",
    "leading_eigenvalue",
    "diameter",
    "bfs_distances",
    "equivalence_classes",
]

_CONNECT_ATTEMPTS = 1000


class GraphError(ValueError):
    """Malformed graph input (parse errors, bad arguments)."""


class ConnectivityError(RuntimeError):
    """A connected instance could not be produced within the retry budget."""


# --------------------------------------------------------------------------
# Container
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Graph:
    """Immutable undirected simple graph in compressed row form.

    Both directions of every edge are materialized so per-edge message
    iteration (DMP, GCN propagation) never needs a transpose. The arc list
    is sorted by (src, dst), which makes construction deterministic: equal
    edge sets produce byte-identical arrays.

    Attributes
    ----------
    n : int
        Node count; nodes are 0..n-1.
    row_offsets : (n+1,) int64
        CSR pointers; arcs of node u live at [row_offsets[u], row_offsets[u+1]).
    col_indices : (2|E|,) int64
        Arc destinations, sorted within each row.
    degrees : (n,) int64
        Undirected degree per node.
    meta : dict
        Provenance (generator name, params, seed) carried into artifacts.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    degrees: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    @staticmethod
    def from_edges(n: int, edges: Iterable[tuple[int, int]], meta: dict | None = None) -> Graph:
        """Build from undirected edges; drops self-loops and duplicates."""
        if n < 1:
            raise GraphError(f"node count must be >= 1, got {n}")
        canon = set()
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u},{v}) out of bounds for n={n}")
            if u == v:
                continue
            canon.add((u, v) if u < v else (v, u))
        src = np.empty(2 * len(canon), dtype=np.int64)
        dst = np.empty(2 * len(canon), dtype=np.int64)
        for k, (u, v) in enumerate(sorted(canon)):
            src[2 * k], dst[2 * k] = u, v
            src[2 * k + 1], dst[2 * k + 1] = v, u
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        degrees = np.bincount(src, minlength=n).astype(np.int64)
        row_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(degrees, out=row_offsets[1:])
        return Graph(n=n, row_offsets=row_offsets, col_indices=dst,
                     degrees=degrees, meta=dict(meta or {}))

    @property
    def n_edges(self) -> int:
        return self.col_indices.size // 2

    def neighbors(self, u: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[u]:self.row_offsets[u + 1]]

    def edge_list(self) -> list[tuple[int, int]]:
        """Unique undirected edges as sorted (u, v) pairs with u < v."""
        src = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        keep = src < self.col_indices
        return list(zip(src[keep].tolist(), self.col_indices[keep].tolist()))

    def adjacency(self) -> sp.csr_matrix:
        """Unweighted adjacency as a scipy CSR matrix (cached)."""
        cached = self.meta.get("_adj_cache")
        if cached is None:
            data = np.ones(self.col_indices.size, dtype=np.float64)
            cached = sp.csr_matrix(
                (data, self.col_indices, self.row_offsets), shape=(self.n, self.n)
            )
            self.meta["_adj_cache"] = cached
        return cached

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        return int((bfs_distances(self, 0) >= 0).sum()) == self.n

    # ---- serialization ----

    def to_json(self) -> str:
        meta = {k: v for k, v in self.meta.items() if not k.startswith("_")}
        payload = {"n": self.n, "edges": self.edge_list(), "meta": meta}
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> Graph:
        payload = json.loads(text)
        return Graph.from_edges(payload["n"], [tuple(e) for e in payload["edges"]],
                                meta=payload.get("meta"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> Graph:
        return Graph.from_json(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# Propagation rules for graph convolutions
# --------------------------------------------------------------------------


class PropagationRule:
    """Normalized adjacency operator used by a graph-convolution layer.

    Kinds: ``symmetric`` is D^{-1/2} A D^{-1/2}, ``random_walk`` is D^{-1} A,
    and ``mixture`` concatenates the raw-adjacency and symmetric channels,
    doubling the feature width. Degree-0 nodes get all-zero rows.
    """

    KINDS = ("symmetric", "random_walk", "mixture")

    def __init__(self, graph: Graph, kind: str = "symmetric"):
        if kind not in self.KINDS:
            raise ValueError(f"unknown propagation rule {kind!r}; expected one of {self.KINDS}")
        self.kind = kind
        self.graph = graph
        adj = graph.adjacency()
        deg = graph.degrees.astype(np.float64)
        with np.errstate(divide="ignore"):
            inv = np.where(deg > 0, 1.0 / deg, 0.0)
            inv_sqrt = np.sqrt(inv)
        self.adj_mat = adj
        self.sym_mat = sp.diags(inv_sqrt) @ adj @ sp.diags(inv_sqrt)
        self.rw_mat = sp.diags(inv) @ adj
        self._by_dtype: dict = {np.dtype(np.float64): (self.adj_mat, self.sym_mat, self.rw_mat)}

    def mats(self, dtype) -> tuple:
        """(adjacency, symmetric, random-walk) matrices in the given dtype."""
        key = np.dtype(dtype)
        cached = self._by_dtype.get(key)
        if cached is None:
            cached = tuple(m.astype(key) for m in self._by_dtype[np.dtype(np.float64)])
            self._by_dtype[key] = cached
        return cached

    @property
    def width_factor(self) -> int:
        """Output width multiplier: 2 for the mixture rule, else 1."""
        return 2 if self.kind == "mixture" else 1

    def apply(self, h: np.ndarray) -> np.ndarray:
        if self.kind == "symmetric":
            return self.sym_mat @ h
        if self.kind == "random_walk":
            return self.rw_mat @ h
        return np.concatenate([self.adj_mat @ h, self.sym_mat @ h], axis=-1)

    def apply_transpose(self, g: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`apply`, needed by reverse-mode gradients."""
        if self.kind == "symmetric":
            return self.sym_mat @ g  # symmetric operator
        if self.kind == "random_walk":
            return self.rw_mat.T @ g
        c = g.shape[-1] // 2
        return self.adj_mat @ g[..., :c] + self.sym_mat @ g[..., c:]

    def matrix(self) -> sp.csr_matrix:
        if self.kind == "mixture":
            raise ValueError("mixture rule has no single-matrix form")
        return self.sym_mat if self.kind == "symmetric" else self.rw_mat


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------


def _retry_connected(build, seed: int, require_connected: bool, what: str) -> Graph:
    if not require_connected:
        return build(seed)
    for attempt in range(_CONNECT_ATTEMPTS):
        g = build(seed + attempt)
        if g.is_connected():
            g.meta["connect_attempts"] = attempt + 1
            return g
    raise ConnectivityError(
        f"no connected {what} instance within {_CONNECT_ATTEMPTS} attempts "
        f"(seeds {seed}..{seed + _CONNECT_ATTEMPTS - 1})"
    )


def generate_er(n: int, p: float, seed: int, require_connected: bool = False) -> Graph:
    """Erdős–Rényi G(n, p): each unordered pair is an edge with probability p.

    With ``require_connected`` the draw is retried with seeds
    seed, seed+1, ... until connected (bounded). p >= 2 ln(n)/n is the usual
    regime where connectivity is likely; a warning meta flag is recorded
    below that threshold.
    """
    if n < 2:
        raise GraphError(f"ER generator needs n >= 2, got {n}")
    if not (0.0 < p <= 1.0):
        raise GraphError(f"edge probability must be in (0, 1], got {p}")

    iu, ju = np.triu_indices(n, k=1)

    def build(s: int) -> Graph:
        rng = np.random.default_rng(s)
        mask = rng.random(iu.size) < p
        g = Graph.from_edges(n, zip(iu[mask].tolist(), ju[mask].tolist()))
        g.meta.update({"generator": "er", "params": {"n": n, "p": p}, "seed": s})
        return g

    g = _retry_connected(build, seed, require_connected, "ER")
    if require_connected and p < 2.0 * math.log(n) / n:
        g.meta["below_connectivity_threshold"] = True
    return g


def generate_ba(n: int, m: int, seed: int) -> Graph:
    """Barabási–Albert preferential attachment; m=1 yields a tree.

    Each new node attaches to m distinct existing nodes sampled with
    probability proportional to degree (the classic repeated-endpoint urn),
    giving exactly m*(n-m) edges.
    """
    if not (1 <= m < n):
        raise GraphError(f"BA generator needs 1 <= m < n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    edges: list[tuple[int, int]] = []
    repeated: list[int] = []
    targets = list(range(m))
    for source in range(m, n):
        for t in targets:
            edges.append((source, t))
        repeated.extend(targets)
        repeated.extend([source] * m)
        picked: set[int] = set()
        while len(picked) < m:
            picked.add(repeated[rng.integers(0, len(repeated))])
        targets = sorted(picked)
    g = Graph.from_edges(n, edges)
    g.meta.update({"generator": "ba", "params": {"n": n, "m": m}, "seed": seed})
    return g


def generate_rgg(
    n: int,
    radius: float | None = None,
    seed: int = 0,
    require_connected: bool = False,
    target_edges: int | None = None,
) -> Graph:
    """Random geometric graph on the unit square.

    Nodes are uniform points in [0,1]^2; an edge joins pairs at Euclidean
    distance <= radius. Give either ``radius`` or ``target_edges``; in the
    latter case the radius is bisected on the sampled point set until the
    edge count brackets the target.
    """
    if n < 2:
        raise GraphError(f"RGG generator needs n >= 2, got {n}")
    if (radius is None) == (target_edges is None):
        raise GraphError("give exactly one of radius or target_edges")
    if radius is not None and not (0.0 < radius < 1.0):
        raise GraphError(f"radius must be in (0, 1), got {radius}")

    def build(s: int) -> Graph:
        rng = np.random.default_rng(s)
        points = rng.random((n, 2))
        r = radius if radius is not None else _bisect_rgg_radius(points, target_edges)
        pairs = sorted(cKDTree(points).query_pairs(r))
        g = Graph.from_edges(n, pairs)
        g.meta.update({
            "generator": "rgg",
            "params": {"n": n, "radius": r, "target_edges": target_edges},
            "seed": s,
        })
        return g

    return _retry_connected(build, seed, require_connected, "RGG")


def _bisect_rgg_radius(points: np.ndarray, target_edges: int, iters: int = 60) -> float:
    tree = cKDTree(points)
    lo, hi = 0.0, math.sqrt(2.0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        count = len(tree.query_pairs(mid))
        if count < target_edges:
            lo = mid
        elif count > target_edges:
            hi = mid
        else:
            return mid
    return 0.5 * (lo + hi)


def load_edge_list(path: str | Path) -> Graph:
    """Read whitespace-separated integer pairs, one edge per line.

    Lines starting with ``#`` are comments. Node ids are compacted to
    0..n-1 in first-appearance order; dropped duplicates and self-loops are
    counted in ``meta["load_stats"]``.
    """
    ids: dict[int, int] = {}
    edges: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    duplicates = 0
    self_loops = 0
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 2:
            raise GraphError(f"{path}:{lineno}: expected two tokens, got {len(tokens)}")
        try:
            raw_u, raw_v = int(tokens[0]), int(tokens[1])
        except ValueError as exc:
            raise GraphError(f"{path}:{lineno}: non-integer token in {stripped!r}") from exc
        u = ids.setdefault(raw_u, len(ids))
        v = ids.setdefault(raw_v, len(ids))
        if u == v:
            self_loops += 1
            continue
        key = (u, v) if u < v else (v, u)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        edges.append(key)
    if not ids:
        raise GraphError(f"{path}: empty edge list")
    g = Graph.from_edges(len(ids), edges)
    g.meta.update({
        "generator": "edge_list",
        "params": {"path": str(path)},
        "load_stats": {"duplicates": duplicates, "self_loops": self_loops},
    })
    return g


# --------------------------------------------------------------------------
# Spectral and metric utilities
# --------------------------------------------------------------------------


def leading_eigenvalue(g: Graph, tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """Largest adjacency eigenvalue via shifted power iteration.

    Iterates A + I (the shift breaks the +/- lambda_1 tie on bipartite
    graphs) from the all-ones vector, so the result is deterministic.
    Converged when the residual ||Av - lambda v|| <= tol * lambda, which for
    symmetric A bounds the eigenvalue error by the same amount.
    """
    if g.n_edges == 0:
        return 0.0
    adj = g.adjacency()
    v = np.ones(g.n) / math.sqrt(g.n)
    lam = 0.0
    for _ in range(max_iter):
        w = adj @ v + v
        nrm = np.linalg.norm(w)
        v = w / nrm
        av = adj @ v
        lam = float(v @ av)
        residual = float(np.linalg.norm(av - lam * v))
        if residual <= tol * max(lam, 1e-300):
            return lam
    raise RuntimeError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(last residual {residual:.3e}, tol {tol:.3e})"
    )


def bfs_distances(g: Graph, source: int) -> np.ndarray:
    """Hop distances from ``source``; unreachable nodes get -1."""
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    offsets, cols = g.row_offsets, g.col_indices
    while queue:
        u = queue.popleft()
        du = dist[u]
        for v in cols[offsets[u]:offsets[u + 1]]:
            if dist[v] < 0:
                dist[v] = du + 1
                queue.append(v)
    return dist


def all_pairs_distances(g: Graph) -> np.ndarray:
    """All-pairs hop distances (BFS per source, C-level); inf if unreachable."""
    return shortest_path(g.adjacency(), method="D", unweighted=True, directed=False)


def diameter(g: Graph) -> int:
    """Exact diameter: maximum BFS eccentricity. Errors on disconnected input."""
    dist = all_pairs_distances(g)
    if np.isinf(dist).any():
        raise GraphError("diameter is undefined on a disconnected graph")
    return int(dist.max())


def equivalence_classes(
    g: Graph, restrict_to: Sequence[int] | None = None, l_max: int = 3
) -> np.ndarray:
    """Group nodes by their reachable-count signature (n^(1), ..., n^(l_max)).

    n^(l) counts nodes at hop distance in [1, l], computed by BFS frontier
    counting on the (optionally induced) subgraph. Two nodes share a class
    id iff their signatures are identical; automorphic nodes always land in
    the same class. Class ids are assigned in order of first appearance.

    With ``restrict_to`` the result has one entry per node of the induced
    subgraph, in the order given.
    """
    if l_max < 1:
        raise ValueError(f"l_max must be >= 1, got {l_max}")
    if restrict_to is not None:
        sub_nodes = list(restrict_to)
        if not sub_nodes:
            return np.empty(0, dtype=np.int64)
        remap = {u: i for i, u in enumerate(sub_nodes)}
        keep = set(sub_nodes)
        edges = [(remap[u], remap[v]) for u, v in g.edge_list() if u in keep and v in keep]
        g = Graph.from_edges(len(sub_nodes), edges)
    signatures = []
    for u in range(g.n):
        dist = bfs_distances(g, u)
        reachable = dist[(dist > 0)]
        counts = np.bincount(np.minimum(reachable, l_max + 1), minlength=l_max + 2)
        signatures.append(tuple(np.cumsum(counts[1:l_max + 1]).tolist()))
    class_of: dict[tuple, int] = {}
    out = np.empty(g.n, dtype=np.int64)
    for u, sig in enumerate(signatures):
        out[u] = class_of.setdefault(sig, len(class_of))
    return out

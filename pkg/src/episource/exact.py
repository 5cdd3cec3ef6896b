# Brute-force source inference by dynamic programming over the full joint
# state space. Intractable beyond toy sizes by design; it exists as the
# ground-truth oracle that message passing is checked against.
from __future__ import annotations

import math

import numpy as np

from .dynamics import EpidemicParams, I, R, S, Snapshot
from .graphs import Graph
from .scores import SourceScores

__all__ = ["ExactSirEnumerator", "exact_source_mle", "MAX_NODES", "MAX_STEPS"]

MAX_NODES = 12
MAX_STEPS = 6


_TO_DIGIT = {S: 0, I: 1, R: 2}


class ExactSirEnumerator:
    """Exact SIR distribution over joint states, P(x^t | source).

    Joint states are packed base-3 with compact digits 0=S, 1=I, 2=R
    (digit i is node i's state); global state codes are translated at the
    boundary. The one-step transition kernel is cached per state and
    shared across sources, times and snapshots, since it depends only on
    the graph and the parameters.
    """

    def __init__(self, g: Graph, params: EpidemicParams):
        if params.model != "sir":
            raise ValueError(f"exact enumeration supports SIR only, got {params.model!r}")
        if g.n > MAX_NODES:
            raise ValueError(
                f"graph has {g.n} nodes; exact enumeration is guarded at {MAX_NODES} "
                f"(joint space 3^n)"
            )
        self.g = g
        self.params = params
        self._pow3 = [3 ** i for i in range(g.n)]
        self._neighbors = [g.neighbors(u).tolist() for u in range(g.n)]
        self._kernel: dict[int, list[tuple[int, float]]] = {}
        self._dists: dict[tuple[int, int], dict[int, float]] = {}

    # ---- state packing ----

    def pack(self, states: np.ndarray) -> int:
        key = 0
        for i, s in enumerate(states):
            digit = _TO_DIGIT.get(int(s))
            if digit is None:
                raise ValueError(f"state code {s} is not an SIR state")
            key += digit * self._pow3[i]
        return key

    def unpack(self, key: int) -> np.ndarray:
        """Digits 0=S, 1=I, 2=R per node."""
        out = np.empty(self.g.n, dtype=np.int8)
        for i in range(self.g.n):
            key, out[i] = divmod(key, 3)
        return out

    # ---- transition kernel ----

    def _successors(self, key: int) -> list[tuple[int, float]]:
        cached = self._kernel.get(key)
        if cached is not None:
            return cached
        beta, gamma = self.params.beta, self.params.gamma
        digits = self.unpack(key)
        per_node: list[list[tuple[int, float]]] = []
        base = key
        for i in range(self.g.n):
            if digits[i] == 0:  # S
                cnt = sum(1 for j in self._neighbors[i] if digits[j] == 1)
                if cnt == 0:
                    continue
                p = 1.0 - (1.0 - beta) ** cnt
                if p >= 1.0:
                    base += self._pow3[i]  # S -> I certain
                elif p > 0.0:
                    per_node.append([(0, 1.0 - p), (self._pow3[i], p)])
            elif digits[i] == 1:  # I
                if gamma >= 1.0:
                    base += self._pow3[i]  # I -> R certain
                elif gamma > 0.0:
                    per_node.append([(0, 1.0 - gamma), (self._pow3[i], gamma)])
        combos = [(base, 1.0)]
        for branch in per_node:
            combos = [(k + d, p * q) for k, p in combos for d, q in branch]
        self._kernel[key] = combos
        return combos

    def distribution(self, source: int, t: int) -> dict[int, float]:
        """Distribution over packed joint states after ``t`` steps."""
        if t > MAX_STEPS:
            raise ValueError(
                f"t={t} exceeds the enumeration guard of {MAX_STEPS} steps"
            )
        cached = self._dists.get((source, t))
        if cached is not None:
            return cached
        if t == 0:
            dist = {self._pow3[source]: 1.0}  # digit 1 (I) at the source
        else:
            prev = self.distribution(source, t - 1)
            dist = {}
            for key, prob in prev.items():
                for nxt, q in self._successors(key):
                    dist[nxt] = dist.get(nxt, 0.0) + prob * q
        self._dists[(source, t)] = dist
        return dist

    def marginals(self, source: int, t: int) -> np.ndarray:
        """Exact per-node (P_S, P_I, P_R) as a (3, n) array."""
        out = np.zeros((3, self.g.n))
        for key, prob in self.distribution(source, t).items():
            for i, digit in enumerate(self.unpack(key)):
                out[digit, i] += prob
        return out

    def log_likelihood(self, states: np.ndarray, source: int, t: int) -> float:
        prob = self.distribution(source, t).get(self.pack(states), 0.0)
        return math.log(prob) if prob > 0.0 else -math.inf


def exact_source_mle(g: Graph, params: EpidemicParams, snapshot: Snapshot,
                     t: int | None = None) -> SourceScores:
    """Exact log P(snapshot | source) for every node.

    Guarded at n <= 12 nodes and t <= 6 steps; beyond that the request is
    refused with the offending sizes.
    """
    t = snapshot.t if t is None else t
    if g.n > MAX_NODES or t > MAX_STEPS:
        raise ValueError(
            f"instance too large for exact enumeration: n={g.n} (max {MAX_NODES}), "
            f"t={t} (max {MAX_STEPS})"
        )
    enum = ExactSirEnumerator(g, params)
    scores = np.array([
        enum.log_likelihood(snapshot.states, source, t) for source in range(g.n)
    ])
    return SourceScores(scores=scores)

# Dynamic message passing for SIR source inference.
#
# For a hypothesized source, the forward pass runs the discrete-time cavity
# recursion on directed arcs:
#
#   theta[k->j](t) = theta[k->j](t-1) - beta * phi[k->j](t-1)
#   ps_cav[k->j](t) = P_S^k(0) * prod_{m in N(k) \ j} theta[m->k](t)
#   phi[k->j](t)   = (1-beta)(1-gamma) * phi[k->j](t-1)
#                    - (ps_cav[k->j](t) - ps_cav[k->j](t-1))
#
# with theta = 1, phi[k->j](0) = [k == source], P_S^k(0) = [k != source].
# Node marginals follow as P_S^i(t) = P_S^i(0) * prod_k theta[k->i](t),
# P_R advancing by gamma * P_I, and P_I by complement. The recursion is
# exact on trees, which the enumeration oracle verifies.
#
# The snapshot likelihood is the mean-field factorization: a sum of log
# marginals of the observed per-node states.
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import E, I, IA, R, S, EpidemicParams, Snapshot
from .graphs import Graph
from .scores import SourceScores

__all__ = ["DmpMarginals", "DmpMessages", "dmp_forward", "dmp_messages",
           "dmp_likelihood", "dmp_infer"]


@dataclass(frozen=True)
class DmpMarginals:
    """Per-node (P_S, P_I, P_R) at the evaluation time."""

    p_s: np.ndarray
    p_i: np.ndarray
    p_r: np.ndarray

    def as_matrix(self) -> np.ndarray:
        return np.stack([self.p_s, self.p_i, self.p_r])


@dataclass(frozen=True)
class DmpMessages:
    """Arc-indexed cavity messages with their per-step history.

    ``theta[k]`` / ``phi[k]`` / ``ps_cavity[k]`` hold the arc vectors after
    step k (index 0 is the initialization); ``marginals[k]`` the node
    marginals. ``src``/``dst`` give each arc's endpoints.
    """

    src: np.ndarray
    dst: np.ndarray
    theta: list[np.ndarray]
    phi: list[np.ndarray]
    ps_cavity: list[np.ndarray]
    marginals: list[DmpMarginals]


# --------------------------------------------------------------------------
# Arc layout (cached per graph)
# --------------------------------------------------------------------------


class _ArcLayout:
    """Reverse-arc index and padded incoming-arc table for cavity products.

    Arc e runs src[e] -> dst[e] in CSR order. ``pad`` is an (n, max_deg)
    table of incoming-arc ids per node (sentinel arc 2|E| pads short rows
    and always holds the neutral value 1), so leave-one-out products reduce
    to row-wise prefix/suffix cumulative products.
    """

    def __init__(self, g: Graph):
        self.n = g.n
        dst = g.col_indices
        src = np.repeat(np.arange(g.n), np.diff(g.row_offsets))
        self.src, self.dst = src, dst
        self.n_arcs = dst.size
        perm = np.lexsort((src, dst))
        rev = np.empty(self.n_arcs, dtype=np.int64)
        rev[perm] = np.arange(self.n_arcs)
        self.rev = rev

        max_deg = int(g.degrees.max()) if g.n else 0
        pad = np.full((g.n, max_deg), self.n_arcs, dtype=np.int64)
        for u in range(g.n):
            lo, hi = g.row_offsets[u], g.row_offsets[u + 1]
            pad[u, : hi - lo] = rev[lo:hi]
        self.pad = pad
        # Arc e = (k -> j) sits at slot e - row_offsets[k] of k's incoming
        # table, because incoming arc s of node k is rev[row_offsets[k]+s]
        # and rev is an involution.
        self.slot = np.arange(self.n_arcs) - g.row_offsets[src]


def _arc_layout(g: Graph) -> _ArcLayout:
    layout = g.meta.get("_dmp_arcs")
    if layout is None:
        layout = _ArcLayout(g)
        g.meta["_dmp_arcs"] = layout
    return layout


def _leave_one_out(m: np.ndarray) -> np.ndarray:
    """Row-wise products of all entries except each position (last axis)."""
    width = m.shape[-1]
    pre = np.ones_like(m)
    suf = np.ones_like(m)
    if width > 1:
        np.cumprod(m[..., :-1], axis=-1, out=pre[..., 1:])
        np.cumprod(m[..., :0:-1], axis=-1, out=suf[..., -2::-1])
    return pre * suf


def _forward_batch(g: Graph, params: EpidemicParams, sources: np.ndarray,
                   t: int, trace: DmpMessages | None = None
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cavity recursion for a batch of hypothesized sources.

    Returns (P_S, P_I, P_R), each (len(sources), n). With ``trace`` (only
    for a single source) every step's messages are appended to it.
    """
    beta, gamma = params.beta, params.gamma
    lay = _arc_layout(g)
    nc = sources.size
    na = lay.n_arcs

    p0_sus = np.ones((nc, g.n))
    p0_sus[np.arange(nc), sources] = 0.0

    theta = np.ones((nc, na + 1))  # last slot is the neutral pad sentinel
    phi = np.zeros((nc, na + 1))
    phi[:, :na] = (lay.src[None, :] == sources[:, None]).astype(np.float64)
    cav_prev = p0_sus[:, lay.src]

    p_s = p0_sus.copy()
    p_i = 1.0 - p_s
    p_r = np.zeros((nc, g.n))
    damping = (1.0 - beta) * (1.0 - gamma)

    def record():
        trace.theta.append(theta[0, :na].copy())
        trace.phi.append(phi[0, :na].copy())
        trace.ps_cavity.append(cav_prev[0].copy())
        trace.marginals.append(DmpMarginals(p_s=p_s[0].copy(), p_i=p_i[0].copy(),
                                            p_r=p_r[0].copy()))

    if trace is not None:
        record()
    for _ in range(t):
        theta[:, :na] -= beta * phi[:, :na]
        table = theta[:, lay.pad]                    # (nc, n, max_deg)
        loo = _leave_one_out(table)
        cav = p0_sus[:, lay.src] * loo[:, lay.src, lay.slot]
        phi[:, :na] = damping * phi[:, :na] - (cav - cav_prev)
        cav_prev = cav
        p_r += gamma * p_i
        p_s = p0_sus * table.prod(axis=-1)
        p_i = 1.0 - p_s - p_r
        if trace is not None:
            record()
    return p_s, p_i, p_r


def dmp_forward(g: Graph, params: EpidemicParams, source: int, t: int) -> DmpMarginals:
    """Time-t node marginals given ``source`` started the outbreak at t=0."""
    if params.model != "sir":
        raise ValueError(f"message passing supports SIR only, got {params.model!r}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if not (0 <= source < g.n):
        raise ValueError(f"source {source} out of range for n={g.n}")
    p_s, p_i, p_r = _forward_batch(g, params, np.array([source]), t)
    return DmpMarginals(p_s=p_s[0], p_i=p_i[0], p_r=p_r[0])


def dmp_messages(g: Graph, params: EpidemicParams, source: int, t: int) -> DmpMessages:
    """Forward pass that keeps the full message history (diagnostics)."""
    if params.model != "sir":
        raise ValueError(f"message passing supports SIR only, got {params.model!r}")
    lay = _arc_layout(g)
    trace = DmpMessages(src=lay.src, dst=lay.dst, theta=[], phi=[],
                        ps_cavity=[], marginals=[])
    _forward_batch(g, params, np.array([source]), t, trace=trace)
    return trace


def dmp_likelihood(marginals: DmpMarginals, snapshot: Snapshot) -> float:
    """Log-likelihood of the snapshot under the mean-field factorization.

    Zero-probability factors contribute -inf, keeping scores comparable.
    """
    states = snapshot.states
    if np.isin(states, (E, IA)).any():
        raise ValueError("snapshot contains exposed/asymptomatic states; "
                         "message-passing scoring covers SIR snapshots only")
    probs = np.empty(states.size)
    probs[states == S] = marginals.p_s[states == S]
    probs[states == I] = marginals.p_i[states == I]
    probs[states == R] = marginals.p_r[states == R]
    probs = np.clip(probs, 0.0, None)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(probs)))


def _likelihoods_from_marginals(p_s, p_i, p_r, states) -> np.ndarray:
    """Vectorized snapshot log-likelihood per candidate row."""
    probs = np.empty_like(p_s)
    probs[:, states == S] = p_s[:, states == S]
    probs[:, states == I] = p_i[:, states == I]
    probs[:, states == R] = p_r[:, states == R]
    probs = np.clip(probs, 0.0, None)
    with np.errstate(divide="ignore"):
        return np.log(probs).sum(axis=1)


def dmp_infer(
    g: Graph,
    params: EpidemicParams,
    snapshot: Snapshot,
    t: int | None = None,
    t_scan: range | None = None,
    chunk_size: int = 32,
) -> SourceScores:
    """Score every node as the source of ``snapshot``.

    Candidates are restricted to observed non-S nodes: a hypothesized
    source has P_S = 0 forever, so an S observation there is impossible
    and such nodes score -inf. Pass ``t`` when the observation time is
    known (defaults to the snapshot's recorded time) or ``t_scan`` to take
    each candidate's best score over a range of hypothesized times.
    Complexity is O(candidates * t * |E|); candidates run in fixed-size
    chunks to bound memory.
    """
    if params.model != "sir":
        raise ValueError(f"message passing supports SIR only, got {params.model!r}")
    candidates = snapshot.non_susceptible()
    if candidates.size == 0:
        raise ValueError("empty epidemic: snapshot has no non-susceptible nodes")
    times = list(t_scan) if t_scan is not None else [snapshot.t if t is None else t]

    scores = np.full(g.n, -np.inf)
    states = snapshot.states
    for lo in range(0, candidates.size, chunk_size):
        chunk = candidates[lo:lo + chunk_size]
        best = np.full(chunk.size, -np.inf)
        for t_hyp in times:
            p_s, p_i, p_r = _forward_batch(g, params, chunk, t_hyp)
            best = np.maximum(best, _likelihoods_from_marginals(p_s, p_i, p_r, states))
        scores[chunk] = best
    return SourceScores(scores=scores)

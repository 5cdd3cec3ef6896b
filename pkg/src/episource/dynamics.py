# Discrete-time stochastic epidemic simulators (SIR / SEIR / asymptomatic
# COVID SEIR) plus the mean-field ODE integrator. All step functions are
# synchronous: every transition decision reads the pre-step state, and each
# node consumes its own slot of the per-step random vector, so results do
# not depend on any iteration order.
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .graphs import Graph, bfs_distances

__all__ = [
    "S", "E", "I", "IA", "R",
    "STATE_LETTERS",
    "EpidemicParams",
    "Snapshot",
    "MeanFieldTrajectory",
    "step_rng",
    "step_sir", "step_seir", "step_covid_seir", "step",
    "initial_states",
    "run_episode",
    "check_reachability",
    "integrate_mean_field",
]

# Node states. I and IA share a progression rank: both are "infectious".
S, E, I, IA, R = 0, 1, 2, 3, 4
STATE_LETTERS = "SEIAR"
STATE_RANK = np.array([0, 1, 2, 2, 3])

_MODELS = ("sir", "seir", "covid_seir")


@dataclass(frozen=True)
class EpidemicParams:
    """Dynamics parameters for one epidemic model.

    ``beta`` is the per-contact infection probability per step used by SIR
    and SEIR. The COVID variant uses ``lam`` per symptomatic contact and
    ``asym_relative * lam`` per asymptomatic contact; its aggregate
    beta = <k> * lam only enters through the R0 relation.
    """

    model: str
    beta: float = 0.0
    gamma: float = 0.0
    alpha: float = 0.0          # E -> infectious probability (SEIR family)
    asym_fraction: float = 0.0  # p_a: chance a new infection is asymptomatic
    asym_relative: float = 0.0  # r_a: relative infectiousness of asymptomatics
    lam: float = 0.0            # per-contact rate for the COVID variant
    r0: float | None = None     # recorded basic reproduction number, if known

    def __post_init__(self):
        if self.model not in _MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {_MODELS}")
        for name in ("beta", "gamma", "alpha", "asym_fraction", "asym_relative", "lam"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be a probability in [0, 1], got {v}")

    @staticmethod
    def sir(beta: float, gamma: float, r0: float | None = None) -> EpidemicParams:
        return EpidemicParams(model="sir", beta=beta, gamma=gamma, r0=r0)

    @staticmethod
    def seir(beta: float, gamma: float, alpha: float, r0: float | None = None) -> EpidemicParams:
        return EpidemicParams(model="seir", beta=beta, gamma=gamma, alpha=alpha, r0=r0)

    @staticmethod
    def from_r0(model: str, r0: float, gamma: float, lambda1: float,
                alpha: float = 0.0) -> EpidemicParams:
        """Derive beta = r0 * gamma / lambda_1 from a target reproduction number."""
        beta = r0 * gamma / lambda1
        if beta > 1.0:
            raise ValueError(
                f"r0={r0} with gamma={gamma} and lambda1={lambda1:.4g} needs "
                f"beta={beta:.4g} > 1; not a probability"
            )
        return EpidemicParams(model=model, beta=beta, gamma=gamma, alpha=alpha, r0=r0)

    @staticmethod
    def covid_preset() -> EpidemicParams:
        """Asymptomatic SEIR calibrated to a COVID-like natural history.

        Incubation 2.5 days, infectious period 4 days, half of infections
        asymptomatic at half the infectiousness, per-contact rate 0.073
        (solved from R0=2.5 on the reference co-location network).
        """
        return EpidemicParams(
            model="covid_seir",
            gamma=1.0 / 4.0,
            alpha=1.0 / 2.5,
            asym_fraction=0.5,
            asym_relative=0.5,
            lam=0.073,
            r0=2.5,
        )

    @property
    def n_channels(self) -> int:
        """One-hot width for snapshots of this model."""
        return {"sir": 3, "seir": 4, "covid_seir": 5}[self.model]

    def state_values(self) -> tuple[int, ...]:
        return {"sir": (S, I, R), "seir": (S, E, I, R),
                "covid_seir": (S, E, I, IA, R)}[self.model]


@dataclass(frozen=True)
class Snapshot:
    """Per-node state vector observed at step t, with the generating truth."""

    graph_id: str
    t: int
    states: np.ndarray  # int8, values from {S, E, I, IA, R}
    source: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "states", np.asarray(self.states, dtype=np.int8))

    def non_susceptible(self) -> np.ndarray:
        return np.flatnonzero(self.states != S)

    def ever_infected(self) -> np.ndarray:
        """Nodes the epidemic has reached (everything past S)."""
        return self.non_susceptible()


# --------------------------------------------------------------------------
# Counter-based randomness
# --------------------------------------------------------------------------


def step_rng(seed: int, t: int) -> np.random.Generator:
    """Generator for step ``t`` of episode ``seed``.

    Philox is counter-based, so the random vector of a step is a pure
    function of (seed, t); node i always consumes slot i of each vector.
    This makes synchronous updates order-independent and episodes
    reproducible regardless of how steps are scheduled.
    """
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, t & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def mix64(seed: int, index: int) -> int:
    """Stable 64-bit hash of (seed, index) for per-sample episode seeds."""
    x = (seed ^ (index * 0x9E3779B97F4A7C15)) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


# --------------------------------------------------------------------------
# Synchronous step kernels
# --------------------------------------------------------------------------


def _arc_sources(g: Graph) -> np.ndarray:
    src = g.meta.get("_arc_src")
    if src is None:
        src = np.repeat(np.arange(g.n), np.diff(g.row_offsets))
        g.meta["_arc_src"] = src
    return src


def _infected_neighbor_counts(g: Graph, mask: np.ndarray) -> np.ndarray:
    """Per-node count of neighbors for which ``mask`` is true."""
    src = _arc_sources(g)
    return np.bincount(src[mask[g.col_indices]], minlength=g.n)


def step_sir(g: Graph, params: EpidemicParams, states: np.ndarray,
             rng: np.random.Generator) -> np.ndarray:
    """One synchronous SIR step.

    S -> I with probability 1 - (1-beta)^(# infected neighbors);
    I -> R with probability gamma.
    """
    if params.model != "sir":
        raise ValueError(f"step_sir needs SIR params, got model={params.model!r}")
    u_inf = rng.random(g.n)
    u_rec = rng.random(g.n)
    counts = _infected_neighbor_counts(g, states == I)
    p_inf = 1.0 - (1.0 - params.beta) ** counts
    out = states.copy()
    out[(states == S) & (u_inf < p_inf)] = I
    out[(states == I) & (u_rec < params.gamma)] = R
    return out


def step_seir(g: Graph, params: EpidemicParams, states: np.ndarray,
              rng: np.random.Generator) -> np.ndarray:
    """One synchronous SEIR step; exposed nodes are not infectious."""
    if params.model != "seir":
        raise ValueError(f"step_seir needs SEIR params, got model={params.model!r}")
    u_inf = rng.random(g.n)
    u_act = rng.random(g.n)
    u_rec = rng.random(g.n)
    counts = _infected_neighbor_counts(g, states == I)
    p_inf = 1.0 - (1.0 - params.beta) ** counts
    out = states.copy()
    out[(states == S) & (u_inf < p_inf)] = E
    out[(states == E) & (u_act < params.alpha)] = I
    out[(states == I) & (u_rec < params.gamma)] = R
    return out


def step_covid_seir(g: Graph, params: EpidemicParams, states: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """One synchronous step of the asymptomatic SEIR variant.

    Susceptibles are exposed with probability
    1 - (1-lam)^(#I neighbors) * (1-r_a*lam)^(#Ia neighbors).
    A single uniform resolves E -> Ia (prob p_a*alpha) vs E -> I
    (prob (1-p_a)*alpha), so the two transitions are mutually exclusive.
    """
    if params.model != "covid_seir":
        raise ValueError(f"step_covid_seir needs covid_seir params, got {params.model!r}")
    u_inf = rng.random(g.n)
    u_act = rng.random(g.n)
    u_rec = rng.random(g.n)
    n_sym = _infected_neighbor_counts(g, states == I)
    n_asym = _infected_neighbor_counts(g, states == IA)
    escape = (1.0 - params.lam) ** n_sym
    escape *= (1.0 - params.asym_relative * params.lam) ** n_asym
    out = states.copy()
    out[(states == S) & (u_inf < 1.0 - escape)] = E
    exposed = states == E
    p_asym = params.asym_fraction * params.alpha
    out[exposed & (u_act < p_asym)] = IA
    out[exposed & (u_act >= p_asym) & (u_act < params.alpha)] = I
    infectious = (states == I) | (states == IA)
    out[infectious & (u_rec < params.gamma)] = R
    return out


_STEP_FNS = {"sir": step_sir, "seir": step_seir, "covid_seir": step_covid_seir}


def step(g: Graph, params: EpidemicParams, states: np.ndarray,
         rng: np.random.Generator) -> np.ndarray:
    return _STEP_FNS[params.model](g, params, states, rng)


def initial_states(g: Graph, source: int) -> np.ndarray:
    states = np.full(g.n, S, dtype=np.int8)
    states[source] = I
    return states


def run_episode(
    g: Graph,
    params: EpidemicParams,
    source: int,
    T: int,
    t_observe: int,
    seed: int,
    return_trajectory: bool = False,
    graph_id: str = "",
) -> Snapshot | tuple[Snapshot, list[np.ndarray]]:
    """Simulate one outbreak from ``source`` and snapshot it at ``t_observe``.

    Deterministic given ``seed``: step t draws from :func:`step_rng`.
    """
    if not (0 <= t_observe <= T):
        raise ValueError(f"need 0 <= t_observe <= T, got t_observe={t_observe}, T={T}")
    if not (0 <= source < g.n):
        raise ValueError(f"source {source} out of range for n={g.n}")
    states = initial_states(g, source)
    trajectory = [states]
    observed = states
    for t in range(1, T + 1):
        states = step(g, params, states, step_rng(seed, t))
        if return_trajectory:
            trajectory.append(states)
        if t == t_observe:
            observed = states
            if not return_trajectory:
                break
    snap = Snapshot(graph_id=graph_id, t=t_observe, states=observed, source=source, seed=seed)
    if return_trajectory:
        return snap, trajectory
    return snap


def check_reachability(g: Graph, snap: Snapshot) -> bool:
    """Snapshot invariant: every non-S node lies within t hops of the source."""
    dist = bfs_distances(g, snap.source)
    reached = snap.non_susceptible()
    return bool(np.all((dist[reached] >= 0) & (dist[reached] <= snap.t)))


# --------------------------------------------------------------------------
# Mean-field ODE integrator
# --------------------------------------------------------------------------


@dataclass
class MeanFieldTrajectory:
    """Forward-Euler trajectory of per-node (S_i, I_i, R_i) probabilities."""

    times: np.ndarray      # (steps+1,)
    s: np.ndarray          # (steps+1, n)
    r: np.ndarray          # (steps+1, n)

    @property
    def i(self) -> np.ndarray:
        return 1.0 - self.s - self.r

    def totals(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.s.sum(axis=1), self.i.sum(axis=1), self.r.sum(axis=1)


def integrate_mean_field(
    g: Graph,
    params: EpidemicParams,
    s0: np.ndarray,
    r0: np.ndarray | None = None,
    T: float = 10.0,
    dt: float = 0.01,
) -> MeanFieldTrajectory:
    """Integrate dS_i/dt = -beta * sum_j A_ij I_j * S_i, dR_i/dt = gamma I_i.

    I_i is always the complement 1 - S_i - R_i, so the per-node probability
    sum is conserved exactly. Explicit Euler; dt must satisfy the stability
    precondition dt <= 0.1 / max(beta * deg_max, gamma).
    """
    beta, gamma = params.beta, params.gamma
    deg_max = int(g.degrees.max()) if g.n else 0
    limit = 0.1 / max(beta * deg_max, gamma, 1e-300)
    if dt > limit:
        raise ValueError(f"dt={dt} exceeds stability limit {limit:.4g}")
    steps = int(round(T / dt))
    adj = g.adjacency()
    s = np.asarray(s0, dtype=np.float64).copy()
    r = np.zeros(g.n) if r0 is None else np.asarray(r0, dtype=np.float64).copy()
    out_s = np.empty((steps + 1, g.n))
    out_r = np.empty((steps + 1, g.n))
    out_s[0], out_r[0] = s, r
    for k in range(1, steps + 1):
        i = 1.0 - s - r
        s = s + dt * (-beta * (adj @ i) * s)
        r = r + dt * (gamma * i)
        if s.min() < -1e-9 or r.max() > 1.0 + 1e-9 or (1.0 - s - r).min() < -1e-9:
            raise ValueError(
                f"probability left [0,1] at step {k} (dt={dt}); reduce the step size"
            )
        out_s[k], out_r[k] = s, r
    times = np.arange(steps + 1) * dt
    return MeanFieldTrajectory(times=times, s=out_s, r=out_r)

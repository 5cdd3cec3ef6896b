# Closed-form detectability limits for single-source recovery on connected
# random graphs, and the logistic fit used to validate them empirically.
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

__all__ = [
    "BoundCurve",
    "t_max",
    "p_max",
    "expected_gi_size",
    "bound_curve",
    "fit_logistic",
]


def t_max(n: int, gamma: float, r0: float) -> float:
    """Time horizon ln(n) / (gamma * (r0 - 1)) beyond which recovery degrades.

    Only defined in the epidemic regime r0 > 1; at r0 <= 1 the horizon
    diverges (no outbreak to trace).
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if gamma <= 0:
        raise ValueError(f"need gamma > 0, got {gamma}")
    if r0 <= 1.0:
        raise ValueError(f"no epidemic regime: r0 must exceed 1, got {r0}")
    return math.log(n) / (gamma * (r0 - 1.0))


def p_max(g_i_size: float, p: float) -> float:
    """Triangle-ambiguity upper bound on top-1 accuracy.

    With k = |G_I| * p expected neighbors inside the infected subgraph, the
    chance that none of them are themselves connected is (1-p)^C(k,2);
    each triangle through the source drops identifiability to 1/3. The
    binomial coefficient is extended to real k as k(k-1)/2, clamped at 0.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must be in [0, 1], got {p}")
    if g_i_size < 0:
        raise ValueError(f"g_i_size must be >= 0, got {g_i_size}")
    k = g_i_size * p
    exponent = max(0.0, 0.5 * k * (k - 1.0))
    return 1.0 / 3.0 + (2.0 / 3.0) * (1.0 - p) ** exponent


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def expected_gi_size(n: int, gamma: float, r0: float, t: float) -> float:
    """Modeled infected-subgraph size |G_I|(t) under the logistic decay of S.

    The susceptible fraction is approximated by a logistic with rate
    gamma*(r0-1) and midpoint at the recovery horizon, so
    |G_I|(t) = n * (1 - sigmoid(gamma*(r0-1)*(t_max - t))). This is a
    plug-in at the expected size; the bound it feeds is not a strict upper
    bound on the mixture over |G_I| realizations.
    """
    horizon = t_max(n, gamma, r0)
    return float(n * (1.0 - _sigmoid(gamma * (r0 - 1.0) * (horizon - t))))


@dataclass(frozen=True)
class BoundCurve:
    """P_max over a time grid, with the inputs that produced it."""

    t: np.ndarray
    expected_gi: np.ndarray
    p_max: np.ndarray
    n: int
    p: float
    gamma: float
    r0: float

    def rows(self):
        for k in range(self.t.size):
            yield self.t[k], self.expected_gi[k], self.p_max[k]


def bound_curve(n: int, p: float, gamma: float, r0: float,
                t_grid: np.ndarray) -> BoundCurve:
    """Compose the modeled |G_I|(t) with the triangle bound per grid point."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    gi = np.array([expected_gi_size(n, gamma, r0, t) for t in t_grid])
    pm = np.array([p_max(size, p) for size in gi])
    return BoundCurve(t=t_grid, expected_gi=gi, p_max=pm, n=n, p=p, gamma=gamma, r0=r0)


def fit_logistic(times: np.ndarray, series: np.ndarray,
                 restarts: int = 20, seed: int = 0) -> tuple[float, float, float]:
    """Least-squares fit of sigmoid(a * (t0 - t)) to a decaying series.

    The series is min-max scaled to [0, 1] before fitting, so any
    monotone-decay curve (e.g. a susceptible count) lands on the sigmoid's
    asymptotes. Returns (rate a, midpoint t0, R^2 on the scaled series).
    Fits run from a coarse grid of starting points plus seeded random
    restarts, keeping the best.
    """
    times = np.asarray(times, dtype=np.float64)
    series = np.asarray(series, dtype=np.float64)
    if series.size < 5:
        raise ValueError(f"need at least 5 points to fit, got {series.size}")
    lo, hi = float(series.min()), float(series.max())
    if hi - lo <= 0.0:
        raise ValueError("constant series: logistic fit is degenerate")
    y = (series - lo) / (hi - lo)

    span = max(times.max() - times.min(), 1e-12)
    rng = np.random.default_rng(seed)
    starts = [(a0, t0) for a0 in (0.1, 1.0, 10.0 / span)
              for t0 in np.linspace(times.min(), times.max(), 4)]
    starts += [(float(10.0 ** rng.uniform(-2, 1.5)),
                float(rng.uniform(times.min(), times.max())))
               for _ in range(restarts)]

    def residuals(theta):
        a, t0 = theta
        return _sigmoid(a * (t0 - times)) - y

    best = None
    for a0, t0 in starts:
        try:
            res = least_squares(residuals, x0=[a0, t0], method="lm", max_nfev=2000)
        except Exception:
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise RuntimeError("logistic fit failed from every starting point")
    a, t0 = best.x
    ss_res = float(np.sum(residuals(best.x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot
    return float(a), float(t0), r_squared

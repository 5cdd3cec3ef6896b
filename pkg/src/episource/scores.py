# Per-node source scores with deterministic ranking.
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SourceScores"]


@dataclass(frozen=True)
class SourceScores:
    """Real-valued per-node scores for the source hypothesis.

    Values are log-likelihoods (message passing, enumeration) or logits
    (neural scorer); -inf marks impossible candidates. All ranking helpers
    break ties by smallest node id, so results are deterministic.
    """

    scores: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=np.float64)
        if np.isnan(arr).any():
            raise ValueError("scores must be finite or -inf, got NaN")
        object.__setattr__(self, "scores", arr)

    @property
    def n(self) -> int:
        return self.scores.size

    def ranking(self) -> np.ndarray:
        """Node ids sorted by descending score, ties by ascending id."""
        return np.lexsort((np.arange(self.n), -self.scores))

    def argmax(self) -> int:
        return int(self.ranking()[0])

    def topk(self, k: int) -> np.ndarray:
        return self.ranking()[:k]

    def rank_of(self, node: int) -> int:
        """0-based position of ``node`` in the descending ranking."""
        order = self.ranking()
        pos = np.empty(self.n, dtype=np.int64)
        pos[order] = np.arange(self.n)
        return int(pos[node])

    def log_posterior(self) -> np.ndarray:
        """Scores normalized as a log-distribution over candidates."""
        finite = self.scores[np.isfinite(self.scores)]
        if finite.size == 0:
            raise ValueError("cannot normalize scores that are all -inf")
        m = finite.max()
        logz = m + np.log(np.sum(np.exp(self.scores[np.isfinite(self.scores)] - m)))
        return self.scores - logz

# Score-file format shared by the inference subcommands and the evaluator.
#
# A scores file is JSONL: a header line identifying the method, then one
# row per sample carrying the argmax, the top-20 ranking and the rank of
# the true source. Rows never contain wall-clock values (reruns must be
# byte-identical); timing goes to a sidecar JSON next to the scores file.
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .metrics import TOPK_LEVELS
from .scores import SourceScores

__all__ = ["ScoreRow", "write_scores", "read_scores", "write_timing", "read_timing"]

SCORES_FORMAT_VERSION = "1"
_TOP_STORED = max(TOPK_LEVELS)


@dataclass(frozen=True)
class ScoreRow:
    sample_id: int
    argmax: int
    top: list[int]
    truth_rank: int


def row_from_scores(sample_id: int, scores: SourceScores, truth: int) -> ScoreRow:
    ranking = scores.ranking()
    return ScoreRow(
        sample_id=sample_id,
        argmax=int(ranking[0]),
        top=[int(u) for u in ranking[:_TOP_STORED]],
        truth_rank=scores.rank_of(truth),
    )


def write_scores(rows: list[ScoreRow], path: str | Path, method: str,
                 n_nodes: int, config_hash: str = "", seed: int = 0,
                 split: str = "test", limit: int | None = None) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        header = {
            "kind": "scores", "format_version": SCORES_FORMAT_VERSION,
            "method": method, "n_nodes": n_nodes,
            "split": split, "limit": limit,
            "config_hash": config_hash, "seed": seed, "runtime_ms": None,
        }
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for row in rows:
            payload = {"sample_id": row.sample_id, "argmax": row.argmax,
                       "top": row.top, "truth_rank": row.truth_rank}
            fh.write(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def read_scores(path: str | Path) -> tuple[dict, list[ScoreRow]]:
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        header = json.loads(next(fh))
        if header.get("kind") != "scores":
            raise ValueError(f"{path}: not a scores file")
        for line in fh:
            d = json.loads(line)
            rows.append(ScoreRow(sample_id=d["sample_id"], argmax=d["argmax"],
                                 top=list(d["top"]), truth_rank=d["truth_rank"]))
    return header, rows


def write_timing(path: str | Path, method: str, total_s: float, n_samples: int) -> None:
    payload = {"method": method, "total_s": total_s, "n_samples": n_samples,
               "per_sample_ms": 1000.0 * total_s / max(n_samples, 1)}
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def read_timing(path: str | Path) -> dict | None:
    p = Path(path)
    if not p.exists():
        return None
    return json.loads(p.read_text(encoding="utf-8"))

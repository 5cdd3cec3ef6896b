# Snapshot dataset generation and on-disk formats.
#
# A dataset is a JSONL file (one snapshot per line, states run-length
# encoded over the alphabet SEIAR) plus a manifest JSON recording the
# epidemic parameters, the seeded 80-10-10 split and the format version,
# plus one graph JSON per referenced graph.
from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import (
    EpidemicParams,
    S,
    STATE_LETTERS,
    Snapshot,
    mix64,
    run_episode,
)
from .graphs import Graph

__all__ = [
    "FORMAT_VERSION",
    "Dataset",
    "encode_states",
    "decode_states",
    "generate_dataset",
    "write_dataset",
    "read_dataset",
]

FORMAT_VERSION = "1"

_RLE_TOKEN = re.compile(r"([SEIAR])(\d+)")


def encode_states(states: np.ndarray) -> str:
    """Run-length encode a state vector, e.g. [S,S,I,R] -> 'S2I1R1'."""
    out = []
    arr = np.asarray(states)
    start = 0
    for stop in range(1, arr.size + 1):
        if stop == arr.size or arr[stop] != arr[start]:
            out.append(f"{STATE_LETTERS[arr[start]]}{stop - start}")
            start = stop
    return "".join(out)


def decode_states(text: str, n: int) -> np.ndarray:
    runs = _RLE_TOKEN.findall(text)
    if "".join(f"{s}{c}" for s, c in runs) != text:
        raise ValueError(f"malformed run-length state string {text!r}")
    states = np.empty(n, dtype=np.int8)
    pos = 0
    for letter, count in runs:
        k = int(count)
        states[pos:pos + k] = STATE_LETTERS.index(letter)
        pos += k
    if pos != n:
        raise ValueError(f"state string decodes to {pos} nodes, expected {n}")
    return states


@dataclass
class Dataset:
    """In-memory snapshot collection with its split and provenance."""

    graphs: dict[str, Graph]
    snapshots: list[Snapshot]
    params: EpidemicParams
    T: int
    seed: int
    splits: dict[str, list[int]] = field(default_factory=dict)

    def subset(self, name: str) -> list[Snapshot]:
        return [self.snapshots[i] for i in self.splits[name]]

    def graph_for(self, snap: Snapshot) -> Graph:
        return self.graphs[snap.graph_id]


def generate_dataset(
    graphs: Graph | Sequence[Graph],
    params: EpidemicParams,
    n_samples: int,
    T: int,
    seed: int,
    graph_ids: Sequence[str] | None = None,
    threads: int = 1,
) -> Dataset:
    """Draw ``n_samples`` independent snapshots.

    Per sample: the source is uniform over nodes, the observation time is
    uniform over {1..T}, and the episode seed is ``mix64(seed, index)``, so
    any sample can be regenerated in isolation and the result does not
    depend on ``threads`` (samples are embarrassingly parallel). The
    80-10-10 train/val/test split is a seeded shuffle of sample indices.
    When several graphs are given, each sample picks one uniformly.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    graph_list = [graphs] if isinstance(graphs, Graph) else list(graphs)
    if graph_ids is None:
        graph_ids = [f"g{idx}" for idx in range(len(graph_list))]
    by_id = dict(zip(graph_ids, graph_list))

    rng = np.random.default_rng(seed)
    which_graph = rng.integers(0, len(graph_list), size=n_samples)
    sources = np.empty(n_samples, dtype=np.int64)
    for k in range(n_samples):
        sources[k] = rng.integers(0, graph_list[which_graph[k]].n)
    times = rng.integers(1, T + 1, size=n_samples)

    def simulate(k: int) -> Snapshot:
        gid = graph_ids[which_graph[k]]
        return run_episode(
            by_id[gid], params,
            source=int(sources[k]), T=int(times[k]), t_observe=int(times[k]),
            seed=mix64(seed, k), graph_id=gid,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            snapshots = list(pool.map(simulate, range(n_samples)))
    else:
        snapshots = [simulate(k) for k in range(n_samples)]

    order = rng.permutation(n_samples)
    n_train = int(round(0.8 * n_samples))
    n_val = int(round(0.1 * n_samples))
    splits = {
        "train": sorted(order[:n_train].tolist()),
        "val": sorted(order[n_train:n_train + n_val].tolist()),
        "test": sorted(order[n_train + n_val:].tolist()),
    }
    return Dataset(graphs=by_id, snapshots=snapshots, params=params,
                   T=T, seed=seed, splits=splits)


# --------------------------------------------------------------------------
# On-disk format
# --------------------------------------------------------------------------


def _params_payload(p: EpidemicParams) -> dict:
    return {
        "model": p.model, "beta": p.beta, "gamma": p.gamma, "alpha": p.alpha,
        "asym_fraction": p.asym_fraction, "asym_relative": p.asym_relative,
        "lam": p.lam, "r0": p.r0,
    }


def write_dataset(ds: Dataset, directory: str | Path,
                  config_hash: str = "", stem: str = "dataset") -> dict[str, Path]:
    """Write snapshots JSONL, manifest JSON and per-graph JSON files.

    Output is canonical (sorted keys, fixed separators), so identical
    datasets serialize byte-identically.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    jsonl = directory / f"{stem}.jsonl"
    with jsonl.open("w", encoding="utf-8") as fh:
        header = {
            "format_version": FORMAT_VERSION,
            "kind": "snapshots",
            "config_hash": config_hash,
            "seed": ds.seed,
        }
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for idx, snap in enumerate(ds.snapshots):
            row = {
                "sample_id": idx,
                "graph_id": snap.graph_id,
                "t": snap.t,
                "source": snap.source,
                "states": encode_states(snap.states),
                "seed": snap.seed,
            }
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
    paths["snapshots"] = jsonl

    manifest = directory / f"{stem}.manifest.json"
    payload = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "params": _params_payload(ds.params),
        "n_samples": len(ds.snapshots),
        "T": ds.T,
        "seed": ds.seed,
        "splits": ds.splits,
        "graphs": {gid: f"{stem}.{gid}.json" for gid in ds.graphs},
    }
    manifest.write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )
    paths["manifest"] = manifest

    for gid, g in ds.graphs.items():
        gp = directory / f"{stem}.{gid}.json"
        g.save(gp)
        paths[f"graph:{gid}"] = gp
    return paths


def read_dataset(manifest_path: str | Path) -> Dataset:
    manifest_path = Path(manifest_path)
    payload = json.loads(manifest_path.read_text(encoding="utf-8"))
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported dataset format version {payload.get('format_version')!r}"
        )
    params = EpidemicParams(**payload["params"])
    graphs = {
        gid: Graph.load(manifest_path.parent / rel)
        for gid, rel in payload["graphs"].items()
    }
    stem = manifest_path.name.removesuffix(".manifest.json")
    snapshots: list[Snapshot] = []
    with (manifest_path.parent / f"{stem}.jsonl").open(encoding="utf-8") as fh:
        header = json.loads(next(fh))
        if header.get("kind") != "snapshots":
            raise ValueError("snapshot file is missing its header line")
        for line in fh:
            row = json.loads(line)
            g = graphs[row["graph_id"]]
            snapshots.append(Snapshot(
                graph_id=row["graph_id"], t=row["t"],
                states=decode_states(row["states"], g.n),
                source=row["source"], seed=row["seed"],
            ))
    return Dataset(graphs=graphs, snapshots=snapshots, params=params,
                   T=payload["T"], seed=payload["seed"],
                   splits={k: list(v) for k, v in payload["splits"].items()})

# Experiment configuration: a single versioned JSON document drives every
# pipeline stage. All randomness flows from the one top-level seed through
# mix64(seed, stage), so artifacts are reproducible from the file alone.
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dynamics import EpidemicParams, mix64
from .graphs import Graph, generate_ba, generate_er, generate_rgg, leading_eigenvalue, load_edge_list
from .training import TrainConfig

__all__ = ["SCHEMA_VERSION", "ConfigError", "GraphSpec", "EpidemicSpec",
           "DatasetSpec", "ExperimentConfig", "config_hash"]

SCHEMA_VERSION = "1"

# stage tags for deriving sub-seeds from the top-level seed
SEED_GRAPH, SEED_DATASET, SEED_TRAIN, SEED_BENCH = 1, 2, 3, 4


class ConfigError(ValueError):
    """Configuration schema violation; message names the offending field."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class GraphSpec:
    generator: str
    n: int = 0
    p: float | None = None
    m: int | None = None
    radius: float | None = None
    target_edges: int | None = None
    path: str | None = None
    connected: bool = True
    seed: int | None = None  # defaults to mix64(top_seed, SEED_GRAPH)

    def validate(self) -> None:
        _require(self.generator in ("er", "ba", "rgg", "edge_list"),
                 f"graph.generator: unknown generator {self.generator!r}")
        if self.generator == "er":
            _require(self.p is not None, "graph.p: required for the ER generator")
        elif self.generator == "ba":
            _require(self.m is not None, "graph.m: required for the BA generator")
        elif self.generator == "rgg":
            _require((self.radius is None) != (self.target_edges is None),
                     "graph: give exactly one of radius or target_edges for RGG")
        else:
            _require(self.path is not None, "graph.path: required for edge_list")
            _require(Path(self.path).exists(), f"graph.path: {self.path} does not exist")

    def build(self, top_seed: int) -> Graph:
        seed = self.seed if self.seed is not None else mix64(top_seed, SEED_GRAPH)
        if self.generator == "er":
            return generate_er(self.n, self.p, seed, require_connected=self.connected)
        if self.generator == "ba":
            return generate_ba(self.n, self.m, seed)
        if self.generator == "rgg":
            return generate_rgg(self.n, radius=self.radius, seed=seed,
                                require_connected=self.connected,
                                target_edges=self.target_edges)
        return load_edge_list(self.path)


@dataclass(frozen=True)
class EpidemicSpec:
    model: str = "sir"
    r0: float | None = 2.5
    beta: float | None = None
    gamma: float | None = 0.4
    alpha: float = 0.5
    preset: str | None = None

    def validate(self) -> None:
        if self.preset is not None:
            _require(self.preset == "covid", f"epidemic.preset: unknown preset {self.preset!r}")
            return
        _require(self.model in ("sir", "seir", "covid_seir"),
                 f"epidemic.model: unknown model {self.model!r}")
        _require((self.r0 is None) != (self.beta is None),
                 "epidemic: give exactly one of r0 or beta")
        _require(self.gamma is not None, "epidemic.gamma: required")

    def build(self, g: Graph) -> EpidemicParams:
        if self.preset == "covid":
            return EpidemicParams.covid_preset()
        if self.beta is not None:
            return EpidemicParams(model=self.model, beta=self.beta, gamma=self.gamma,
                                  alpha=self.alpha)
        lam1 = leading_eigenvalue(g)
        return EpidemicParams.from_r0(self.model, self.r0, self.gamma, lam1,
                                      alpha=self.alpha)


@dataclass(frozen=True)
class DatasetSpec:
    n_samples: int = 1000
    horizon: int = 30
    stem: str = "dataset"

    def validate(self) -> None:
        _require(self.n_samples >= 1, "dataset.n_samples: must be >= 1")
        _require(self.horizon >= 1, "dataset.horizon: must be >= 1")


_METHODS = ("dmp", "gnn", "rumor", "distance")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "out"
    graph: GraphSpec = field(default_factory=lambda: GraphSpec(generator="er", n=100, p=0.1))
    epidemic: EpidemicSpec = field(default_factory=EpidemicSpec)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    methods: tuple[str, ...] = ("dmp", "gnn")

    def validate(self) -> None:
        self.graph.validate()
        self.epidemic.validate()
        self.dataset.validate()
        for m in self.methods:
            _require(m in _METHODS, f"methods: unknown method {m!r}")

    @staticmethod
    def from_dict(payload: dict) -> ExperimentConfig:
        version = payload.get("schema_version", SCHEMA_VERSION)
        _require(version == SCHEMA_VERSION,
                 f"schema_version: expected {SCHEMA_VERSION!r}, got {version!r}")

        def build(cls, key):
            data = payload.get(key, {})
            _require(isinstance(data, dict), f"{key}: expected an object")
            known = {f for f in cls.__dataclass_fields__}
            for k in data:
                _require(k in known, f"{key}.{k}: unknown field")
            try:
                return cls(**data)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from exc

        cfg = ExperimentConfig(
            seed=payload.get("seed", 0),
            output_dir=payload.get("output_dir", "out"),
            graph=build(GraphSpec, "graph"),
            epidemic=build(EpidemicSpec, "epidemic"),
            dataset=build(DatasetSpec, "dataset"),
            train=build(TrainConfig, "train"),
            methods=tuple(payload.get("methods", ("dmp", "gnn"))),
        )
        cfg.validate()
        return cfg

    @staticmethod
    def from_file(path: str | Path) -> ExperimentConfig:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return ExperimentConfig.from_dict(payload)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = list(self.methods)
        out["schema_version"] = SCHEMA_VERSION
        return out


def config_hash(cfg: ExperimentConfig | dict) -> str:
    """Short digest identifying the experiment.

    The output directory is excluded: it locates artifacts but does not
    change what is computed, and reruns into different directories must
    still produce byte-identical artifact contents.
    """
    payload = cfg.to_dict() if isinstance(cfg, ExperimentConfig) else dict(cfg)
    payload.pop("output_dir", None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

import json
from pathlib import Path

import pytest

from episource.cli import main
from episource.config import ConfigError, ExperimentConfig, config_hash


@pytest.fixture()
def toy_config(tmp_path):
    cfg = {
        "schema_version": "1",
        "seed": 42,
        "output_dir": str(tmp_path / "out"),
        "graph": {"generator": "er", "n": 20, "p": 0.25, "connected": True},
        "epidemic": {"model": "sir", "r0": 2.5, "gamma": 0.4},
        "dataset": {"n_samples": 60, "horizon": 6, "stem": "toy"},
        "train": {"epochs": 6, "batch_size": 16, "hidden": 16, "layers": 2,
                  "dropout": 0.1, "initial_lr": 0.01},
        "methods": ["dmp", "gnn"],
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path, Path(cfg["output_dir"])


def run(args):
    return main([str(a) for a in args])


class TestParsing:
    def test_version_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["--version"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "config schema" in out and "checkpoint" in out

    def test_unknown_subcommand_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run(["frobnicate"])
        assert exc.value.code == 2

    def test_unknown_flag_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run(["bounds", "--does-not-exist", "1"])
        assert exc.value.code == 2

    def test_bad_config_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"graph": {"generator": "penrose"}}))
        code = run(["simulate", "--config", bad])
        assert code == 3

    def test_missing_manifest_runtime_error(self, toy_config):
        cfg, _ = toy_config
        code = run(["train", "--config", cfg, "--manifest", "/nonexistent.json"])
        assert code == 4


class TestConfig:
    def test_field_level_messages(self):
        with pytest.raises(ConfigError, match="epidemic"):
            ExperimentConfig.from_dict({
                "graph": {"generator": "er", "n": 5, "p": 0.5},
                "epidemic": {"model": "sir", "r0": 2.0, "beta": 0.1, "gamma": 0.2},
            })
        with pytest.raises(ConfigError, match="unknown field"):
            ExperimentConfig.from_dict({"graph": {"generator": "er", "n": 5,
                                                  "p": 0.5, "bogus": 1}})

    def test_hash_stability(self):
        a = ExperimentConfig.from_dict({"seed": 1,
                                        "graph": {"generator": "er", "n": 9, "p": 0.5}})
        b = ExperimentConfig.from_dict({"graph": {"generator": "er", "p": 0.5, "n": 9},
                                        "seed": 1})
        assert config_hash(a) == config_hash(b)
        c = ExperimentConfig.from_dict({"seed": 2,
                                        "graph": {"generator": "er", "n": 9, "p": 0.5}})
        assert config_hash(a) != config_hash(c)


class TestPipeline:
    def test_full_toy_pipeline(self, toy_config):
        cfg, out = toy_config
        assert run(["simulate", "--config", cfg]) == 0
        manifest = out / "toy.manifest.json"
        assert manifest.exists()

        assert run(["train", "--config", cfg, "--manifest", manifest]) == 0
        ckpt = out / "model.ckpt"
        assert ckpt.exists() and (out / "model.log.csv").exists()

        assert run(["infer-dmp", "--config", cfg, "--manifest", manifest,
                    "--out", out / "scores.dmp.jsonl"]) == 0
        assert run(["infer-gnn", "--config", cfg, "--manifest", manifest,
                    "--checkpoint", ckpt, "--out", out / "scores.gnn.jsonl"]) == 0
        assert run(["infer-baseline", "--config", cfg, "--manifest", manifest,
                    "--method", "distance", "--out", out / "scores.distance.jsonl"]) == 0

        assert run(["evaluate", "--config", cfg, "--manifest", manifest,
                    "--scores", out / "scores.dmp.jsonl", out / "scores.gnn.jsonl",
                    out / "scores.distance.jsonl", "--bucket-width", "2"]) == 0
        for method in ("dmp", "gnn", "distance"):
            csv = out / f"metrics.{method}.csv"
            assert csv.exists()
            lines = csv.read_text().splitlines()
            assert lines[0].startswith("# config=")
            assert len(lines) >= 3  # header comment, column row, >=1 bucket
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["methods"]) == {"dmp", "gnn", "distance"}

        assert run(["bench", "--config", cfg, "--manifest", manifest,
                    "--checkpoint", ckpt, "--samples", "4",
                    "--out", out / "bench.json"]) == 0
        bench = json.loads((out / "bench.json").read_text())
        assert {"gnn_s", "dmp_s", "speedup"} <= set(bench)

    def test_generate_graph(self, toy_config, tmp_path):
        cfg, _ = toy_config
        out = tmp_path / "g.json"
        assert run(["generate-graph", "--config", cfg, "--out", out]) == 0
        payload = json.loads(out.read_text())
        assert payload["n"] == 20
        assert payload["meta"]["config_hash"]

    def test_bounds_csv(self, tmp_path):
        out = tmp_path / "bounds.csv"
        assert run(["bounds", "--n", "100", "--p", "auto", "--gamma", "0.4",
                    "--r0", "2.5,5,10", "--out", out]) == 0
        lines = out.read_text().splitlines()
        assert lines[1] == "r0,t,expected_gi,p_max"
        assert len(lines) == 2 + 3 * 61

    def test_simulate_covid_preset(self, tmp_path):
        cfg = {
            "seed": 3,
            "output_dir": str(tmp_path / "covid"),
            "graph": {"generator": "ba", "n": 30, "m": 2},
            "epidemic": {"preset": "covid"},
            "dataset": {"n_samples": 20, "horizon": 5, "stem": "cov"},
        }
        path = tmp_path / "covid.json"
        path.write_text(json.dumps(cfg))
        assert run(["simulate", "--config", path]) == 0
        manifest = json.loads((tmp_path / "covid" / "cov.manifest.json").read_text())
        params = manifest["params"]
        assert params["model"] == "covid_seir"
        assert params["lam"] == 0.073
        assert params["alpha"] == pytest.approx(0.4)
        assert params["gamma"] == pytest.approx(0.25)
        assert params["asym_fraction"] == 0.5
        assert params["asym_relative"] == 0.5


class TestDeterminism:
    def test_simulate_byte_identical(self, toy_config, tmp_path):
        cfg, out = toy_config
        assert run(["simulate", "--config", cfg]) == 0
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        assert run(["simulate", "--config", cfg]) == 0
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        assert first == second

    def test_infer_byte_identical(self, toy_config):
        cfg, out = toy_config
        run(["simulate", "--config", cfg])
        manifest = out / "toy.manifest.json"
        a, b = out / "a.jsonl", out / "b.jsonl"
        run(["infer-dmp", "--config", cfg, "--manifest", manifest, "--out", a])
        run(["infer-dmp", "--config", cfg, "--manifest", manifest, "--out", b])
        assert a.read_bytes() == b.read_bytes()

    def test_train_byte_identical(self, toy_config):
        cfg, out = toy_config
        run(["simulate", "--config", cfg])
        manifest = out / "toy.manifest.json"
        run(["train", "--config", cfg, "--manifest", manifest,
             "--checkpoint-name", "m1.ckpt"])
        run(["train", "--config", cfg, "--manifest", manifest,
             "--checkpoint-name", "m2.ckpt"])
        assert (out / "m1.ckpt").read_bytes() == (out / "m2.ckpt").read_bytes()


class TestThreads:
    def test_threaded_infer_matches_single(self, toy_config):
        cfg, out = toy_config
        run(["simulate", "--config", cfg])
        manifest = out / "toy.manifest.json"
        a, b = out / "t1.jsonl", out / "t4.jsonl"
        assert run(["infer-dmp", "--config", cfg, "--manifest", manifest,
                    "--out", a, "--threads", "1"]) == 0
        assert run(["infer-dmp", "--config", cfg, "--manifest", manifest,
                    "--out", b, "--threads", "4"]) == 0
        # per-sample seeds are deterministic and results keep dataset
        # order, so the pooled run is byte-identical too
        assert a.read_bytes() == b.read_bytes()


class TestEvaluateCoverage:
    def test_missing_outputs_rejected(self, toy_config, capsys):
        cfg, out = toy_config
        run(["simulate", "--config", cfg])
        manifest = out / "toy.manifest.json"
        scores = out / "scores.jsonl"
        run(["infer-dmp", "--config", cfg, "--manifest", manifest, "--out", scores])
        # drop one row: evaluate must refuse and list the gap
        lines = scores.read_text().splitlines()
        scores.write_text("\n".join(lines[:-1]) + "\n")
        code = run(["evaluate", "--config", cfg, "--manifest", manifest,
                    "--scores", scores])
        assert code == 4
        assert "missing outputs" in capsys.readouterr().err

    def test_limited_run_is_self_consistent(self, toy_config):
        cfg, out = toy_config
        run(["simulate", "--config", cfg])
        manifest = out / "toy.manifest.json"
        scores = out / "scores.jsonl"
        run(["infer-dmp", "--config", cfg, "--manifest", manifest,
             "--out", scores, "--limit", "3"])
        assert run(["evaluate", "--config", cfg, "--manifest", manifest,
                    "--scores", scores]) == 0

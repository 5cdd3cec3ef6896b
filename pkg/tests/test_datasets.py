import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from episource.datasets import (
    decode_states,
    encode_states,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from episource.dynamics import EpidemicParams
from episource.graphs import generate_ba, generate_er


@pytest.fixture(scope="module")
def toy_dataset():
    g = generate_er(20, 0.25, seed=1, require_connected=True)
    params = EpidemicParams.sir(beta=0.3, gamma=0.3)
    return generate_dataset(g, params, n_samples=200, T=6, seed=42)


class TestRunLengthEncoding:
    def test_basic(self):
        states = np.array([0, 0, 2, 4], dtype=np.int8)
        assert encode_states(states) == "S2I1R1"
        assert np.array_equal(decode_states("S2I1R1", 4), states)

    def test_malformed(self):
        with pytest.raises(ValueError):
            decode_states("S2X1", 3)
        with pytest.raises(ValueError):
            decode_states("S2", 3)

    @given(st.lists(st.sampled_from([0, 1, 2, 3, 4]), min_size=1, max_size=200))
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, values):
        states = np.array(values, dtype=np.int8)
        assert np.array_equal(decode_states(encode_states(states), states.size), states)


class TestGeneration:
    def test_split_sizes(self, toy_dataset):
        ds = toy_dataset
        assert len(ds.splits["train"]) == 160
        assert len(ds.splits["val"]) == 20
        assert len(ds.splits["test"]) == 20
        all_ids = sorted(ds.splits["train"] + ds.splits["val"] + ds.splits["test"])
        assert all_ids == list(range(200))

    def test_observation_times_in_range(self, toy_dataset):
        ts = [s.t for s in toy_dataset.snapshots]
        assert min(ts) >= 1 and max(ts) <= 6

    def test_deterministic(self):
        g = generate_ba(15, 1, seed=2)
        params = EpidemicParams.sir(beta=0.4, gamma=0.2)
        a = generate_dataset(g, params, n_samples=50, T=4, seed=9)
        b = generate_dataset(g, params, n_samples=50, T=4, seed=9)
        assert all(np.array_equal(x.states, y.states)
                   for x, y in zip(a.snapshots, b.snapshots))
        assert a.splits == b.splits

    def test_source_and_time_uniformity(self):
        # chi-square at the 1% level over many cheap samples
        g = generate_er(5, 0.9, seed=3)
        params = EpidemicParams.sir(beta=0.2, gamma=0.2)
        ds = generate_dataset(g, params, n_samples=50_000, T=4, seed=17)
        sources = np.array([s.source for s in ds.snapshots])
        counts = np.bincount(sources, minlength=5)
        assert stats.chisquare(counts).pvalue > 0.01
        times = np.array([s.t for s in ds.snapshots])
        t_counts = np.bincount(times, minlength=5)[1:]
        assert stats.chisquare(t_counts).pvalue > 0.01

    def test_multi_graph_datasets(self):
        graphs = [generate_er(12, 0.4, seed=s) for s in (1, 2)]
        params = EpidemicParams.sir(beta=0.3, gamma=0.3)
        ds = generate_dataset(graphs, params, n_samples=60, T=3, seed=5)
        gids = {s.graph_id for s in ds.snapshots}
        assert gids == {"g0", "g1"}


class TestOnDisk:
    def test_round_trip(self, toy_dataset, tmp_path):
        write_dataset(toy_dataset, tmp_path, config_hash="abc", stem="ds")
        back = read_dataset(tmp_path / "ds.manifest.json")
        assert back.T == toy_dataset.T
        assert back.params == toy_dataset.params
        assert back.splits == toy_dataset.splits
        assert len(back.snapshots) == len(toy_dataset.snapshots)
        for a, b in zip(back.snapshots, toy_dataset.snapshots):
            assert np.array_equal(a.states, b.states)
            assert (a.t, a.source, a.seed, a.graph_id) == (b.t, b.source, b.seed, b.graph_id)

    def test_byte_identical_rewrite(self, toy_dataset, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        write_dataset(toy_dataset, d1, config_hash="h", stem="ds")
        write_dataset(toy_dataset, d2, config_hash="h", stem="ds")
        for name in ("ds.jsonl", "ds.manifest.json", "ds.g0.json"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_version_check(self, toy_dataset, tmp_path):
        write_dataset(toy_dataset, tmp_path, stem="ds")
        manifest = tmp_path / "ds.manifest.json"
        manifest.write_text(manifest.read_text().replace('"format_version":"1"',
                                                         '"format_version":"99"'))
        with pytest.raises(ValueError, match="version"):
            read_dataset(manifest)


def test_threaded_generation_matches_single():
    g = generate_er(15, 0.3, seed=4)
    params = EpidemicParams.sir(beta=0.3, gamma=0.3)
    a = generate_dataset(g, params, n_samples=60, T=4, seed=9, threads=1)
    b = generate_dataset(g, params, n_samples=60, T=4, seed=9, threads=4)
    assert all(np.array_equal(x.states, y.states)
               for x, y in zip(a.snapshots, b.snapshots))
    assert a.splits == b.splits

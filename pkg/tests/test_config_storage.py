import numpy as np
import pytest

from wavefocus.config import ConfigError, ExperimentConfig, config_from_dict, load_config
from wavefocus.storage import csv_config_hash, read_csv, read_node_dump, write_csv, write_node_dump

BASIC = {
    "horizon_diam": 2.5,
    "medium": {"lengths": [1.0], "nodes": [51], "speed": {"kind": "sine", "mean": 1.0, "amplitude": 0.2}},
    "cutoff": {"alphas": [0.1, 0.01]},
}


def test_defaults_are_valid():
    config = config_from_dict({})
    assert config == ExperimentConfig()


def test_round_trip_through_toml(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(
        'horizon_diam = 2.5\n[medium]\nlengths = [1.0]\nnodes = [51]\n'
        'speed = { kind = "sine", mean = 1.0, amplitude = 0.2 }\n[cutoff]\nalphas = [0.1, 0.01]\n'
    )
    assert load_config(path) == config_from_dict(BASIC)


def test_unknown_keys_all_listed():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"bogus": 1, "medium": {"nodez": [3]}, "cutoff": {"alphas": [0.1]}})
    text = "\n".join(err.value.errors)
    assert "bogus: unknown key" in text and "medium.nodez: unknown key" in text


def test_validation_errors_listed_exhaustively():
    with pytest.raises(ConfigError) as err:
        config_from_dict(
            {"horizon_diam": 1.5, "cfl": 2.0, "oracle": "dense", "cutoff": {"alphas": [0.01, 0.1]}, "extra": 0}
        )
    text = "\n".join(err.value.errors)
    for fragment in ("horizon_diam", "cfl", "oracle", "cutoff.alphas", "extra"):
        assert fragment in text


def test_type_errors_reported():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"seed": "zero", "medium": {"nodes": 5}})
    assert len(err.value.errors) == 2


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_hash_tracks_content():
    a = config_from_dict(BASIC)
    assert a.config_hash() == config_from_dict(BASIC).config_hash()
    assert a.config_hash() != a.replace(seed=1).config_hash()


def test_csv_header_and_round_trip(tmp_path):
    path = write_csv(tmp_path / "r.csv", ("a", "b", "flag"), [(0.1, 3, True), (np.pi, -1, False)], "abc123")
    meta, rows = read_csv(path)
    assert meta == {"schema": "1", "config_hash": "abc123"}
    assert float(rows[1]["a"]) == np.pi and rows[0]["flag"] == "1"
    assert csv_config_hash(path) == "abc123"
    assert csv_config_hash(tmp_path / "none.csv") is None


def test_node_dump_round_trip(tmp_path):
    pts = np.random.default_rng(0).random((12, 2))
    values = np.random.default_rng(1).standard_normal(12)
    path = write_node_dump(tmp_path / "u.txt", pts, values, shape=(3, 4), spacing=(0.5, 1 / 3), label="u")
    meta, table = read_node_dump(path)
    assert meta["m"] == "2" and meta["nodes"] == "3,4" and meta["columns"] == "x0,x1,u"
    assert np.array_equal(table[:, :2], pts) and np.array_equal(table[:, 2], values)


def test_writes_are_atomic(tmp_path):
    write_csv(tmp_path / "r.csv", ("a",), [(1,)], "h")
    assert [p.name for p in tmp_path.iterdir()] == ["r.csv"]

import json

import pytest

from skillnet.config import ConfigError, load_config, with_seed


def base_config():
    return {
        "master_seed": 3,
        "net": {"m": 9, "p": 4, "n": 1, "o": 4, "h": 8},
        "tasks": [
            {"task_id": "a", "goal_index": 0,
             "maze": {"width": 3, "height": 3, "start": [0, 0], "goal_cell": [2, 2]}},
        ],
        "budgets": {"c0": 1000, "lambda": 0.1},
        "paths": {"trace_file": "t.jsonl", "metrics_file": "m.jsonl",
                  "checkpoint_dir": "ckpt"},
    }


def write(tmp_path, config):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


def test_minimal_config_parses_with_defaults(tmp_path):
    config = load_config(write(tmp_path, base_config()))
    assert config.master_seed == 3
    assert config.net.hidden_dim == 8
    assert config.net.seed == 3  # defaults to master_seed
    assert config.es.population == 8
    assert config.budgets.unit == "env_steps"
    assert config.replay.mode == "relevant_only"
    assert config.paths.trace_file == tmp_path / "t.jsonl"


def expect_error(tmp_path, config, fieldpath):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, config))
    assert fieldpath in str(exc.value)


def test_missing_sections_named(tmp_path):
    for key in ("master_seed", "net", "budgets", "paths"):
        config = base_config()
        del config[key]
        expect_error(tmp_path, config, key)


def test_missing_net_field_named(tmp_path):
    for key in ("m", "p", "n", "o", "h"):
        config = base_config()
        del config["net"][key]
        expect_error(tmp_path, config, f"net.{key}")


def test_maze_size_must_match_obs_width(tmp_path):
    config = base_config()
    config["net"]["m"] = 10
    expect_error(tmp_path, config, "maze")


def test_goal_index_must_fit_goal_width(tmp_path):
    config = base_config()
    config["tasks"][0]["goal_index"] = 9
    expect_error(tmp_path, config, "goal_index")


def test_duplicate_goal_indices_rejected(tmp_path):
    config = base_config()
    config["tasks"].append({
        "task_id": "b", "goal_index": 0,
        "maze": {"width": 3, "height": 3, "start": [0, 0], "goal_cell": [0, 2]},
    })
    expect_error(tmp_path, config, "tasks")


def test_bad_replay_mode_rejected(tmp_path):
    config = base_config()
    config["consolidation"] = {"replay": {"mode": "bogus"}}
    expect_error(tmp_path, config, "consolidation.replay.mode")


def test_bad_budget_unit_rejected(tmp_path):
    config = base_config()
    config["budgets"]["unit"] = "parsecs"
    expect_error(tmp_path, config, "budgets.unit")


def test_non_positive_budgets_rejected(tmp_path):
    config = base_config()
    config["budgets"]["c0"] = 0
    expect_error(tmp_path, config, "budgets.c0")
    config = base_config()
    config["budgets"]["lambda"] = -1
    expect_error(tmp_path, config, "budgets.lambda")


def test_invalid_json_reported(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(path)


def test_missing_file_reported(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.json")


def test_type_errors_named(tmp_path):
    config = base_config()
    config["net"]["h"] = "eight"
    expect_error(tmp_path, config, "net.h")
    config = base_config()
    config["tasks"][0]["maze"]["start"] = [0]
    expect_error(tmp_path, config, "start")


def test_with_seed_overrides_master_and_net_seed(tmp_path):
    config = load_config(write(tmp_path, base_config()))
    reseeded = with_seed(config, 42)
    assert reseeded.master_seed == 42
    assert reseeded.net.seed == 42
    assert config.master_seed == 3  # original untouched

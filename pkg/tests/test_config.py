import json

import numpy as np
import pytest

from slatecollect.config import ConfigError, config_digest, file_digest, load_config, parse_config


def base(**overrides):
    cfg = {
        "schema_version": 1,
        "experiment_id": "t",
        "seed": 3,
        "horizon": 50,
        "environment": {"n_items": 8, "ctr": {"kind": "beta", "alpha": 1, "beta": 24}},
        "strategies": [{"kind": "ts_collection_exact", "n": 2, "prior": {"avg_ctr": 0.04, "strength": 100}}],
    }
    cfg.update(overrides)
    return cfg


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return path


def test_minimal_defaults():
    cfg = parse_config(base())
    assert cfg.replicates == 1 and cfg.horizon == 50
    s = cfg.strategies[0]
    assert s.prior.alpha == pytest.approx(4) and s.prior.beta == pytest.approx(96)
    env = cfg.environment.build(cfg.seed)
    assert env.n_items == 8 and np.all(env.arrival_round == 0)


def test_environment_seed_defaults_to_config_seed():
    a = parse_config(base()).environment.build(3)
    b = parse_config(base(environment={"n_items": 8, "seed": 3})).environment.build(99)
    np.testing.assert_array_equal(a.true_ctr, b.true_ctr)


def test_explicit_environment():
    env_raw = {
        "n_items": 3,
        "ctr": {"kind": "fixed", "values": [0.1, 0.2, 0.3]},
        "arrivals": {"kind": "explicit", "rounds": [0, 0, 4]},
    }
    env = parse_config(base(environment=env_raw)).environment.build(0)
    np.testing.assert_array_equal(env.true_ctr, [0.1, 0.2, 0.3])
    np.testing.assert_array_equal(env.arrival_round, [0, 0, 4])


def test_staircase_environment():
    env_raw = {"n_items": 30, "arrivals": {"kind": "staircase", "batch": 10, "every": 100}}
    env = parse_config(base(environment=env_raw)).environment.build(0)
    assert env.arrival_round.max() == 200


@pytest.mark.parametrize(
    "overrides,field",
    [
        ({"schema_version": 2}, "schema_version"),
        ({"horizon": 0}, "horizon"),
        ({"horizon": -5}, "horizon"),
        ({"strategies": [{"kind": "softmax"}]}, "strategies[0].kind"),
        ({"strategies": [{"kind": "greedy_topn", "n": 9}]}, "strategies[0].n"),
        ({"strategies": []}, "strategies"),
        ({"windows": [0.0]}, "windows"),
        ({"strategies": [{"kind": "greedy_topn"}, {"kind": "greedy_topn"}]}, "strategies"),
        ({"strategies": [{"kind": "greedy_topn", "prior": {"alpha": 0, "beta": 1}}]}, "strategies[0].prior"),
    ],
)
def test_rejections_name_the_field(overrides, field):
    with pytest.raises(ConfigError) as info:
        parse_config(base(**overrides))
    assert info.value.field.startswith(field)
    assert field in str(info.value)


def test_slate_larger_than_initial_pool():
    env_raw = {"n_items": 20, "arrivals": {"kind": "staircase", "batch": 5, "every": 10}}
    with pytest.raises(ConfigError, match="round 0"):
        parse_config(base(environment=env_raw, strategies=[{"kind": "greedy_topn", "n": 6}]))


def test_line_numbers(tmp_path):
    cfg = base(strategies=[{"kind": "greedy_topn", "n": 1}, {"kind": "greedy_topn", "n": 99, "name": "big"}])
    path = write(tmp_path, cfg)
    with pytest.raises(ConfigError) as info:
        load_config(path)
    lines = path.read_text().splitlines()
    assert '"n": 99' in lines[info.value.line - 1]
    assert str(info.value).startswith(f"{path}:{info.value.line}: strategies[1].n")


def test_malformed_json_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "schema_version": 1,\n  "horizon": ,\n}')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.line == 3


def test_digest_is_canonical(tmp_path):
    cfg = base()
    compact = tmp_path / "a.json"
    compact.write_text(json.dumps(cfg, separators=(",", ":")))
    pretty = write(tmp_path, dict(reversed(list(cfg.items()))), "b.json")
    assert file_digest(compact) == file_digest(pretty) == config_digest(cfg)
    assert load_config(pretty).digest == config_digest(cfg)


def test_seed_override():
    cfg = parse_config(base()).with_seed(11)
    assert cfg.seed == 11 and cfg.raw["seed"] == 11


def test_output_dir_precedence(monkeypatch):
    monkeypatch.delenv("SLATECOLLECT_OUT", raising=False)
    cfg = parse_config(base())
    assert str(cfg.resolve_output_dir()) == "results"
    monkeypatch.setenv("SLATECOLLECT_OUT", "/tmp/env-out")
    assert str(cfg.resolve_output_dir()) == "/tmp/env-out"
    assert str(parse_config(base(output_dir="cfg-out")).resolve_output_dir()) == "cfg-out"
    assert str(parse_config(base(output_dir="cfg-out")).resolve_output_dir("flag")) == "flag"

import json
import re
import subprocess
import sys

import numpy as np
import pytest

from slatecollect.cli import main
from slatecollect.config import file_digest
from slatecollect.env import make_environment
from slatecollect.evaluation import collect_stochastic_log
from slatecollect.logs import LogDataset, LogMetadata, read_log, write_log
from slatecollect.metrics import cold_start_curve

ERROR_LINE = re.compile(r"^error\[E_[A-Z_]+\]: \S.*$")


def config(**overrides):
    cfg = {
        "schema_version": 1,
        "experiment_id": "cli-test",
        "seed": 1,
        "horizon": 100,
        "environment": {"n_items": 5, "ctr": {"kind": "fixed", "values": [0.3, 0.2, 0.1, 0.05, 0.02]}},
        "strategies": [{"kind": "ts_collection_exact", "n": 2, "prior": {"avg_ctr": 0.1, "strength": 10}}],
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return path


def run_cli(args, capsys):
    status = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return status, out, err


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestRun:
    def test_minimal(self, tmp_path, capsys):
        cfg = write_config(tmp_path, config())
        status, out, err = run_cli(["run", "--config", cfg, "--out", tmp_path / "out"], capsys)
        assert status == 0 and err == ""
        logs = sorted((tmp_path / "out" / "logs").glob("*.jsonl"))
        assert len(logs) == 1
        assert (tmp_path / "out" / "report.txt").exists()
        assert "View Distribution" in out
        assert len(read_log(logs[0])) == 100

    def test_slate_larger_than_pool(self, tmp_path, capsys):
        cfg = config(strategies=[{"kind": "greedy_topn", "n": 6}])
        status, _, err = run_cli(["run", "--config", write_config(tmp_path, cfg), "--out", tmp_path / "o"], capsys)
        assert status == 2
        assert len(err.strip().splitlines()) == 1 and ERROR_LINE.match(err.strip())
        assert "E_CONFIG" in err and "strategies[0].n" in err

    def test_invalid_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{\n  \"horizon\": 10,,\n}\n")
        status, _, err = run_cli(["run", "--config", path], capsys)
        assert status == 2 and f"{path}:2:" in err

    def test_missing_config(self, tmp_path, capsys):
        status, _, err = run_cli(["run", "--config", tmp_path / "nope.json"], capsys)
        assert status == 2 and ERROR_LINE.match(err.strip())

    def test_rerun_byte_identical(self, tmp_path, capsys):
        cfg = write_config(tmp_path, config(replicates=2, strategies=[
            {"kind": "ts_collection_exact", "n": 2},
            {"kind": "uniform_random", "n": 2},
        ]))
        run_cli(["run", "--config", cfg, "--out", tmp_path / "a"], capsys)
        run_cli(["run", "--config", cfg, "--out", tmp_path / "b"], capsys)
        a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
        assert a.keys() == b.keys()
        assert any(k.endswith(".png") for k in a)
        assert a == b

    def test_seed_flag_changes_logs(self, tmp_path, capsys):
        cfg = write_config(tmp_path, config())
        run_cli(["run", "--config", cfg, "--out", tmp_path / "a", "--no-figures"], capsys)
        run_cli(["run", "--config", cfg, "--out", tmp_path / "b", "--no-figures", "--seed", 99], capsys)
        name = "logs/ts_collection_exact__r0.jsonl"
        assert tree_bytes(tmp_path / "a")[name] != tree_bytes(tmp_path / "b")[name]
        assert json.loads((tmp_path / "b" / "config.json").read_text())["seed"] == 99

    def test_output_dir_from_environment(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("SLATECOLLECT_OUT", str(tmp_path / "from-env"))
        status, _, _ = run_cli(["run", "--config", write_config(tmp_path, config()), "--no-figures"], capsys)
        assert status == 0 and (tmp_path / "from-env" / "report.txt").exists()

    def test_digest_revalidates(self, tmp_path, capsys):
        cfg = write_config(tmp_path, config())
        run_cli(["run", "--config", cfg, "--out", tmp_path / "o", "--no-figures"], capsys)
        meta = read_log(tmp_path / "o" / "logs" / "ts_collection_exact__r0.jsonl").metadata
        assert meta.config_digest == file_digest(cfg)
        assert meta.config_digest == file_digest(tmp_path / "o" / "config.json")
        assert meta.extra["propensities_exact"] is True

    def test_console_script(self, tmp_path):
        cfg = write_config(tmp_path, config(horizon=20))
        proc = subprocess.run(
            [sys.executable, "-m", "slatecollect.cli", "run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--no-figures"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr


@pytest.fixture
def uniform_log(tmp_path):
    env = make_environment(5, ctr=(0.10, 0.08, 0.06, 0.04, 0.02))
    d = collect_stochastic_log(env, [0.2] * 5, 100_000, np.random.default_rng(31))
    d.metadata = LogMetadata("oracle", 31, "", {"propensities_exact": True})
    return write_log(d, tmp_path / "uniform.jsonl")


class TestEval:
    def test_fixed_item_oracle(self, uniform_log, capsys):
        status, out, _ = run_cli(["eval", "--log", uniform_log, "--policy", "fixed:0"], capsys)
        assert status == 0
        res = json.loads(out)
        assert abs(res["estimate"] - 0.10) <= 3 * res["std_error"]
        assert res["heuristic"] is False and res["record_count"] == 100_000
        assert "warning" not in res

    def test_both_estimators_agree_on_single_slots(self, uniform_log, capsys):
        _, a, _ = run_cli(["eval", "--log", uniform_log, "--policy", "fixed:2", "--estimator", "ips"], capsys)
        _, b, _ = run_cli(["eval", "--log", uniform_log, "--policy", "fixed:2", "--estimator", "per-slot"], capsys)
        a, b = json.loads(a), json.loads(b)
        for key in ("estimate", "std_error", "matched_count", "record_count", "raw_sum"):
            assert a[key] == b[key]

    def test_other_policies(self, uniform_log, tmp_path, capsys):
        mapping = tmp_path / "map.json"
        mapping.write_text(json.dumps({"0": 1}))
        for spec in ("best-empirical", "uniform", f"mapping:{mapping}"):
            status, out, err = run_cli(["eval", "--log", uniform_log, "--policy", spec], capsys)
            assert status == 0, err
            assert json.loads(out)["record_count"] == 100_000

    def test_empty_log(self, tmp_path, capsys):
        path = write_log(LogDataset(), tmp_path / "empty.jsonl")
        status, _, err = run_cli(["eval", "--log", path, "--policy", "fixed:0"], capsys)
        assert status == 3 and "E_DATA" in err

    def test_zero_propensity(self, tmp_path, capsys):
        path = tmp_path / "det.jsonl"
        path.write_text('{"t":0,"ctx":0,"items":[1],"props":[0.0],"rewards":[1]}\n')
        status, _, err = run_cli(["eval", "--log", path, "--policy", "fixed:1"], capsys)
        assert status == 3
        assert err.startswith("error[E_ZERO_PROPENSITY]") and "stochastic" in err
        assert len(err.strip().splitlines()) == 1

    def test_missing_log(self, tmp_path, capsys):
        status, _, err = run_cli(["eval", "--log", tmp_path / "none.jsonl"], capsys)
        assert status == 3 and ERROR_LINE.match(err.strip())

    def test_bad_policy_spec(self, uniform_log, capsys):
        status, _, err = run_cli(["eval", "--log", uniform_log, "--policy", "nonsense"], capsys)
        assert status == 2 and "E_CONFIG" in err

    def test_slate_log_flags_heuristic(self, tmp_path, capsys):
        cfg = write_config(tmp_path, config(strategies=[
            {"kind": "uniform_random", "n": 2},
            {"kind": "greedy_topn", "n": 2},
        ]))
        run_cli(["run", "--config", cfg, "--out", tmp_path / "o", "--no-figures"], capsys)
        _, out, _ = run_cli(["eval", "--log", tmp_path / "o" / "logs" / "uniform_random__r0.jsonl", "--policy", "slate:0,1"], capsys)
        res = json.loads(out)
        assert res["heuristic"] is True and res["estimator"] == "per-slot" and "note" in res
        assert "warning" not in res
        _, out, _ = run_cli(["eval", "--log", tmp_path / "o" / "logs" / "greedy_topn__r0.jsonl", "--policy", "slate:0,1"], capsys)
        assert "warning" in json.loads(out)


class TestReport:
    @pytest.fixture
    def result_dir(self, tmp_path, capsys):
        cfg = write_config(tmp_path, config(
            horizon=400,
            replicates=2,
            environment={"n_items": 12, "arrivals": {"kind": "staircase", "batch": 4, "every": 100}},
            strategies=[{"kind": "ts_collection_exact", "n": 3}, {"kind": "greedy_topn", "n": 3}],
        ))
        run_cli(["run", "--config", cfg, "--out", tmp_path / "res"], capsys)
        return tmp_path / "res"

    def test_two_rows_per_metric(self, result_dir, capsys):
        status, out, _ = run_cli(["report", result_dir], capsys)
        assert status == 0
        for title in ("View Distribution", "Click Distribution", "CTR Distribution", "Item Cold-Start Distribution"):
            assert sum(line.startswith(title) for line in out.splitlines()) == 2

    def test_report_is_pure(self, result_dir, capsys):
        before = tree_bytes(result_dir)
        run_cli(["report", result_dir], capsys)
        assert tree_bytes(result_dir) == before

    def test_cold_start_matches_metrics(self, result_dir):
        report = json.loads((result_dir / "report.json").read_text())
        env = json.loads((result_dir / "environment.json").read_text())
        arrival = np.array(env["arrival_round"])
        for entry in report["strategies"]:
            curves = []
            for rep in range(2):
                d = read_log(result_dir / "logs" / f"{entry['strategy']}__r{rep}.jsonl")
                first = {}
                for rec in d:
                    for item in rec.chosen_items:
                        first.setdefault(item, rec.round)
                fi = [first.get(i) for i in range(arrival.size)]
                curves.append(cold_start_curve(fi, arrival.tolist(), 400))
            for w, stats in entry["cold_start"].items():
                assert stats["mean"] == np.mean([c[float(w)] for c in curves])

    def test_plot_data_and_figures(self, result_dir):
        for name in ("exposure", "cold_start", "cumulative_clicks"):
            lines = (result_dir / "data" / f"{name}.tsv").read_text().splitlines()
            assert len(lines) > 1 and all(len(l.split("\t")) == len(lines[0].split("\t")) for l in lines)
        for name in ("view_distribution", "cold_start", "cumulative_clicks"):
            assert (result_dir / "figures" / f"{name}.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_missing_outputs(self, tmp_path, capsys):
        status, _, err = run_cli(["report", tmp_path / "nothing"], capsys)
        assert status == 3 and ERROR_LINE.match(err.strip())

    def test_missing_log(self, result_dir, capsys):
        (result_dir / "logs" / "greedy_topn__r1.jsonl").unlink()
        status, _, err = run_cli(["report", result_dir], capsys)
        assert status == 3 and "greedy_topn__r1" in err

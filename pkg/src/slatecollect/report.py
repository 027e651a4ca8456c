"""Comparison reports built from a run's result directory.

A result directory written by ``slatecollect run`` looks like::

    config.json              effective configuration
    environment.json         true CTRs and arrival rounds
    logs/<label>__r<k>.jsonl per-run interaction log (+ .meta.json)
    report.txt, report.json  comparison tables
    data/*.tsv               columnar plot data
    figures/*.png            rendered figures

Everything under ``report.*``, ``data/`` and ``figures/`` is recomputed from
the first three entries, so regenerating a report never changes it.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from . import plotting
from .config import ExperimentConfig, parse_config
from .env import Environment
from .logs import LogDataset, read_log
from .runner import STAT_FIELDS, Comparison, ExperimentResult, StrategyConfig, StrategySummary

METRIC_TITLES = {
    "views": "View Distribution",
    "clicks": "Click Distribution",
    "ctr": "CTR Distribution",
    "cold_start_latency": "Item Cold-Start Distribution",
}


class MissingResultsError(FileNotFoundError):
    pass


def log_name(label: str, replicate: int) -> str:
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in label)
    return f"{safe}__r{replicate}.jsonl"


def result_from_log(
    dataset: LogDataset, env: Environment, strategy: StrategyConfig, horizon: int, replicate: int = 0
) -> ExperimentResult:
    """Rebuild the per-item tallies of a run from its log alone."""
    k = env.n_items
    views = np.zeros(k, dtype=np.int64)
    clicks = np.zeros(k, dtype=np.int64)
    first = np.full(k, -1, dtype=np.int64)
    clicks_per_round = np.zeros(horizon, dtype=np.int64)
    for rec in dataset:
        for item, r in zip(rec.chosen_items, rec.rewards):
            views[item] += 1
            clicks[item] += r
            if first[item] < 0:
                first[item] = rec.round
        if rec.round < horizon:
            clicks_per_round[rec.round] = sum(rec.rewards)
    return ExperimentResult(
        strategy, horizon, replicate, views, clicks, first, env.arrival_round.copy(), clicks_per_round, log=dataset
    )


def load_results(result_dir: str | Path) -> tuple[ExperimentConfig, Environment, Comparison]:
    result_dir = Path(result_dir)
    cfg_path = result_dir / "config.json"
    env_path = result_dir / "environment.json"
    for p in (cfg_path, env_path):
        if not p.exists():
            raise MissingResultsError(f"missing {p}")
    config = parse_config(json.loads(cfg_path.read_text(encoding="utf-8")))
    env = Environment.from_dict(json.loads(env_path.read_text(encoding="utf-8")))
    summaries = []
    for strategy in config.strategies:
        results = []
        for r in range(config.replicates):
            path = result_dir / "logs" / log_name(strategy.label, r)
            if not path.exists():
                raise MissingResultsError(f"missing log {path}")
            results.append(result_from_log(read_log(path), env, strategy, config.horizon, r))
        summaries.append(StrategySummary(strategy.label, results, config.windows))
    return config, env, Comparison(config.horizon, summaries)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _fmt(values: np.ndarray, digits: int = 2) -> str:
    v = values[~np.isnan(values)]
    if v.size == 0:
        return "undefined"
    if v.size == 1:
        return f"{v[0]:.{digits}f}"
    return f"{v.mean():.{digits}f} ± {v.std(ddof=1):.{digits}f}"


def _table(rows: Sequence[Sequence[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for j, row in enumerate(rows):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return lines


def render_text(comparison: Comparison, title: str = "") -> str:
    """Table of strategy x metric x (skewness, mean, median), then cold start and clicks."""
    reps = {len(s.results) for s in comparison.summaries}
    lines = []
    if title:
        lines.append(title)
    lines.append(
        f"horizon T={comparison.horizon}; values are mean ± sd over {max(reps)} replicate(s)"
        if max(reps) > 1
        else f"horizon T={comparison.horizon}; single replicate"
    )
    lines.append("")
    rows = [["Metric", "Strategy", "Skewness", "Mean", "Median"]]
    for metric, mtitle in METRIC_TITLES.items():
        for s in comparison.summaries:
            rows.append([mtitle, s.label] + [_fmt(s.stat(metric, f), 4 if metric == "ctr" else 2) for f in STAT_FIELDS])
    lines += _table(rows)

    lines.append("")
    lines.append("Cold start: fraction of items first shown within w*T rounds of arrival")
    windows = comparison.summaries[0].windows
    rows = [["Strategy"] + [f"w={w:g}" for w in windows]]
    for s in comparison.summaries:
        curve = s.cold_start()
        rows.append([s.label] + [_fmt(curve[w], 3) for w in windows])
    lines += _table(rows)

    lines.append("")
    rows = [["Strategy", "Cumulative clicks", "Clicks per impression"]]
    for s in comparison.summaries:
        total = s.cumulative_clicks()
        shown = np.array([r.views.sum() for r in s.results], dtype=float)
        rows.append([s.label, _fmt(total, 1), _fmt(np.divide(total, shown, out=np.zeros_like(total), where=shown > 0), 4)])
    lines += _table(rows)
    return "\n".join(lines) + "\n"


def _json_ready(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_ready(v) for v in obj]
    return obj


def write_plot_data(comparison: Comparison, data_dir: Path) -> list[Path]:
    data_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    lines = ["strategy\treplicate\titem\tviews\tclicks\tfirst_impression\tarrival"]
    for s in comparison.summaries:
        for r in s.results:
            for i in range(r.views.size):
                lines.append(
                    f"{s.label}\t{r.replicate}\t{i}\t{r.views[i]}\t{r.clicks[i]}\t{r.first_impression[i]}\t{r.arrival[i]}"
                )
    paths.append(_write_lines(data_dir / "exposure.tsv", lines))

    lines = ["strategy\twindow\tmean\tstd"]
    for s in comparison.summaries:
        for w, v in s.cold_start().items():
            std = float(v.std(ddof=1)) if v.size > 1 else 0.0
            lines.append(f"{s.label}\t{w!r}\t{float(v.mean())!r}\t{std!r}")
    paths.append(_write_lines(data_dir / "cold_start.tsv", lines))

    lines = ["strategy\tround\tmean_cumulative_clicks"]
    step = max(1, comparison.horizon // 200)
    for s in comparison.summaries:
        curve = s.cumulative_click_curve()
        for t in range(step - 1, comparison.horizon, step):
            lines.append(f"{s.label}\t{t}\t{float(curve[t])!r}")
    paths.append(_write_lines(data_dir / "cumulative_clicks.tsv", lines))
    return paths


def _write_lines(path: Path, lines: list[str]) -> Path:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_report(
    comparison: Comparison, out_dir: str | Path, title: str = "", figures: bool = True
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    written["text"] = out_dir / "report.txt"
    written["text"].write_text(render_text(comparison, title), encoding="utf-8")
    written["json"] = out_dir / "report.json"
    written["json"].write_text(
        json.dumps(_json_ready(comparison.to_dict()), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for p in write_plot_data(comparison, out_dir / "data"):
        written[p.stem] = p
    if figures:
        for name, p in plotting.render_all(comparison, out_dir / "figures").items():
            written[f"figure:{name}"] = p
    return written


def report_from_dir(result_dir: str | Path, figures: bool = True) -> dict[str, Path]:
    config, _env, comparison = load_results(result_dir)
    return write_report(comparison, result_dir, title=f"experiment {config.experiment_id}", figures=figures)

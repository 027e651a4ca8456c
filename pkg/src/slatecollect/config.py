"""Experiment configuration files (JSON, versioned schema).

Example::

    {
      "schema_version": 1,
      "experiment_id": "table1-desk",
      "seed": 7,
      "horizon": 20000,
      "replicates": 10,
      "environment": {
        "n_items": 200,
        "ctr": {"kind": "beta", "alpha": 1, "beta": 24},
        "arrivals": {"kind": "staircase", "batch": 10, "every": 1000},
        "seed": 7
      },
      "strategies": [
        {"kind": "ts_collection_exact", "n": 10, "prior": {"avg_ctr": 0.04, "strength": 100}},
        {"kind": "greedy_topn", "n": 10, "prior": {"avg_ctr": 0.04, "strength": 100}}
      ]
    }

Validation errors carry the dotted field path and, when it can be found, the
line of the offending key in the source file.
"""

from __future__ import annotations

import hashlib
import json
import json.decoder
import json.scanner
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .bandit import BetaPrior, prior_from_ctr
from .env import Environment, all_at_zero, make_environment, staircase
from .runner import DEFAULT_WINDOWS, STRATEGY_KINDS, StrategyConfig

SCHEMA_VERSION = 1
OUTPUT_ENV_VAR = "SLATECOLLECT_OUT"
DEFAULT_OUTPUT_DIR = "results"


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None, source: str | None = None):
        self.message = message
        self.field = field
        self.line = line
        self.source = source
        super().__init__(self.location() + message)

    def location(self) -> str:
        parts = []
        if self.source:
            parts.append(self.source if self.line is None else f"{self.source}:{self.line}")
        elif self.line is not None:
            parts.append(f"line {self.line}")
        if self.field:
            parts.append(self.field)
        return "".join(p + ": " for p in parts)


# ---------------------------------------------------------------------------
# JSON with object spans, so errors can point at a line
# ---------------------------------------------------------------------------


def _parse_with_spans(text: str) -> tuple[Any, dict[int, tuple[int, int]]]:
    spans: dict[int, tuple[int, int]] = {}

    def parse_object(s_and_end, *args, **kwargs):
        start = s_and_end[1] - 1
        obj, end = json.decoder.JSONObject(s_and_end, *args, **kwargs)
        spans[id(obj)] = (start, end)
        return obj, end

    decoder = json.JSONDecoder()
    decoder.parse_object = parse_object
    decoder.scan_once = json.scanner.py_make_scanner(decoder)
    return decoder.decode(text), spans


class _Locator:
    def __init__(self, text: str, spans: dict[int, tuple[int, int]]):
        self.text = text
        self.spans = spans

    def line_of(self, obj: Any, key: str | None = None) -> int | None:
        span = self.spans.get(id(obj))
        if span is None:
            return None
        start, end = span
        pos = start
        if key is not None and isinstance(obj, dict):
            child_spans = [self.spans[id(v)] for v in obj.values() if id(v) in self.spans]
            needle = json.dumps(key)
            i = self.text.find(needle, start, end)
            while i != -1 and any(a < i < b for a, b in child_spans):
                i = self.text.find(needle, i + 1, end)
            if i != -1:
                pos = i
        return self.text.count("\n", 0, pos) + 1


# ---------------------------------------------------------------------------
# Typed config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvironmentSpec:
    n_items: int
    ctr: dict = field(default_factory=lambda: {"kind": "beta", "alpha": 1.0, "beta": 24.0})
    arrivals: dict = field(default_factory=lambda: {"kind": "all_at_zero"})
    n_contexts: int = 1
    seed: int | None = None

    def build(self, default_seed: int | None = None) -> Environment:
        seed = self.seed if self.seed is not None else default_seed
        kind = self.arrivals.get("kind", "all_at_zero")
        if kind == "all_at_zero":
            arrivals = all_at_zero(self.n_items)
        elif kind == "staircase":
            arrivals = staircase(self.n_items, int(self.arrivals["batch"]), int(self.arrivals["every"]))
        else:
            arrivals = self.arrivals["rounds"]
        if self.ctr.get("kind", "beta") == "beta":
            return make_environment(
                self.n_items,
                ctr_alpha=self.ctr.get("alpha", 1.0),
                ctr_beta=self.ctr.get("beta", 24.0),
                arrivals=arrivals,
                n_contexts=self.n_contexts,
                seed=seed,
            )
        return make_environment(
            self.n_items, ctr=self.ctr["values"], arrivals=arrivals, n_contexts=self.n_contexts, seed=seed
        )


@dataclass(frozen=True)
class ExperimentConfig:
    environment: EnvironmentSpec
    strategies: tuple[StrategyConfig, ...]
    horizon: int
    replicates: int = 1
    seed: int = 0
    experiment_id: str = "experiment"
    output_dir: str | None = None
    log_prob_vector: bool = True
    windows: tuple[float, ...] = DEFAULT_WINDOWS
    workers: int = 1
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def digest(self) -> str:
        return config_digest(self.raw)

    def resolve_output_dir(self, override: str | None = None) -> Path:
        return Path(override or self.output_dir or os.environ.get(OUTPUT_ENV_VAR) or DEFAULT_OUTPUT_DIR)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = dict(self.raw, seed=seed)
        return parse_config(raw)


def config_digest(raw: Any) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, no whitespace)."""
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_digest(path: str | Path) -> str:
    return config_digest(json.loads(Path(path).read_text(encoding="utf-8")))


def _check(cond: bool, message: str, path: str, loc: _Locator | None, obj: Any, key: str | None) -> None:
    if not cond:
        raise ConfigError(message, path, loc.line_of(obj, key) if loc else None)


def _int(obj: dict, key: str, path: str, loc, default=None, minimum: int | None = None) -> int:
    value = obj.get(key, default)
    fpath = f"{path}.{key}" if path else key
    _check(value is not None, "required field is missing", fpath, loc, obj, None)
    _check(isinstance(value, int) and not isinstance(value, bool), f"expected an integer, got {value!r}", fpath, loc, obj, key)
    if minimum is not None:
        _check(value >= minimum, f"must be >= {minimum}, got {value}", fpath, loc, obj, key)
    return value


def _num(obj: dict, key: str, path: str, loc, default=None) -> float:
    value = obj.get(key, default)
    fpath = f"{path}.{key}"
    _check(
        isinstance(value, (int, float)) and not isinstance(value, bool), f"expected a number, got {value!r}", fpath, loc, obj, key
    )
    return float(value)


def _dict(obj: dict, key: str, path: str, loc, default=None) -> dict:
    value = obj.get(key, default)
    fpath = f"{path}.{key}" if path else key
    _check(isinstance(value, dict), f"expected an object, got {type(value).__name__}", fpath, loc, obj, key)
    return value


def _parse_prior(obj: dict, path: str, loc) -> BetaPrior:
    if "prior" not in obj:
        return BetaPrior()
    prior = _dict(obj, "prior", path, loc)
    ppath = f"{path}.prior"
    try:
        if "avg_ctr" in prior:
            return prior_from_ctr(_num(prior, "avg_ctr", ppath, loc), _num(prior, "strength", ppath, loc, 100.0))
        return BetaPrior(_num(prior, "alpha", ppath, loc, 1.0), _num(prior, "beta", ppath, loc, 1.0))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), ppath, loc.line_of(prior) if loc else None) from None


def _parse_environment(raw: dict, loc) -> EnvironmentSpec:
    env = _dict(raw, "environment", "", loc)
    n_items = _int(env, "n_items", "environment", loc, minimum=1)
    ctr = _dict(env, "ctr", "environment", loc, {"kind": "beta", "alpha": 1.0, "beta": 24.0})
    kind = ctr.get("kind", "beta")
    _check(kind in ("beta", "fixed"), f"unknown ctr kind {kind!r}; expected 'beta' or 'fixed'", "environment.ctr.kind", loc, ctr, "kind")
    if kind == "beta":
        for key in ("alpha", "beta"):
            v = _num(ctr, key, "environment.ctr", loc, 1.0 if key == "alpha" else 24.0)
            _check(v > 0, f"must be positive, got {v}", f"environment.ctr.{key}", loc, ctr, key)
    else:
        values = ctr.get("values")
        if isinstance(values, (int, float)):
            values = [values] * n_items
        _check(
            isinstance(values, list) and len(values) == n_items and all(isinstance(v, (int, float)) and 0 <= v <= 1 for v in values),
            f"expected {n_items} CTRs in [0, 1] (or one scalar)",
            "environment.ctr.values", loc, ctr, "values",
        )
        ctr = dict(ctr, values=values)
    arrivals = _dict(env, "arrivals", "environment", loc, {"kind": "all_at_zero"})
    akind = arrivals.get("kind", "all_at_zero")
    _check(
        akind in ("all_at_zero", "staircase", "explicit"),
        f"unknown arrivals kind {akind!r}; expected all_at_zero, staircase or explicit",
        "environment.arrivals.kind", loc, arrivals, "kind",
    )
    if akind == "staircase":
        _int(arrivals, "batch", "environment.arrivals", loc, minimum=1)
        _int(arrivals, "every", "environment.arrivals", loc, minimum=1)
    elif akind == "explicit":
        rounds = arrivals.get("rounds")
        _check(
            isinstance(rounds, list) and len(rounds) == n_items and all(isinstance(r, int) and r >= 0 for r in rounds),
            f"expected {n_items} nonnegative integer arrival rounds",
            "environment.arrivals.rounds", loc, arrivals, "rounds",
        )
    n_contexts = _int(env, "n_contexts", "environment", loc, default=1, minimum=1)
    seed = env.get("seed")
    _check(seed is None or (isinstance(seed, int) and seed >= 0), "seed must be a nonnegative integer", "environment.seed", loc, env, "seed")
    return EnvironmentSpec(n_items, ctr, arrivals, n_contexts, seed)


def parse_config(raw: Any, text: str | None = None, spans: dict | None = None, source: str | None = None) -> ExperimentConfig:
    """Validate a decoded config object; ``text``/``spans`` enable line numbers."""
    loc = _Locator(text, spans) if text is not None and spans is not None else None
    try:
        return _parse_config(raw, loc)
    except ConfigError as exc:
        exc.source = source
        exc.args = (exc.location() + exc.message,)
        raise


def _parse_config(raw: Any, loc) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", None, 1)
    version = raw.get("schema_version")
    _check(version == SCHEMA_VERSION, f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}", "schema_version", loc, raw, "schema_version")
    horizon = _int(raw, "horizon", "", loc, minimum=1)
    replicates = _int(raw, "replicates", "", loc, default=1, minimum=1)
    seed = _int(raw, "seed", "", loc, default=0, minimum=0)
    workers = _int(raw, "workers", "", loc, default=1, minimum=1)
    env = _parse_environment(raw, loc)
    # the pool is smallest at round 0 and only grows
    built_arrivals = env.build(seed).arrival_round
    min_pool = int((built_arrivals <= 0).sum())

    strategies_raw = raw.get("strategies")
    _check(isinstance(strategies_raw, list) and strategies_raw, "expected a nonempty list of strategies", "strategies", loc, raw, "strategies")
    strategies = []
    for i, s in enumerate(strategies_raw):
        path = f"strategies[{i}]"
        _check(isinstance(s, dict), "expected an object", path, loc, raw, "strategies")
        kind = s.get("kind")
        _check(kind in STRATEGY_KINDS, f"unknown strategy kind {kind!r}; expected one of {', '.join(STRATEGY_KINDS)}", f"{path}.kind", loc, s, "kind")
        n = _int(s, "n", path, loc, default=1, minimum=1)
        _check(n <= env.n_items, f"slate size N={n} exceeds pool size K={env.n_items}", f"{path}.n", loc, s, "n")
        _check(n <= min_pool, f"slate size N={n} exceeds the {min_pool} items available at round 0", f"{path}.n", loc, s, "n")
        sseed = s.get("seed")
        _check(sseed is None or (isinstance(sseed, int) and sseed >= 0), "seed must be a nonnegative integer", f"{path}.seed", loc, s, "seed")
        name = s.get("name")
        _check(name is None or isinstance(name, str), "name must be a string", f"{path}.name", loc, s, "name")
        strategies.append(StrategyConfig(kind, n, _parse_prior(s, path, loc), sseed, name))
    labels = [s.label for s in strategies]
    _check(len(set(labels)) == len(labels), "strategy labels must be unique; add a 'name' to duplicates", "strategies", loc, raw, "strategies")

    windows = raw.get("windows", list(DEFAULT_WINDOWS))
    _check(
        isinstance(windows, list) and windows and all(isinstance(w, (int, float)) and 0 < w <= 1 for w in windows),
        "windows must be a list of horizon fractions in (0, 1]", "windows", loc, raw, "windows",
    )
    out = raw.get("output_dir")
    _check(out is None or isinstance(out, str), "output_dir must be a string", "output_dir", loc, raw, "output_dir")
    lpv = raw.get("log_prob_vector", True)
    _check(isinstance(lpv, bool), "log_prob_vector must be true or false", "log_prob_vector", loc, raw, "log_prob_vector")
    exp_id = raw.get("experiment_id", "experiment")
    _check(isinstance(exp_id, str) and exp_id, "experiment_id must be a nonempty string", "experiment_id", loc, raw, "experiment_id")
    return ExperimentConfig(
        environment=env,
        strategies=tuple(strategies),
        horizon=horizon,
        replicates=replicates,
        seed=seed,
        experiment_id=exp_id,
        output_dir=out,
        log_prob_vector=lpv,
        windows=tuple(float(w) for w in windows),
        workers=workers,
        raw=raw,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    try:
        raw, spans = _parse_with_spans(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno, source=str(path)) from None
    return parse_config(raw, text, spans, source=str(path))

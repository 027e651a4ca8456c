"""Closed-loop simulation: select a slate, observe clicks, update, log.

Randomness
----------
Every run draws from numpy's PCG64 generator.  A run for strategy seed ``s``
and replicate ``r`` uses one independent stream per component, seeded with
``SeedSequence(s, spawn_key=(r, component))``: component 0 drives the
selection policy, 1 the click draws and 2 the context draws.  The same
(seed, replicate, config) therefore reproduces a run bit for bit, and adding
a replicate or a strategy never shifts the streams of another.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bandit import ArmTable, BetaPrior, Slate, _plackett_luce
from .env import Environment
from .logs import LogDataset, LogMetadata, LogRecord, ProbVector
from .metrics import (
    ColdStartCurve,
    DistributionReport,
    cold_start_curve,
    cold_start_latencies,
    ctr_report,
    distribution_report,
)

STRATEGY_KINDS = (
    "chronological",
    "greedy_topn",
    "chrono_greedy",
    "ts_rankedlist",
    "ts_collection_exact",
    "ts_collection_fast",
    "uniform_random",
)
BANDIT_KINDS = frozenset(STRATEGY_KINDS) - {"chronological", "uniform_random"}
# kinds whose logged propensities are the probabilities actually used to draw
STOCHASTIC_LOGGING_KINDS = frozenset({"ts_collection_exact", "uniform_random"})

POLICY_STREAM, REWARD_STREAM, CONTEXT_STREAM = 0, 1, 2
DEFAULT_WINDOWS = (0.05, 0.1, 0.25, 0.5, 1.0)


def stream(seed: int, replicate: int, component: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replicate, component))))


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    n: int = 1
    prior: BetaPrior = field(default_factory=BetaPrior)
    seed: int | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; expected one of {', '.join(STRATEGY_KINDS)}")
        if self.n < 1:
            raise ValueError(f"slate size must be at least 1, got {self.n}")

    @property
    def label(self) -> str:
        return self.name or self.kind


@dataclass
class ExperimentResult:
    strategy: StrategyConfig
    horizon: int
    replicate: int
    views: np.ndarray
    clicks: np.ndarray
    first_impression: np.ndarray  # -1 for never shown
    arrival: np.ndarray
    clicks_per_round: np.ndarray
    successes: np.ndarray | None = None
    failures: np.ndarray | None = None
    log: LogDataset | None = None

    @property
    def cumulative_clicks(self) -> int:
        return int(self.clicks.sum())

    def reports(self, min_views: int = 1) -> dict[str, DistributionReport | None]:
        out: dict[str, DistributionReport | None] = {}
        if self.horizon == 0:
            return {"views": None, "clicks": None, "ctr": None, "cold_start_latency": None}
        out["views"] = distribution_report(self.views, "views")
        out["clicks"] = distribution_report(self.clicks, "clicks")
        shown = np.count_nonzero(self.views >= max(min_views, 1))
        out["ctr"] = ctr_report(self.views, self.clicks, min_views) if shown else None
        lat = cold_start_latencies(self.first_impression.tolist(), self.arrival.tolist())
        out["cold_start_latency"] = (
            distribution_report(lat, "cold_start_latency", excluded=int(self.views.size - lat.size))
            if lat.size
            else None
        )
        return out

    def cold_start(self, windows: Sequence[float] = DEFAULT_WINDOWS) -> ColdStartCurve:
        # items arriving after the horizon never had a chance to be shown
        eligible = self.arrival < max(self.horizon, 1)
        return cold_start_curve(
            self.first_impression[eligible].tolist(), self.arrival[eligible].tolist(), max(self.horizon, 1), windows
        )


def chronological_rank(env: Environment, t: int, n: int) -> Slate:
    """The ``n`` newest active items, newest first, ties by lower id."""
    active = np.flatnonzero(env.arrival_round <= t)
    if active.size < n:
        raise ValueError(f"only {active.size} active items at round {t}, need {n}")
    return Slate(tuple(_chronological(env, active, n).tolist()), t)


def _chronological(env: Environment, active: np.ndarray, n: int) -> np.ndarray:
    order = np.lexsort((active, -env.arrival_round[active]))[:n]
    return active[order]


class _Selector:
    """Per-round slate choice for one strategy over an ``ArmTable``."""

    def __init__(self, env: Environment, strategy: StrategyConfig, table: ArmTable, rng: np.random.Generator):
        self.env = env
        self.kind = strategy.kind
        self.n = strategy.n
        self.table = table
        self.rng = rng

    def __call__(self, active: np.ndarray):
        kind, n, table, rng = self.kind, self.n, self.table, self.rng
        if kind == "ts_collection_exact":
            return table.select_collection_exact(active, n, rng)
        if kind == "ts_collection_fast":
            return table.select_collection_fast(active, n, rng)
        if kind == "ts_rankedlist":
            return table.select_topn(active, n, rng)
        if kind == "greedy_topn":
            return table.select_greedy(active, n)
        if kind == "chrono_greedy":
            return table.select_greedy(active, n, tiebreak=self.env.arrival_round[active])
        if kind == "chronological":
            return _chronological(self.env, active, n), np.ones(n), None
        if kind == "uniform_random":
            p = np.full(active.size, 1.0 / active.size)
            picked, step_probs = _plackett_luce(p, n, rng)
            return active[picked], step_probs, p
        raise AssertionError(kind)


def run(
    env: Environment,
    strategy: StrategyConfig,
    horizon: int,
    *,
    replicate: int = 0,
    seed: int | None = None,
    log: bool = True,
    log_prob_vector: bool = True,
    metadata: LogMetadata | None = None,
) -> ExperimentResult:
    """Run ``horizon`` rounds of ``strategy`` against ``env``.

    ``seed`` is used when the strategy carries none.  With ``log`` the result
    holds a full ``LogDataset``; ``log_prob_vector`` adds each round's full
    selection distribution to the records of strategies that have one.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    k = env.n_items
    if horizon > 0 and strategy.n > env.min_pool_size(horizon):
        raise ValueError(
            f"slate size N={strategy.n} exceeds the smallest active pool ({env.min_pool_size(horizon)} items)"
        )
    run_seed = strategy.seed if strategy.seed is not None else (seed or 0)
    policy_rng = stream(run_seed, replicate, POLICY_STREAM)
    reward_rng = stream(run_seed, replicate, REWARD_STREAM)
    context_rng = stream(run_seed, replicate, CONTEXT_STREAM)

    table = ArmTable(env.items, strategy.prior)
    select = _Selector(env, strategy, table, policy_rng)
    is_bandit = strategy.kind in BANDIT_KINDS
    views = np.zeros(k, dtype=np.int64)
    clicks = np.zeros(k, dtype=np.int64)
    first = np.full(k, -1, dtype=np.int64)
    clicks_per_round = np.zeros(horizon, dtype=np.int64)
    ctr = env.true_ctr
    dataset = LogDataset(metadata=metadata or LogMetadata()) if log else None

    arrivals = env.arrival_round
    order = np.argsort(arrivals, kind="stable")
    n_arrived = 0
    active = np.empty(0, dtype=np.int64)
    index: dict = {}
    for t in range(horizon):
        if n_arrived < k and arrivals[order[n_arrived]] <= t:
            while n_arrived < k and arrivals[order[n_arrived]] <= t:
                n_arrived += 1
            active = np.sort(order[:n_arrived])
            index = {int(item): pos for pos, item in enumerate(active)}
        ctx = int(context_rng.integers(env.n_contexts)) if env.n_contexts > 1 else 0

        shown, props, pvec = select(active)
        rewards = (reward_rng.random(shown.size) < ctr[shown]).astype(np.int64)

        if is_bandit:
            table.update(shown, rewards)
        views[shown] += 1
        clicks[shown] += rewards
        fresh = shown[first[shown] < 0]
        first[fresh] = t
        clicks_per_round[t] = rewards.sum()
        if dataset is not None:
            dataset.records.append(
                LogRecord(
                    t,
                    ctx,
                    tuple(shown.tolist()),
                    tuple(props.tolist()),
                    tuple(rewards.tolist()),
                    ProbVector(index, pvec) if (pvec is not None and log_prob_vector) else None,
                )
            )

    return ExperimentResult(
        strategy=strategy,
        horizon=horizon,
        replicate=replicate,
        views=views,
        clicks=clicks,
        first_impression=first,
        arrival=np.asarray(arrivals).copy(),
        clicks_per_round=clicks_per_round,
        successes=table.successes.copy() if is_bandit else None,
        failures=table.failures.copy() if is_bandit else None,
        log=dataset,
    )


@dataclass
class SingleArmTrace:
    choices: np.ndarray
    rewards: np.ndarray
    successes: np.ndarray
    failures: np.ndarray


def run_single(
    env: Environment, prior: BetaPrior, horizon: int, *, seed: int = 0, replicate: int = 0
) -> SingleArmTrace:
    """Classic one-arm-per-round Thompson sampling over the full pool.

    Same draws as ``run`` with ``ts_rankedlist`` and ``N=1`` on a pool where
    every item is present from round 0, without the logging overhead.
    """
    if np.any(env.arrival_round > 0):
        raise ValueError("run_single needs every item present from round 0")
    policy_rng = stream(seed, replicate, POLICY_STREAM)
    reward_rng = stream(seed, replicate, REWARD_STREAM)
    a = np.full(env.n_items, prior.alpha)
    b = np.full(env.n_items, prior.beta)
    choices = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon, dtype=np.int64)
    ctr = env.true_ctr.tolist()
    # one uniform per round, drawn up front: the same stream as per-round draws
    uniforms = reward_rng.random(horizon).tolist()
    beta = policy_rng.beta
    for t in range(horizon):
        i = int(np.argmax(beta(a, b)))
        r = int(uniforms[t] < ctr[i])
        if r:
            a[i] += 1
        else:
            b[i] += 1
        choices[t] = i
        rewards[t] = r
    s = np.rint(a - prior.alpha).astype(np.int64)
    f = np.rint(b - prior.beta).astype(np.int64)
    return SingleArmTrace(choices, rewards, s, f)


# ---------------------------------------------------------------------------
# Multi-strategy comparison
# ---------------------------------------------------------------------------

STAT_FIELDS = ("skewness", "mean", "median")


@dataclass
class StrategySummary:
    label: str
    results: list[ExperimentResult]
    windows: tuple = DEFAULT_WINDOWS

    def stat(self, metric: str, stat: str) -> np.ndarray:
        vals = []
        for r in self.results:
            rep = r.reports().get(metric)
            v = getattr(rep, stat) if rep is not None else None
            vals.append(np.nan if v is None else v)
        return np.array(vals, dtype=float)

    def cumulative_clicks(self) -> np.ndarray:
        return np.array([r.cumulative_clicks for r in self.results], dtype=float)

    def cumulative_click_curve(self) -> np.ndarray:
        """Cumulative clicks by round, averaged over replicates."""
        return np.mean([np.cumsum(r.clicks_per_round) for r in self.results], axis=0)

    def cold_start(self) -> dict[float, np.ndarray]:
        curves = [r.cold_start(self.windows) for r in self.results]
        return {w: np.array([c[w] for c in curves]) for w in self.windows}

    def to_dict(self) -> dict:
        rows = {}
        for metric in ("views", "clicks", "ctr", "cold_start_latency"):
            rows[metric] = {s: _mean_std(self.stat(metric, s)) for s in STAT_FIELDS}
        return {
            "strategy": self.label,
            "replicates": len(self.results),
            "metrics": rows,
            "cumulative_clicks": _mean_std(self.cumulative_clicks()),
            "cold_start": {str(w): _mean_std(v) for w, v in self.cold_start().items()},
        }


def _mean_std(values: np.ndarray) -> dict:
    v = values[~np.isnan(values)]
    if v.size == 0:
        return {"mean": None, "std": None}
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0}


@dataclass
class Comparison:
    horizon: int
    summaries: list[StrategySummary]

    def __getitem__(self, label: str) -> StrategySummary:
        for s in self.summaries:
            if s.label == label:
                return s
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "strategies": [s.to_dict() for s in self.summaries]}


def _run_job(args):
    env, strategy, horizon, replicate, seed, log, log_prob_vector, metadata = args
    return run(
        env, strategy, horizon, replicate=replicate, seed=seed, log=log,
        log_prob_vector=log_prob_vector, metadata=metadata,
    )


def run_many(
    env: Environment,
    strategies: Sequence[StrategyConfig],
    horizon: int,
    replicates: int = 1,
    *,
    seed: int = 0,
    log: bool = False,
    log_prob_vector: bool = True,
    max_workers: int = 1,
    metadata_for=None,
    windows: Sequence[float] = DEFAULT_WINDOWS,
) -> Comparison:
    """Run every strategy ``replicates`` times on ``env`` and group the results.

    Strategies keep their listed order; duplicate labels get a ``#i`` suffix.
    ``metadata_for(strategy, replicate)`` may supply log metadata per run.
    Runs are independent, so ``max_workers > 1`` only changes wall time.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    labels = [s.label for s in strategies]
    if len(set(labels)) != len(labels):
        labels = [f"{s.label}#{i}" for i, s in enumerate(strategies)]
    jobs = [
        (env, s, horizon, r, seed, log, log_prob_vector, metadata_for(s, r) if metadata_for else None)
        for s in strategies
        for r in range(replicates)
    ]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    summaries = [
        StrategySummary(label, results[i * replicates : (i + 1) * replicates], tuple(windows))
        for i, label in enumerate(labels)
    ]
    return Comparison(horizon, summaries)


def compare(
    env: Environment,
    strategies: Sequence[StrategyConfig],
    horizon: int,
    replicates: int = 1,
    **kwargs,
) -> Comparison:
    """``run_many`` for two or more competing strategies."""
    if len(strategies) < 2:
        raise ValueError("a comparison needs at least two strategies")
    return run_many(env, strategies, horizon, replicates, **kwargs)

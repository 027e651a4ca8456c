"""Inverse-propensity scoring of a target policy on a propensity-logged dataset."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .env import Environment
from .logs import LogDataset, LogRecord


class ZeroPropensityError(ValueError):
    """A logged action had zero probability; IPS needs stochastic logging."""


@dataclass(frozen=True)
class Policy:
    """A target policy.

    ``choose`` maps a context id to an item (or, for slate policies, a tuple of
    items).  ``prob``, when set, gives ``pi(item | context)`` for stochastic
    policies and takes precedence over ``choose``.
    """

    name: str
    choose: Callable[[Hashable], Hashable] | None = None
    prob: Callable[[Hashable, Hashable], float] | None = None

    def __call__(self, context: Hashable) -> Hashable:
        if self.choose is None:
            raise TypeError(f"policy {self.name!r} is stochastic and has no single action")
        return self.choose(context)

    def weight(self, context: Hashable, item: Hashable) -> float:
        if self.prob is not None:
            return float(self.prob(context, item))
        return 1.0 if self.choose(context) == item else 0.0


def fixed_item_policy(item: Hashable) -> Policy:
    return Policy(f"fixed:{item}", choose=lambda _ctx: item)


def mapping_policy(mapping: Mapping[Hashable, Hashable], name: str = "mapping") -> Policy:
    def choose(ctx):
        try:
            return mapping[ctx]
        except KeyError:
            raise KeyError(f"policy {name!r} has no action for context {ctx!r}") from None

    return Policy(name, choose=choose)


def uniform_policy(items: Sequence[Hashable]) -> Policy:
    pool = frozenset(items)
    if not pool:
        raise ValueError("uniform policy needs at least one item")
    k = len(pool)
    return Policy(f"uniform:{k}", prob=lambda _ctx, item: 1.0 / k if item in pool else 0.0)


def slate_policy(slate: Sequence[Hashable], name: str | None = None) -> Policy:
    slate = tuple(slate)
    return Policy(name or f"slate:{','.join(map(str, slate))}", choose=lambda _ctx: slate)


def item_order(item: Hashable) -> tuple:
    """Sort key for item ids: integers numerically, then everything else as text."""
    return (0, item, "") if isinstance(item, int) else (1, 0, str(item))


def best_empirical_policy(dataset: LogDataset) -> Policy:
    """Always play the item with the highest logged click rate (ties: lowest id)."""
    views: dict = {}
    clicks: dict = {}
    for rec in dataset:
        for item, r in zip(rec.chosen_items, rec.rewards):
            views[item] = views.get(item, 0) + 1
            clicks[item] = clicks.get(item, 0) + r
    if not views:
        raise ValueError("cannot pick a best item from an empty log")
    best = max(sorted(views, key=item_order), key=lambda i: clicks[i] / views[i])
    return Policy(f"best_empirical:{best}", choose=lambda _ctx: best)


@dataclass(frozen=True)
class ValueEstimate:
    estimate: float
    matched_count: int
    record_count: int
    std_error: float
    raw_sum: float
    heuristic: bool = False

    def __post_init__(self) -> None:
        if self.matched_count > self.record_count:
            raise ValueError("matched_count cannot exceed record_count")
        if not math.isfinite(self.estimate):
            raise ValueError("estimate is not finite")

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "matched_count": self.matched_count,
            "record_count": self.record_count,
            "raw_sum": self.raw_sum,
            "heuristic": self.heuristic,
        }


def _summarize(terms: np.ndarray, matched: int, heuristic: bool) -> ValueEstimate:
    n = terms.size
    if n == 0:
        raise ValueError("cannot evaluate a policy on an empty dataset")
    # np.sum uses pairwise summation in a fixed order, so results are reproducible
    total = float(np.sum(terms))
    std_error = float(np.std(terms, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return ValueEstimate(total / n, matched, n, std_error, total, heuristic)


def _ips_terms(rows: Iterable[tuple], weight: Callable[[Hashable, Hashable], float]):
    terms = []
    matched = 0
    for ctx, item, reward, prop in rows:
        if prop <= 0:
            raise ZeroPropensityError(
                f"zero propensity for item {item!r}: IPS requires every logged action to be chosen stochastically"
            )
        w = weight(ctx, item)
        if w > 0:
            matched += 1
        terms.append(reward * w / prop)
    return np.asarray(terms, dtype=float), matched


def ips_value(dataset: LogDataset, policy: Policy, slot: int = 0) -> ValueEstimate:
    """Mean of ``r * 1[pi(x) == a] / p`` over the records (one slot per record).

    ``slot`` picks which slate position to score on multi-item logs.
    """
    rows = []
    for rec in dataset:
        if slot >= rec.slate_size:
            raise ValueError(f"record at round {rec.round} has no slot {slot}")
        rows.append((rec.context_id, rec.chosen_items[slot], rec.rewards[slot], rec.propensities[slot]))
    terms, matched = _ips_terms(rows, policy.weight)
    return _summarize(terms, matched, heuristic=False)


def per_slot_ips(dataset: LogDataset, policy: Policy) -> ValueEstimate:
    """Flatten every slate slot into its own record and apply the IPS formula.

    A slot matches when its item is in the policy's slate for that context.
    The logged per-slot propensities are conditional on earlier slots, so this
    is a heuristic: for N > 1 it is biased and is flagged as such.
    """
    rows = []
    heuristic = False
    for rec in dataset:
        heuristic |= rec.slate_size > 1
        for item, reward, prop in zip(rec.chosen_items, rec.rewards, rec.propensities):
            rows.append((rec.context_id, item, reward, prop))

    def weight(ctx, item):
        if policy.prob is not None:
            return policy.weight(ctx, item)
        chosen = policy(ctx)
        members = chosen if isinstance(chosen, tuple) else (chosen,)
        return 1.0 if item in members else 0.0

    terms, matched = _ips_terms(rows, weight)
    return _summarize(terms, matched, heuristic=heuristic)


def true_value(policy: Policy, env: Environment, contexts: Sequence[Hashable]) -> float:
    """Exact expected reward: mean over contexts of the chosen item's true CTR."""
    if not contexts:
        raise ValueError("need at least one context")
    values = []
    for ctx in contexts:
        if policy.prob is not None:
            values.append(sum(policy.prob(ctx, i) * env.ctr(i) for i in env.items))
        else:
            values.append(env.ctr(policy(ctx)))
    return float(np.mean(values))


def collect_stochastic_log(
    env: Environment,
    probs: Sequence[float],
    n_rounds: int,
    rng: np.random.Generator,
    log_prob_vector: bool = False,
) -> LogDataset:
    """Log ``n_rounds`` single-item rounds from a fixed stochastic policy.

    Vectorized, for building large logs from non-adaptive logging policies.
    Contexts are drawn uniformly from ``range(env.n_contexts)``.
    """
    p = np.asarray(probs, dtype=float)
    if p.shape != (env.n_items,) or abs(p.sum() - 1.0) > 1e-12 or np.any(p < 0):
        raise ValueError("probs must be a distribution over the environment's items")
    ctxs = rng.integers(env.n_contexts, size=n_rounds)
    actions = rng.choice(env.n_items, size=n_rounds, p=p)
    rewards = (rng.random(n_rounds) < env.true_ctr[actions]).astype(int)
    pvec = {i: float(p[i]) for i in range(env.n_items)} if log_prob_vector else None
    records = [
        LogRecord(t, c, (a,), (float(p[a]),), (r,), pvec)
        for t, c, a, r in zip(range(n_rounds), ctxs.tolist(), actions.tolist(), rewards.tolist())
    ]
    return LogDataset(records)

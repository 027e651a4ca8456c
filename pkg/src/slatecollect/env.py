"""Synthetic click environment: true CTRs, Bernoulli rewards, item arrivals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .bandit import Slate

DEFAULT_CTR_ALPHA = 1.0
DEFAULT_CTR_BETA = 24.0  # mean 0.04


@dataclass(frozen=True)
class Environment:
    """Ground truth for a simulation.

    Items are the integers ``0..K-1``; ``true_ctr[i]`` and ``arrival_round[i]``
    describe item ``i``.  Rewards ignore slate position and context.
    """

    true_ctr: np.ndarray
    arrival_round: np.ndarray
    n_contexts: int = 1
    seed: int | None = None
    _order: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ctr = np.asarray(self.true_ctr, dtype=float)
        arrivals = np.asarray(self.arrival_round, dtype=np.int64)
        if ctr.ndim != 1 or ctr.shape != arrivals.shape or ctr.size == 0:
            raise ValueError("true_ctr and arrival_round must be equal-length, nonempty vectors")
        if np.any((ctr < 0) | (ctr > 1)):
            raise ValueError("true CTRs must lie in [0, 1]")
        if np.any(arrivals < 0):
            raise ValueError("arrival rounds must be nonnegative")
        if self.n_contexts < 1:
            raise ValueError("n_contexts must be at least 1")
        ctr.flags.writeable = False
        arrivals.flags.writeable = False
        object.__setattr__(self, "true_ctr", ctr)
        object.__setattr__(self, "arrival_round", arrivals)
        object.__setattr__(self, "_order", np.argsort(arrivals, kind="stable"))

    @property
    def n_items(self) -> int:
        return int(self.true_ctr.size)

    @property
    def items(self) -> list[int]:
        return list(range(self.n_items))

    def ctr(self, item: int) -> float:
        if not 0 <= item < self.n_items:
            raise KeyError(f"unknown item {item!r}")
        return float(self.true_ctr[item])

    def min_pool_size(self, horizon: int) -> int:
        """Smallest active pool over rounds ``0..horizon-1``."""
        if horizon <= 0:
            return self.n_items
        return int(np.count_nonzero(self.arrival_round <= 0))

    def to_dict(self) -> dict:
        return {
            "true_ctr": self.true_ctr.tolist(),
            "arrival_round": self.arrival_round.tolist(),
            "n_contexts": self.n_contexts,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Environment":
        return cls(np.array(d["true_ctr"]), np.array(d["arrival_round"]), d.get("n_contexts", 1), d.get("seed"))


@dataclass(frozen=True)
class RoundOutcome:
    round: int
    shown: Slate
    rewards: tuple

    def __post_init__(self) -> None:
        if len(self.rewards) != len(self.shown):
            raise ValueError("rewards must align with shown items")


def active_pool(env: Environment, t: int) -> list[int]:
    """Items with ``arrival_round <= t``, in id order."""
    if t < 0:
        raise ValueError("round must be nonnegative")
    return np.flatnonzero(env.arrival_round <= t).tolist()


def draw_rewards(env: Environment, slate: Slate, rng: np.random.Generator) -> RoundOutcome:
    for item in slate.items:
        if not isinstance(item, (int, np.integer)) or not 0 <= item < env.n_items:
            raise ValueError(f"unknown item {item!r} in slate")
        if env.arrival_round[item] > slate.round:
            raise ValueError(f"item {item} is not active at round {slate.round}")
    probs = env.true_ctr[list(slate.items)]
    rewards = (rng.random(probs.size) < probs).astype(int)
    return RoundOutcome(slate.round, slate, tuple(int(r) for r in rewards))


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def all_at_zero(n_items: int) -> np.ndarray:
    return np.zeros(n_items, dtype=np.int64)


def staircase(n_items: int, batch: int, every: int) -> np.ndarray:
    """``batch`` new items every ``every`` rounds, starting at round 0."""
    if batch < 1 or every < 1:
        raise ValueError("staircase batch and period must be positive")
    return (np.arange(n_items, dtype=np.int64) // batch) * every


def make_environment(
    n_items: int,
    *,
    ctr: float | Sequence[float] | None = None,
    ctr_alpha: float = DEFAULT_CTR_ALPHA,
    ctr_beta: float = DEFAULT_CTR_BETA,
    arrivals: Sequence[int] | np.ndarray | None = None,
    n_contexts: int = 1,
    seed: int | None = None,
) -> Environment:
    """Build an environment.

    ``ctr`` pins the true CTRs (a scalar applies to every item); otherwise they
    are drawn from Beta(``ctr_alpha``, ``ctr_beta``) with ``seed``.
    """
    if n_items < 1:
        raise ValueError("n_items must be positive")
    if ctr is None:
        if not (ctr_alpha > 0 and ctr_beta > 0):
            raise ValueError("CTR generator needs positive Beta parameters")
        rng = np.random.default_rng(seed)
        true_ctr = rng.beta(ctr_alpha, ctr_beta, size=n_items)
    else:
        true_ctr = np.broadcast_to(np.asarray(ctr, dtype=float), (n_items,)).copy()
    if arrivals is None:
        arrivals = all_at_zero(n_items)
    return Environment(true_ctr, np.asarray(arrivals, dtype=np.int64), n_contexts, seed)

"""Beta-Bernoulli arm state and Thompson-sampling slate selection.

Three selection rules live here:

* ``select_single``: classic Thompson sampling, one arm per round.
* ``select_topn_deterministic``: sample every arm, keep the top ``N`` draws.
* ``compute_selection_probs`` + ``sample_slate_exact`` (or the cheaper
  ``sample_slate_fast``): turn the sampled parameters into a distribution and
  draw the slate *stochastically*, so that every shown item has a known,
  positive propensity that can be logged for offline evaluation.

The list-of-dataclass functions are the public contract.  ``ArmTable`` holds
the same counters as numpy arrays and is what the simulation loop uses.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Hashable, Sequence

import numpy as np

ItemId = Hashable


@dataclass(frozen=True)
class BetaPrior:
    """Pseudo-counts of the conjugate Beta prior."""

    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Beta prior needs alpha > 0 and beta > 0, got {self.alpha}, {self.beta}")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


@dataclass(frozen=True)
class ArmState:
    item_id: ItemId
    successes: int = 0
    failures: int = 0

    def __post_init__(self) -> None:
        if self.successes < 0 or self.failures < 0:
            raise ValueError("success/failure counters must be nonnegative")

    @property
    def pulls(self) -> int:
        return self.successes + self.failures


@dataclass(frozen=True)
class ThetaDraw:
    item_id: ItemId
    theta: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")


@dataclass(frozen=True)
class Slate:
    """Ordered items shown in one round."""

    items: tuple
    round: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise ValueError("a slate holds at least one item")
        if len(set(self.items)) != len(self.items):
            raise ValueError(f"duplicate items in slate {self.items}")
        if self.round < 0:
            raise ValueError("round must be nonnegative")

    def __len__(self) -> int:
        return len(self.items)


# ---------------------------------------------------------------------------
# Posterior sampling and updates
# ---------------------------------------------------------------------------


def sample_theta(arm: ArmState, prior: BetaPrior, rng: np.random.Generator) -> ThetaDraw:
    """One exact draw from Beta(S + alpha, F + beta)."""
    theta = float(rng.beta(arm.successes + prior.alpha, arm.failures + prior.beta))
    return ThetaDraw(arm.item_id, theta)


def sample_thetas(
    arms: Sequence[ArmState], prior: BetaPrior, rng: np.random.Generator
) -> list[ThetaDraw]:
    s = np.array([a.successes for a in arms], dtype=float)
    f = np.array([a.failures for a in arms], dtype=float)
    thetas = rng.beta(s + prior.alpha, f + prior.beta)
    return [ThetaDraw(a.item_id, float(t)) for a, t in zip(arms, thetas)]


def update(arm: ArmState, reward: int) -> ArmState:
    if reward == 1:
        return replace(arm, successes=arm.successes + 1)
    if reward == 0:
        return replace(arm, failures=arm.failures + 1)
    raise ValueError(f"reward must be 0 or 1, got {reward!r}")


def prior_from_ctr(avg_ctr: float, strength: float = 100.0) -> BetaPrior:
    """Prior whose mean equals a bucket-level average CTR.

    ``strength`` is the total pseudo-count ``alpha + beta``; smaller values
    widen the prior and make fresh items explore harder.
    """
    if not 0.0 < avg_ctr < 1.0:
        raise ValueError(f"avg_ctr must lie strictly between 0 and 1, got {avg_ctr}")
    if not strength > 0:
        raise ValueError(f"strength must be positive, got {strength}")
    return BetaPrior(alpha=strength * avg_ctr, beta=strength * (1.0 - avg_ctr))


# ---------------------------------------------------------------------------
# Array kernels shared by the list API and ArmTable
# ---------------------------------------------------------------------------


def _descending_order(values: np.ndarray) -> np.ndarray:
    # stable sort on the negated values keeps the lowest index first among ties
    return np.argsort(-values, kind="stable")


def _normalize(thetas: np.ndarray) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=float)
    if thetas.size == 0:
        raise ValueError("need at least one theta")
    if np.any(thetas < 0) or not np.all(np.isfinite(thetas)):
        raise ValueError("thetas must be finite and nonnegative")
    total = thetas.sum()
    if total <= 0:
        raise ValueError("all thetas are zero; selection probabilities are undefined")
    return thetas / total


def _plackett_luce(p: np.ndarray, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sequential proportional draws without replacement.

    Returns the drawn indices in draw order and the probability each index
    had at the moment it was drawn (the first one is simply ``p[i]``).
    """
    weights = np.array(p, dtype=float)
    positive = np.count_nonzero(weights > 0)
    if positive < n:
        raise ValueError(f"cannot draw {n} distinct items: only {positive} have positive mass")
    picked = np.empty(n, dtype=np.int64)
    step_probs = np.empty(n, dtype=float)
    taken: set[int] = set()
    cum = np.cumsum(weights)
    total = cum[-1]
    remaining = total
    for step in range(n):
        if remaining < 0.5 * total:
            # rejection gets expensive once most of the mass is drawn: rebuild
            weights[list(taken)] = 0.0
            cum = np.cumsum(weights)
            total = remaining = cum[-1]
        # Drawing from the current cumsum and rejecting taken items is the same
        # as drawing from the renormalized remainder.
        while True:
            # side="right" skips zero-mass slots; only u rounding up to total escapes
            idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
            if idx >= weights.size:
                idx = int(np.flatnonzero(weights > 0)[-1])
            if idx not in taken:
                break
        picked[step] = idx
        # subtracting drawn mass can leave `remaining` a rounding error below the last weight
        step_probs[step] = p[idx] if step == 0 else min(1.0, weights[idx] / remaining)
        taken.add(idx)
        remaining -= weights[idx]
    return picked, step_probs


def _check_n(n: int, k: int) -> None:
    if not 1 <= n <= k:
        raise ValueError(f"slate size N={n} must satisfy 1 <= N <= K={k}")


# ---------------------------------------------------------------------------
# Selection rules
# ---------------------------------------------------------------------------

Sampler = Callable[[Sequence[ArmState], BetaPrior, np.random.Generator], list[ThetaDraw]]


def argmax_draw(draws: Sequence[ThetaDraw]) -> ItemId:
    if not draws:
        raise ValueError("empty arm pool")
    return top_n_draws(draws, 1)[0]


def top_n_draws(draws: Sequence[ThetaDraw], n: int) -> tuple:
    """Item ids of the ``n`` largest draws, largest first; ties go to the lower id."""
    _check_n(n, len(draws))
    ordered = sorted(draws, key=lambda d: d.item_id)
    thetas = np.array([d.theta for d in ordered])
    return tuple(ordered[i].item_id for i in _descending_order(thetas)[:n])


def select_single(
    arms: Sequence[ArmState],
    prior: BetaPrior,
    rng: np.random.Generator,
    sampler: Sampler = sample_thetas,
) -> ItemId:
    if not arms:
        raise ValueError("empty arm pool")
    return argmax_draw(sampler(arms, prior, rng))


def select_topn_deterministic(
    arms: Sequence[ArmState],
    prior: BetaPrior,
    n: int,
    rng: np.random.Generator,
    sampler: Sampler = sample_thetas,
    round: int = 0,
) -> Slate:
    _check_n(n, len(arms))
    return Slate(top_n_draws(sampler(arms, prior, rng), n), round)


def compute_selection_probs(draws: Sequence[ThetaDraw]) -> np.ndarray:
    """``p_k = theta_k / sum(theta)``, aligned with ``draws``."""
    return _normalize(np.array([d.theta for d in draws], dtype=float))


def sample_slate_exact(
    p: Sequence[float],
    n: int,
    rng: np.random.Generator,
    item_ids: Sequence[ItemId] | None = None,
    round: int = 0,
) -> tuple[Slate, np.ndarray]:
    """Draw ``n`` distinct items from ``p`` one at a time, renormalizing after each.

    Returns the slate (in draw order) and the per-slot probabilities that were
    in force when each slot was drawn.  Items are indices into ``p`` unless
    ``item_ids`` is given.
    """
    p = np.asarray(p, dtype=float)
    _check_n(n, p.size)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must be a probability vector")
    picked, step_probs = _plackett_luce(p, n, rng)
    ids = picked.tolist() if item_ids is None else [item_ids[i] for i in picked]
    return Slate(tuple(ids), round), step_probs


def sample_slate_fast(
    draws: Sequence[ThetaDraw],
    n: int,
    rng: np.random.Generator,
    round: int = 0,
) -> tuple[Slate, np.ndarray]:
    """Perturb each draw by its own ``lambda ~ U(0, 1]`` and keep the top ``n``.

    Returns the slate and the perturbed values, aligned with ``draws``.
    """
    _check_n(n, len(draws))
    thetas = np.array([d.theta for d in draws], dtype=float)
    perturbed = perturb(thetas, rng)
    order = _descending_order(perturbed)[:n]
    return Slate(tuple(draws[i].item_id for i in order), round), perturbed


def perturb(thetas: np.ndarray, rng: np.random.Generator, rounds: int | None = None) -> np.ndarray:
    """``lambda * theta`` with an independent ``lambda ~ U(0, 1]`` per entry.

    With ``rounds`` the result has shape ``(rounds, K)`` and consumes the
    generator exactly as ``rounds`` successive single calls would.
    """
    thetas = np.asarray(thetas, dtype=float)
    shape = thetas.size if rounds is None else (rounds, thetas.size)
    # 1 - U[0,1) lies in (0,1], so a positive theta never collapses to zero
    return (1.0 - rng.random(shape)) * thetas


# ---------------------------------------------------------------------------
# Vectorized state for the simulation loop
# ---------------------------------------------------------------------------


class ArmTable:
    """Success/failure counters for a fixed universe of items, stored as arrays.

    Items are addressed by their position ``0..K-1`` in ``item_ids``.
    """

    def __init__(self, item_ids: Sequence[ItemId], prior: BetaPrior) -> None:
        self.item_ids = list(item_ids)
        self.prior = prior
        self.successes = np.zeros(len(self.item_ids), dtype=np.int64)
        self.failures = np.zeros(len(self.item_ids), dtype=np.int64)

    def __len__(self) -> int:
        return len(self.item_ids)

    def arm(self, index: int) -> ArmState:
        return ArmState(self.item_ids[index], int(self.successes[index]), int(self.failures[index]))

    def arms(self) -> list[ArmState]:
        return [self.arm(i) for i in range(len(self))]

    def sample(self, idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return rng.beta(self.successes[idx] + self.prior.alpha, self.failures[idx] + self.prior.beta)

    def posterior_mean(self, idx: np.ndarray) -> np.ndarray:
        a = self.successes[idx] + self.prior.alpha
        b = self.failures[idx] + self.prior.beta
        return a / (a + b)

    def update(self, idx: np.ndarray, rewards: np.ndarray) -> None:
        """Add one observation per index; ``idx`` must not repeat (a slate never does)."""
        rewards = np.asarray(rewards)
        if rewards.min() < 0 or rewards.max() > 1:
            raise ValueError("rewards must be 0 or 1")
        self.successes[idx] += rewards
        self.failures[idx] += 1 - rewards

    # Each selector takes positions of the active items (sorted ascending) and
    # returns (positions in slate order, per-slot propensities, full p or None).

    def select_topn(self, active: np.ndarray, n: int, rng: np.random.Generator):
        thetas = self.sample(active, rng)
        order = _descending_order(thetas)[:n]
        return active[order], np.ones(n), None

    def select_collection_exact(self, active: np.ndarray, n: int, rng: np.random.Generator):
        p = _normalize(self.sample(active, rng))
        picked, step_probs = _plackett_luce(p, n, rng)
        return active[picked], step_probs, p

    def select_collection_fast(self, active: np.ndarray, n: int, rng: np.random.Generator):
        perturbed = perturb(self.sample(active, rng), rng)
        order = _descending_order(perturbed)[:n]
        p = _normalize(perturbed)
        return active[order], p[order], p

    def select_greedy(self, active: np.ndarray, n: int, tiebreak: np.ndarray | None = None):
        """Top ``n`` by posterior mean.

        Ties go to the lowest position unless ``tiebreak`` (aligned with
        ``active``, larger wins) says otherwise.
        """
        means = self.posterior_mean(active)
        if tiebreak is None:
            order = _descending_order(means)[:n]
        else:
            order = np.lexsort((-np.asarray(tiebreak), -means))[:n]
        return active[order], np.ones(n), None

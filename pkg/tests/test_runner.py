import numpy as np
import pytest

from slatecollect.bandit import BetaPrior, prior_from_ctr
from slatecollect.env import Environment, make_environment, staircase
from slatecollect.logs import deserialize, serialize
from slatecollect.report import result_from_log
from slatecollect.runner import (
    BANDIT_KINDS,
    STOCHASTIC_LOGGING_KINDS,
    STRATEGY_KINDS,
    StrategyConfig,
    chronological_rank,
    compare,
    run,
    run_many,
    run_single,
)

PRIOR = prior_from_ctr(0.04, 100)


@pytest.fixture(scope="module")
def pool():
    return make_environment(30, seed=5)


def test_strategy_validation():
    with pytest.raises(ValueError):
        StrategyConfig("epsilon_greedy")
    with pytest.raises(ValueError):
        StrategyConfig("greedy_topn", n=0)


def test_zero_horizon(pool):
    res = run(pool, StrategyConfig("ts_collection_exact", n=3), 0)
    assert res.views.sum() == 0 and res.clicks.sum() == 0 and len(res.log) == 0
    assert all(v is None for v in res.reports().values())


def test_slate_too_large():
    env = make_environment(20, ctr=0.1, arrivals=staircase(20, 5, 10))
    with pytest.raises(ValueError):
        run(env, StrategyConfig("greedy_topn", n=6), 50)


def test_uniform_view_counts():
    env = make_environment(10, ctr=0.1)
    res = run(env, StrategyConfig("uniform_random", n=1, seed=3), 100_000, log=False)
    tol = 3 * np.sqrt(100_000 * 0.1 * 0.9)
    assert np.all(np.abs(res.views - 10_000) <= tol)


@pytest.mark.parametrize("kind", STRATEGY_KINDS)
def test_every_kind_conserves_views(kind, pool):
    res = run(pool, StrategyConfig(kind, n=4, prior=PRIOR, seed=1), 300)
    assert res.views.sum() == 300 * 4
    assert res.clicks.sum() == res.clicks_per_round.sum()
    if kind in BANDIT_KINDS:
        assert int((res.successes + res.failures).sum()) == 300 * 4
        np.testing.assert_array_equal(res.successes, res.clicks)
    for rec in res.log:
        assert len(set(rec.chosen_items)) == 4


@pytest.mark.parametrize("kind", STRATEGY_KINDS)
def test_log_matches_tallies(kind, pool):
    strategy = StrategyConfig(kind, n=3, prior=PRIOR, seed=2)
    res = run(pool, strategy, 250)
    rebuilt = result_from_log(deserialize(serialize(res.log)), pool, strategy, 250)
    np.testing.assert_array_equal(rebuilt.views, res.views)
    np.testing.assert_array_equal(rebuilt.clicks, res.clicks)
    np.testing.assert_array_equal(rebuilt.first_impression, res.first_impression)


@pytest.mark.parametrize("kind", sorted(STOCHASTIC_LOGGING_KINDS))
def test_first_slot_propensity_matches_pvec(kind, pool):
    res = run(pool, StrategyConfig(kind, n=3, prior=PRIOR, seed=4), 200)
    for rec in res.log:
        pvec = rec.full_prob_vector
        assert rec.propensities[0] == pvec[rec.chosen_items[0]]
        mass = pvec[rec.chosen_items[0]]
        # later slots: renormalized over what was left
        assert rec.propensities[1] == pytest.approx(pvec[rec.chosen_items[1]] / (1 - mass), rel=1e-9)


def test_fast_sampler_logs_perturbed_distribution(pool):
    res = run(pool, StrategyConfig("ts_collection_fast", n=2, prior=PRIOR, seed=4), 50)
    for rec in res.log:
        assert abs(rec.full_prob_vector.total() - 1.0) <= 1e-9
        assert rec.propensities[0] == rec.full_prob_vector[rec.chosen_items[0]]


def test_same_seed_same_run(pool):
    s = StrategyConfig("ts_collection_exact", n=5, prior=PRIOR, seed=11)
    a, b = run(pool, s, 400), run(pool, s, 400)
    assert serialize(a.log) == serialize(b.log)
    c = run(pool, StrategyConfig("ts_collection_exact", n=5, prior=PRIOR, seed=12), 400)
    assert serialize(a.log) != serialize(c.log)


def test_replicates_use_distinct_streams(pool):
    s = StrategyConfig("ts_collection_exact", n=2, prior=PRIOR, seed=0)
    assert serialize(run(pool, s, 100, replicate=0).log) != serialize(run(pool, s, 100, replicate=1).log)


def test_contexts_are_drawn(pool):
    env = make_environment(10, seed=1, n_contexts=3)
    res = run(env, StrategyConfig("uniform_random", n=1, seed=0), 300)
    assert {r.context_id for r in res.log} == {0, 1, 2}


def test_run_single_matches_generic_runner():
    env = make_environment(10, ctr=[0.10] + [0.05] * 9)
    trace = run_single(env, BetaPrior(), 500, seed=7)
    res = run(env, StrategyConfig("ts_rankedlist", n=1, seed=7), 500)
    np.testing.assert_array_equal(trace.choices, [r.chosen_items[0] for r in res.log])
    np.testing.assert_array_equal(trace.successes, res.successes)


class TestChronological:
    def test_newest_first(self):
        env = Environment(np.full(3, 0.1), np.array([0, 10, 20]))
        assert chronological_rank(env, 25, 2).items == (2, 1)

    def test_ties_by_id(self):
        env = make_environment(6, ctr=0.1)
        assert chronological_rank(env, 0, 3).items == (0, 1, 2)

    def test_pool_too_small(self):
        env = Environment(np.full(3, 0.1), np.array([0, 10, 20]))
        with pytest.raises(ValueError):
            chronological_rank(env, 5, 2)

    def test_new_item_shown_on_arrival(self):
        env = make_environment(20, ctr=0.1, arrivals=staircase(20, 2, 7))
        res = run(env, StrategyConfig("chronological", n=2), 100)
        np.testing.assert_array_equal(res.first_impression, res.arrival)
        assert np.all(res.reports()["cold_start_latency"].mean == 0)


def test_chrono_greedy_prefers_newest_on_ties():
    env = make_environment(6, ctr=0.0, arrivals=[0, 0, 0, 5, 5, 9])
    res = run(env, StrategyConfig("chrono_greedy", n=2, prior=BetaPrior(1, 1)), 10)
    # all posteriors stay at Beta(1, 1 + views): unseen new items win ties and are shown at arrival
    assert res.first_impression[3] == 5 and res.first_impression[5] == 9


class TestCompare:
    def test_needs_two(self, pool):
        with pytest.raises(ValueError):
            compare(pool, [StrategyConfig("greedy_topn")], 10)

    def test_identical_strategies_identical_rows(self, pool):
        s = StrategyConfig("ts_collection_exact", n=3, prior=PRIOR)
        cmp = compare(pool, [s, s], 300, replicates=2, seed=4)
        a, b = cmp.summaries
        assert a.label != b.label
        da, db = a.to_dict(), b.to_dict()
        da.pop("strategy"), db.pop("strategy")
        assert da == db

    def test_uniform_flat_greedy_skewed(self):
        env = make_environment(50, seed=3)
        cmp = compare(
            env,
            [StrategyConfig("uniform_random", n=5), StrategyConfig("greedy_topn", n=5, prior=PRIOR)],
            4000,
            replicates=2,
        )
        uni = cmp["uniform_random"].stat("views", "skewness")
        greedy = cmp["greedy_topn"].stat("views", "skewness")
        assert np.all(np.abs(uni) < 0.5)
        assert np.all(greedy > 2.0)

    def test_collection_beats_uniform_on_clicks(self):
        env = make_environment(100, seed=8)
        cmp = compare(
            env,
            [StrategyConfig("uniform_random", n=5), StrategyConfig("ts_collection_exact", n=5, prior=PRIOR)],
            5000,
            replicates=3,
        )
        assert cmp["ts_collection_exact"].cumulative_clicks().mean() > cmp["uniform_random"].cumulative_clicks().mean()

    def test_parallel_matches_serial(self, pool):
        strategies = [StrategyConfig("greedy_topn", n=2, prior=PRIOR), StrategyConfig("ts_collection_fast", n=2, prior=PRIOR)]
        a = run_many(pool, strategies, 200, 2, seed=3)
        b = run_many(pool, strategies, 200, 2, seed=3, max_workers=2)
        assert a.to_dict() == b.to_dict()

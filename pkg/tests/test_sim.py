import math

import numpy as np
import pytest

from activeht import kernels
from activeht.dqn import QNetwork, TrainConfig, train
from activeht.game import optimal_rate
from activeht.model import Belief, ObservationModel, abllr, bayes_update, bllr
from activeht.modelfile import preset
from activeht.policies import PolicyConfig, make_policy
from activeht.sim import (
    EpisodeBatch,
    episode_rng,
    evaluate_policy,
    query_frequency,
    rate_curve,
    run_episode,
    sample_observation,
    simulate,
)

SETUP1, SETUP2 = preset("setup1"), preset("setup2")
UNIFORM = Belief.uniform(3)


@pytest.fixture(scope="module")
def small_net():
    cfg = TrainConfig(episodes=5, horizon=10, minibatch_size=8, epochs=2, capacity=50, hidden=(8,), seed=1)
    return train(SETUP1, UNIFORM, cfg)


def policy_for(kind, model, net=None):
    return make_policy(PolicyConfig(kind, network=net if kind == "dqn" else None), model)


# --- sampling --------------------------------------------------------------------------


def test_sample_observation_deterministic_row():
    model = ObservationModel(np.array([[[1.0, 0.0]], [[0.5, 0.5]]]))
    rng = np.random.default_rng(0)
    assert all(sample_observation(model, 0, 0, rng) == 0 for _ in range(1000))


def test_sample_observation_frequency():
    rng = np.random.default_rng(1)
    ys = np.array([sample_observation(SETUP1, 0, 0, rng) for _ in range(100_000)])
    sigma = math.sqrt(0.8 * 0.2 / 100_000)
    assert abs(np.mean(ys == 0) - 0.8) <= 3 * sigma


def test_sample_observation_reproducible():
    a = [sample_observation(SETUP1, 1, 0, episode_rng(5, 1, 0)) for _ in range(3)]
    b = [sample_observation(SETUP1, 1, 0, episode_rng(5, 1, 0)) for _ in range(3)]
    assert a == b


# --- run_episode -----------------------------------------------------------------------


def test_run_episode_zero_steps():
    t = run_episode(policy_for("ejs", SETUP1), SETUP1, 0, UNIFORM, 0, np.random.default_rng(0))
    assert len(t.beliefs) == 1 and t.queries == [] and t.rewards == []


def test_run_episode_point_mass_prior():
    prior = Belief.point_mass(3, 1)
    t = run_episode(policy_for("ejs", SETUP1), SETUP1, 1, prior, 10, np.random.default_rng(0))
    assert len(set(t.confidence_on_truth)) == 1
    assert t.confidence_on_truth[0] == pytest.approx(bllr(prior, 1))


@pytest.mark.parametrize("kind", ["random", "ejs", "ope", "heu"])
def test_trace_invariants(kind):
    policy = policy_for(kind, SETUP2)
    for e in range(20):
        t = run_episode(policy, SETUP2, e % 3, UNIFORM, 40, episode_rng(3, e % 3, e))
        for n in range(40):
            nxt = bayes_update(t.beliefs[n], t.queries[n], t.observations[n], SETUP2)
            assert np.allclose(nxt.log_rho, t.beliefs[n + 1].log_rho, rtol=0, atol=1e-12)
        assert abs(sum(t.rewards) - (abllr(t.beliefs[-1]) - abllr(t.beliefs[0]))) <= 1e-9 * 40


def test_ejs_truth_confidence_positive():
    policy = policy_for("ejs", SETUP1)
    batch = simulate(policy, SETUP1, UNIFORM, 1, 100, 1000, seed=4)
    assert np.mean(batch.confidence[:, -1] > 0) >= 0.99


# --- batch kernels vs reference path ---------------------------------------------------


@pytest.mark.parametrize("kind", ["random", "ejs", "ope", "heu", "dqn"])
@pytest.mark.parametrize("model_name", ["setup1", "setup2"])
def test_batch_matches_reference(backend, kind, model_name, small_net):
    model = preset(model_name)
    net = small_net if model_name == "setup1" else QNetwork.initialize((6, 8, 4), np.random.default_rng(2))
    policy = policy_for(kind, model, net)
    seed, h, n_steps = 17, 0, 60
    batch = simulate(policy, model, UNIFORM, h, n_steps, 12, seed=seed)
    for e in range(12):
        t = run_episode(policy, model, h, UNIFORM, n_steps, episode_rng(seed, h, e))
        assert batch.queries[e].tolist() == t.queries
        assert batch.observations[e].tolist() == t.observations
        assert np.allclose(batch.confidence[e], t.confidence_on_truth, rtol=1e-9, atol=1e-9)
        assert np.allclose(batch.rewards[e], t.rewards, rtol=1e-7, atol=1e-9)


@pytest.mark.parametrize("kind", ["random", "ejs", "ope", "heu"])
def test_backends_agree(kind):
    out = {}
    for name in kernels.available():
        kernels.use_backend(name)
        try:
            out[name] = simulate(policy_for(kind, SETUP2), SETUP2, UNIFORM, 0, 120, 300, seed=9)
        finally:
            kernels.use_backend(kernels._default_backend())
    ref = next(iter(out.values()))
    for b in out.values():
        assert np.array_equal(b.queries, ref.queries)
        assert np.allclose(b.confidence, ref.confidence, rtol=1e-12, atol=1e-12)


def test_workers_and_chunking_do_not_change_results():
    policy = policy_for("ope", SETUP1)
    a = simulate(policy, SETUP1, UNIFORM, 0, 50, 250, seed=3)
    b = simulate(policy, SETUP1, UNIFORM, 0, 50, 250, seed=3, workers=4, chunk=37)
    assert np.array_equal(a.queries, b.queries)
    assert np.array_equal(a.confidence, b.confidence)


def test_seed_determinism():
    a = evaluate_policy("heu", SETUP2, None, 0, 80, 400, seed=2)
    b = evaluate_policy("heu", SETUP2, None, 0, 80, 400, seed=2)
    c = evaluate_policy("heu", SETUP2, None, 0, 80, 400, seed=3)
    assert np.array_equal(a.mean_rate, b.mean_rate) and np.array_equal(a.stderr, b.stderr)
    assert not np.array_equal(a.mean_rate, c.mean_rate)


def test_simulate_rejects_bad_hypothesis():
    with pytest.raises(IndexError):
        simulate("ejs", SETUP1, UNIFORM, 3, 5, 2)
    with pytest.raises(ValueError):
        simulate("ejs", SETUP1, Belief.from_log([0.0, -0.7, -np.inf]), 2, 5, 2)


# --- rate curves -----------------------------------------------------------------------


def test_rate_curve_definition():
    batch = simulate("ejs", SETUP1, UNIFORM, 0, 30, 200, seed=1)
    curve = rate_curve(batch, 0.4, "ejs")
    gains = batch.confidence[:, 1] - batch.confidence[:, 0]
    assert curve.mean_rate[0] == pytest.approx(gains.mean(), abs=1e-15)
    n = 17
    r = (batch.confidence[:, n] - batch.confidence[:, 0]) / n
    assert curve.at(n) == pytest.approx(r.mean(), abs=1e-14)
    assert curve.stderr[n - 1] == pytest.approx(r.std(ddof=1) / math.sqrt(200), rel=1e-10)
    assert np.all(curve.stderr >= 0) and np.all(np.diff(curve.grid) > 0)


def test_single_episode_deterministic_model():
    model = ObservationModel(np.array([[[1.0, 0.0]], [[0.0, 1.0]]]))
    curve = evaluate_policy("ejs", model, None, 0, 5, 1, seed=0)
    batch = simulate("ejs", model, Belief.uniform(2), 0, 5, 1, seed=0)
    assert curve.mean_rate[-1] == pytest.approx((batch.confidence[0, -1] - batch.confidence[0, 0]) / 5)
    assert np.all(curve.stderr == 0)


def test_confidence_is_submartingale_under_truth():
    for kind in ("random", "ejs", "heu"):
        batch = simulate(kind, SETUP1, UNIFORM, 0, 100, 10_000, seed=21)
        steps = np.diff(batch.confidence, axis=1)
        se = steps.std(axis=0, ddof=1) / math.sqrt(steps.shape[0])
        assert np.all(steps.mean(axis=0) >= -3 * se), kind


def test_ope_below_ejs_at_100():
    ope = evaluate_policy("ope", SETUP1, None, 0, 100, 2000, seed=5)
    ejs = evaluate_policy("ejs", SETUP1, None, 0, 100, 2000, seed=5)
    assert ejs.at(100) > ope.at(100)
    assert ejs.bound == pytest.approx(optimal_rate(SETUP1, 0).value)


# --- query frequencies -----------------------------------------------------------------


def test_query_frequency_point_mass():
    batch = EpisodeBatch(0, np.zeros((1, 4)), np.zeros((1, 4)), np.zeros((1, 3), dtype=np.int64),
                         np.zeros((1, 3), dtype=np.int64))
    assert query_frequency(batch, (1, 3), 2).tolist() == [1.0, 0.0]


def test_query_frequency_traces_and_batch_agree():
    policy = policy_for("ope", SETUP1)
    batch = simulate(policy, SETUP1, UNIFORM, 0, 30, 10, seed=2)
    traces = [run_episode(policy, SETUP1, 0, UNIFORM, 30, episode_rng(2, 0, e)) for e in range(10)]
    assert np.array_equal(query_frequency(batch, (11, 30), 2), query_frequency(traces, (11, 30), 2))


def test_ope_verification_frequencies():
    batch = simulate("ope", SETUP1, UNIFORM, 0, 200, 2000, seed=8)
    assert query_frequency(batch, (101, 200), 2) == pytest.approx([0.5, 0.5], abs=0.03)


def test_heu_verification_frequencies_setup2():
    batch = simulate("heu", SETUP2, UNIFORM, 0, 200, 2000, seed=8)
    assert query_frequency(batch, (101, 200), 4)[2:].sum() >= 0.95

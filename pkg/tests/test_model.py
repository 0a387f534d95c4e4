import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from activeht.model import (
    LOGIT_MAX,
    Belief,
    DegenerateObservationError,
    DimensionError,
    ModelError,
    ObservationModel,
    abllr,
    bayes_update,
    bllr,
    kl_divergence,
    leader,
    normalized_alternate,
    observation_marginal,
    reward,
)
from activeht.modelfile import preset

SETUP1 = preset("setup1")


def simplex(n, min_value=1e-6):
    return arrays(np.float64, n, elements=st.floats(min_value, 1.0)).map(lambda v: v / v.sum())


# --- construction -----------------------------------------------------------------


def test_row_sum_error_names_cell():
    p = SETUP1.probs.copy()
    p[1, 0] = [0.7, 0.2]
    with pytest.raises(ModelError, match=r"h=h1, u=u1"):
        ObservationModel(p, ("h0", "h1", "h2"), ("u1", "u2"), ("0", "1"))


@pytest.mark.parametrize("shape", [(1, 2, 2), (3, 0, 2), (3, 2, 1), (3, 2)])
def test_bad_shapes(shape):
    with pytest.raises(ModelError):
        ObservationModel(np.full(shape, 0.5))


def test_probs_are_read_only():
    with pytest.raises(ValueError):
        SETUP1.probs[0, 0, 0] = 0.5


def test_belief_validation():
    with pytest.raises(ModelError):
        Belief([0.5, 0.6])
    with pytest.raises(ModelError):
        Belief([1.2, -0.2])
    assert Belief.uniform(4).rho == pytest.approx(np.full(4, 0.25))


# --- KL ------------------------------------------------------------------------------------


def test_kl_examples():
    assert kl_divergence([0.8, 0.2], [0.2, 0.8]) == pytest.approx(0.6 * math.log(4), abs=1e-12)
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))
    with pytest.raises(DimensionError):
        kl_divergence([0.5, 0.5], [0.2, 0.3, 0.5])


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 6).flatmap(lambda n: st.tuples(simplex(n), simplex(n))))
def test_kl_nonnegative_and_matches_oracle(pq):
    p, q = pq
    d = kl_divergence(p, q)
    assert d >= 0
    assert d == pytest.approx(oracles.kl(p, q), rel=1e-9, abs=1e-12)


# --- BLLR ----------------------------------------------------------------------------------


def test_bllr_examples():
    assert bllr(Belief([0.5, 0.5]), 0) == 0.0
    assert bllr(Belief([0.9, 0.05, 0.05]), 0) == pytest.approx(math.log(9), abs=1e-12)
    b = Belief.from_log(np.log([1 - 1e-12, 1e-12]))
    assert bllr(b, 0) == pytest.approx(27.631021, abs=1e-5)


def test_bllr_keeps_precision_past_double_rounding():
    # rho_0 rounds to 1.0 in linear space, but the log-odds must still be exact
    b = Belief.from_log(np.array([0.0, -100.0, -100.0]))
    assert b.rho[0] == 1.0
    assert bllr(b, 0) == pytest.approx(100.0 - math.log(2), abs=1e-9)
    assert bllr(b, 1) == pytest.approx(-100.0, abs=1e-9)


def test_bllr_saturates():
    b = Belief.point_mass(3, 0)
    assert bllr(b, 0) == pytest.approx(LOGIT_MAX)
    assert bllr(b, 1) == pytest.approx(-LOGIT_MAX)
    assert math.isfinite(abllr(b))


@settings(max_examples=300, deadline=None)
@given(simplex(2, 1e-9))
def test_bllr_antisymmetric_for_two(rho):
    b = Belief(rho)
    assert bllr(b, 0) == pytest.approx(-bllr(b, 1), abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
def test_bllr_monotone(a, b):
    lo, hi = sorted((a, b))
    rest_lo, rest_hi = (1 - lo) / 2, (1 - hi) / 2
    assert bllr(Belief([lo, rest_lo, rest_lo]), 0) <= bllr(Belief([hi, rest_hi, rest_hi]), 0) + 1e-12


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 6).flatmap(simplex))
def test_bllr_abllr_match_oracle(rho):
    b = Belief(rho)
    for h in range(rho.size):
        assert bllr(b, h) == pytest.approx(oracles.bllr(b.rho, h), rel=1e-7, abs=1e-7)
    assert abllr(b) == pytest.approx(oracles.abllr(b.rho), rel=1e-7, abs=1e-7)


# --- Bayes update ------------------------------------------------------------------------


def test_bayes_update_example():
    b = bayes_update(Belief.uniform(3), 0, 0, SETUP1)
    assert b.rho == pytest.approx([0.8 / 1.8, 0.2 / 1.8, 0.8 / 1.8], abs=1e-15)


def test_bayes_update_degenerate():
    p = np.array([[[1.0, 0.0]], [[1.0, 0.0]]])
    model = ObservationModel(p)
    with pytest.raises(DegenerateObservationError):
        bayes_update(Belief.uniform(2), 0, 1, model)


def test_observation_marginal_sums_to_one():
    m = observation_marginal(Belief([0.2, 0.5, 0.3]), 1, SETUP1)
    assert m.sum() == pytest.approx(1.0)


def test_exchangeability_random_permutations():
    """Posterior depends only on the multiset of (query, observation) pairs."""
    rng = np.random.default_rng(11)
    for trial in range(1000):
        n_h, n_u = rng.integers(2, 5), rng.integers(1, 4)
        probs = oracles.random_model(rng, n_h, n_u, 2)
        model = ObservationModel(probs)
        n = rng.integers(1, 12)
        qs, ys = rng.integers(0, n_u, n), rng.integers(0, 2, n)
        perm = rng.permutation(n)
        prior = Belief(rng.dirichlet(np.ones(n_h)))
        a, b = prior, prior
        for k in range(n):
            a = bayes_update(a, qs[k], ys[k], model)
            b = bayes_update(b, qs[perm[k]], ys[perm[k]], model)
        assert np.allclose(a.rho, b.rho, rtol=1e-10, atol=1e-12), trial
        assert np.allclose(a.rho, oracles.posterior(prior.rho, probs, qs, ys), rtol=1e-9, atol=1e-12)


def test_telescoping_random_trajectories():
    """Cumulative reward equals the ABLLR change across the whole trajectory."""
    rng = np.random.default_rng(12)
    n = 30
    for _ in range(1000):
        n_h, n_u = rng.integers(2, 5), rng.integers(1, 4)
        model = ObservationModel(oracles.random_model(rng, n_h, n_u, 2))
        start = b = Belief(rng.dirichlet(np.ones(n_h)))
        total = 0.0
        for _ in range(n):
            u, y = rng.integers(n_u), rng.integers(2)
            total += reward(b, u, y, model)
            b = bayes_update(b, u, y, model)
        assert abs(total - (abllr(b) - abllr(start))) <= 1e-9 * n


def test_leader_and_alternate():
    b = Belief([0.2, 0.5, 0.3])
    assert leader(b) == 1
    assert normalized_alternate(b) == pytest.approx([0.4, 0.0, 0.6])
    assert leader(Belief([0.4, 0.4, 0.2])) == 0
    assert normalized_alternate(Belief.point_mass(3, 2)) == pytest.approx([0, 0, 0])


def test_alternate_tie_goes_to_lowest_index():
    assert normalized_alternate(Belief([0.5, 0.5])).tolist() == [0.0, 1.0]

import math

import numpy as np
import pytest

import oracles
from activeht.game import (
    KL_CAP,
    ConvergenceError,
    kl_payoff_matrix,
    kl_tensor,
    optimal_rate,
    solve_zero_sum,
)
from activeht.model import ObservationModel
from activeht.modelfile import preset

SETUP1, SETUP2 = preset("setup1"), preset("setup2")


def test_payoff_matrix_setup1():
    m = kl_payoff_matrix(SETUP1, 0)
    d = 0.6 * math.log(4)
    assert m.alternates == (1, 2)
    assert m.entries == pytest.approx(np.array([[d, 0.0], [0.0, d]]), abs=1e-12)
    assert m.entries == pytest.approx(oracles.payoff(SETUP1.probs, 0), abs=1e-12)


def test_payoff_with_zero_support_is_capped():
    m = kl_payoff_matrix(SETUP2, 1)
    assert np.all(np.isfinite(m.capped()))
    assert m.capped().max() <= KL_CAP


def test_kl_tensor_layout():
    t = kl_tensor(SETUP2)
    for i in range(3):
        assert t[i, :, i] == pytest.approx(0.0)
        pm = kl_payoff_matrix(SETUP2, i)
        for k, j in enumerate(pm.alternates):
            assert t[i, :, j] == pytest.approx(pm.capped()[:, k])


@pytest.mark.parametrize("i, expected", [(0, 0.415888), (1, 0.831777), (2, 0.831777)])
def test_setup1_values_against_grid(i, expected):
    sol = optimal_rate(SETUP1, i)
    grid, _ = oracles.grid_game_value(oracles.payoff(SETUP1.probs, i))
    assert sol.value == pytest.approx(grid, abs=1e-3)
    assert sol.value == pytest.approx(expected, abs=1e-3)


def test_setup1_h0_mixture():
    assert optimal_rate(SETUP1, 0).alpha == pytest.approx([0.5, 0.5], abs=1e-2)


def test_setup2_support():
    sol = optimal_rate(SETUP2, 0)
    assert sol.alpha[2:].sum() >= 0.99
    grid, _ = oracles.grid_game_value(oracles.payoff(SETUP2.probs, 0), step=0.01)
    assert sol.value == pytest.approx(grid, abs=1e-3)


def test_degenerate_model_value_zero():
    model = ObservationModel(np.full((3, 2, 2), 0.5))
    sol = optimal_rate(model, 0)
    assert sol.value == pytest.approx(0.0, abs=1e-12)
    assert sol.alpha.sum() == pytest.approx(1.0)


def test_single_query_is_pure():
    sol = solve_zero_sum(np.array([[0.3, 0.7]]))
    assert sol.alpha.tolist() == [1.0]
    assert sol.value == pytest.approx(0.3)


def test_value_is_certified_lower_bound():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = rng.uniform(0, 2, size=(3, 4))
        sol = solve_zero_sum(m)
        assert (sol.alpha @ m).min() == pytest.approx(sol.value, abs=1e-12)
        assert sol.alpha.min() >= 0 and sol.alpha.sum() == pytest.approx(1.0)


def test_nonconvergence_raises():
    m = np.array([[1.0, 0.0, 0.3], [0.0, 1.0, 0.4], [0.5, 0.5, 0.2]])
    with pytest.raises(ConvergenceError) as info:
        solve_zero_sum(m, tol=1e-12, max_iters=10)
    assert info.value.gap > 0


def test_bad_input():
    with pytest.raises(ValueError):
        solve_zero_sum(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        solve_zero_sum(np.zeros((0, 2)))


def test_random_instances_against_oracles(backend):
    """Solver agrees with the grid oracle and with linear programming on 50 random instances."""
    rng = np.random.default_rng(2024)
    for trial in range(50):
        n_h = int(rng.integers(2, 5))
        n_u = int(rng.integers(2, 4))
        probs = oracles.random_model(rng, n_h, n_u, int(rng.integers(2, 4)), floor=0.1)
        model = ObservationModel(probs)
        i = int(rng.integers(n_h))
        sol = optimal_rate(model, i)
        m = oracles.payoff(probs, i)
        grid, _ = oracles.grid_game_value(m)
        lp, _ = oracles.lp_game_value(m)
        assert sol.value == pytest.approx(grid, abs=1e-3), trial
        assert sol.value == pytest.approx(lp, abs=1e-3), trial
        assert sol.value <= lp + 1e-9

"""Max-min KL game: the optimal confidence rate and its equilibrium query mix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import ObservationModel, kl_divergence

__all__ = [
    "KL_CAP",
    "ConvergenceError",
    "KlPayoffMatrix",
    "GameSolution",
    "kl_payoff_matrix",
    "kl_tensor",
    "solve_zero_sum",
    "optimal_rate",
]

KL_CAP = 1e6
DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITERS = 200_000


class ConvergenceError(RuntimeError):
    def __init__(self, message, gap):
        super().__init__(message)
        self.gap = gap


@dataclass(frozen=True)
class KlPayoffMatrix:
    """M[u, k] = D(p_i^u || p_j^u) for the k-th alternate j != i (ascending order)."""

    i: int
    entries: np.ndarray
    alternates: tuple

    def capped(self) -> np.ndarray:
        return np.minimum(self.entries, KL_CAP)


@dataclass(frozen=True)
class GameSolution:
    alpha: np.ndarray
    value: float
    iterations: int
    gap: float


def kl_payoff_matrix(model: ObservationModel, i: int) -> KlPayoffMatrix:
    if not 0 <= i < model.num_hypotheses:
        raise IndexError(f"hypothesis index {i} out of range")
    alternates = tuple(j for j in range(model.num_hypotheses) if j != i)
    m = np.array(
        [[kl_divergence(model.probs[i, u], model.probs[j, u]) for j in alternates]
         for u in range(model.num_queries)]
    )
    return KlPayoffMatrix(i=i, entries=m, alternates=alternates)


def kl_tensor(model: ObservationModel) -> np.ndarray:
    """Capped KL table kl[i, u, j] (zero on the diagonal) for the HEU scores."""
    n_h = model.num_hypotheses
    out = np.zeros((n_h, model.num_queries, n_h))
    for i in range(n_h):
        mat = kl_payoff_matrix(model, i)
        for k, j in enumerate(mat.alternates):
            out[i, :, j] = mat.capped()[:, k]
    return out


def solve_zero_sum(m, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> GameSolution:
    """Solve max_alpha min_j sum_u alpha_u M[u, j] by fictitious play.

    Infinite entries are capped at ``KL_CAP``. ``tol`` bounds the duality gap
    in units of ``max(1, max M)``, i.e. absolutely for payoffs up to 1 nat.
    Raises ``ConvergenceError`` if the gap is still above tolerance after
    ``max_iters`` iterations.
    """
    if isinstance(m, KlPayoffMatrix):
        m = m.capped()
    m = np.minimum(np.asarray(m, dtype=np.float64), KL_CAP)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("payoff must be a non-empty 2-d matrix")
    if np.any(np.isnan(m)):
        raise ValueError("payoff contains NaN")
    if tol <= 0:
        raise ValueError("tol must be positive")
    scaled_tol = tol * max(1.0, float(m.max()))
    alpha, value, gap, iters, ok = kernels.impl().fictitious_play(
        np.ascontiguousarray(m), scaled_tol, int(max_iters)
    )
    if not ok:
        raise ConvergenceError(
            f"fictitious play did not reach gap {scaled_tol:g} in {max_iters} iterations (gap {gap:g})",
            gap,
        )
    alpha, value, gap = np.asarray(alpha).copy(), float(value), float(gap)
    # fictitious play approaches pure equilibria only slowly; a pure row whose
    # guaranteed payoff beats the iterate is a strictly better certificate
    # (and likewise the iterate with its small leak onto dominated rows removed)
    upper = value + gap
    candidates = list(np.eye(m.shape[0]))
    trimmed = np.where(alpha >= 0.01 * alpha.max(), alpha, 0.0)
    candidates.append(trimmed / trimmed.sum())
    for cand in candidates:
        lo = float((cand @ m).min())
        if lo > value:
            alpha, value = cand, lo
    gap = max(upper - value, 0.0)
    return GameSolution(alpha=alpha, value=value, iterations=int(iters), gap=gap)


def optimal_rate(model: ObservationModel, i: int, tol: float = DEFAULT_TOL,
                 max_iters: int = DEFAULT_MAX_ITERS) -> GameSolution:
    """Best achievable asymptotic confidence rate under hypothesis ``i``."""
    return solve_zero_sum(kl_payoff_matrix(model, i), tol=tol, max_iters=max_iters)

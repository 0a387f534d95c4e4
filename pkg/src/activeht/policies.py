"""Query-selection policies: random, EJS, OPE, HEU and greedy-DQN.

Every policy answers ``select(belief, draw)`` where ``draw`` is one uniform
variate in [0, 1); deterministic policies ignore it. Feeding one draw per
decision keeps the random stream layout identical between the step-by-step
path and the batch kernels.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .game import DEFAULT_TOL, kl_payoff_matrix, kl_tensor, optimal_rate
from .kernels import TIE_TOL
from .model import (
    Belief,
    ObservationModel,
    leader,
    normalized_alternate,
    observation_marginal,
    reward,
)

__all__ = [
    "POLICY_KINDS",
    "PolicyDecision",
    "PolicyConfig",
    "ejs_score",
    "ejs_select",
    "heu_score",
    "heu_select",
    "ope_select",
    "random_select",
    "dqn_greedy_select",
    "make_policy",
]

POLICY_KINDS = ("random", "ejs", "ope", "heu", "dqn")
DEFAULT_RHO_BAR = 0.7


@dataclass(frozen=True)
class PolicyDecision:
    query: int
    score_vector: Optional[np.ndarray] = None


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    rho_bar: float = DEFAULT_RHO_BAR
    game_tol: float = DEFAULT_TOL
    network: object = None
    seed: int = 0

    def __post_init__(self):
        kind = {"dqn-greedy": "dqn"}.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; choose from {POLICY_KINDS}")
        if kind == "dqn" and self.network is None:
            raise ValueError("dqn policy needs a trained network")

    def validate_for(self, model: ObservationModel):
        if self.kind in ("ope", "heu") and not 1.0 / model.num_hypotheses < self.rho_bar < 1.0:
            raise ValueError(
                f"rho_bar must lie in (1/|H|, 1) = ({1.0 / model.num_hypotheses:.4g}, 1); got {self.rho_bar}"
            )


def _argmax(scores) -> int:
    best = 0
    for u in range(1, len(scores)):
        if scores[u] > scores[best] + TIE_TOL * (1.0 + abs(scores[best])):
            best = u
    return best


def ejs_score(belief: Belief, u: int, model: ObservationModel) -> float:
    """Expected one-step ABLLR gain of query ``u``."""
    m = observation_marginal(belief, u, model)
    return float(sum(m[y] * reward(belief, u, y, model) for y in range(m.size) if m[y] > 0))


def ejs_select(belief: Belief, model: ObservationModel) -> PolicyDecision:
    scores = np.array([ejs_score(belief, u, model) for u in range(model.num_queries)])
    return PolicyDecision(_argmax(scores), scores)


def heu_score(belief: Belief, i: int, u: int, model: ObservationModel, payoff=None) -> float:
    """Alternate-belief-weighted KL of query ``u`` while verifying hypothesis ``i``."""
    payoff = payoff if payoff is not None else kl_payoff_matrix(model, i)
    weights = normalized_alternate(belief)[list(payoff.alternates)]
    return float(weights @ payoff.capped()[u])


def _verifying(belief: Belief, rho_bar: float) -> Optional[int]:
    i = leader(belief)
    return i if belief.rho[i] > rho_bar else None


def heu_select(belief: Belief, model: ObservationModel, config: PolicyConfig,
               payoffs: Optional[dict] = None) -> PolicyDecision:
    i = _verifying(belief, config.rho_bar)
    if i is None:
        return ejs_select(belief, model)
    payoff = payoffs[i] if payoffs is not None else kl_payoff_matrix(model, i)
    scores = np.array([heu_score(belief, i, u, model, payoff) for u in range(model.num_queries)])
    return PolicyDecision(_argmax(scores), scores)


class AlphaCache:
    """Equilibrium query mixtures, solved once per hypothesis on first use."""

    def __init__(self, model: ObservationModel, tol: float = DEFAULT_TOL):
        self._model = model
        self._tol = tol
        self._alphas = {}
        self._lock = threading.Lock()

    def __getitem__(self, i: int) -> np.ndarray:
        alpha = self._alphas.get(i)
        if alpha is None:
            with self._lock:
                alpha = self._alphas.get(i)
                if alpha is None:
                    alpha = optimal_rate(self._model, i, tol=self._tol).alpha
                    self._alphas[i] = alpha
        return alpha

    def cdf_table(self) -> np.ndarray:
        return kernels.sampling_cdf([self[i] for i in range(self._model.num_hypotheses)])


def ope_select(belief: Belief, model: ObservationModel, config: PolicyConfig,
               rng: np.random.Generator, cache: Optional[AlphaCache] = None) -> PolicyDecision:
    """Consumes exactly one uniform from ``rng``."""
    return _ope_from_draw(belief, model, config, rng.random(), cache or AlphaCache(model, config.game_tol))


def _ope_from_draw(belief, model, config, draw, cache):
    i = _verifying(belief, config.rho_bar)
    if i is None:
        return ejs_select(belief, model)
    cdf = kernels.sampling_cdf(cache[i])
    return PolicyDecision(int(np.argmax(draw < cdf)), cache[i])


def random_select(model: ObservationModel, rng: np.random.Generator) -> PolicyDecision:
    return PolicyDecision(_uniform_query(model.num_queries, rng.random()))


def _uniform_query(n_q, draw):
    return min(int(draw * n_q), n_q - 1)


def dqn_greedy_select(belief: Belief, network) -> PolicyDecision:
    from .dqn import augment, forward

    q = forward(network, augment(belief))
    return PolicyDecision(_argmax(q), q)


class Policy:
    """A configured policy bound to one observation model."""

    def __init__(self, config: PolicyConfig, model: ObservationModel):
        config.validate_for(model)
        self.config = config
        self.model = model
        self.name = config.kind
        self._alphas = AlphaCache(model, config.game_tol)
        self._payoffs = None
        if config.kind == "dqn":
            net = config.network
            if net.layer_dims[0] != 2 * model.num_hypotheses or net.layer_dims[-1] != model.num_queries:
                raise ValueError(
                    f"network dims {net.layer_dims} do not fit a model with "
                    f"|H|={model.num_hypotheses}, |U|={model.num_queries}"
                )

    def select(self, belief: Belief, draw: float) -> PolicyDecision:
        kind = self.config.kind
        if kind == "random":
            return PolicyDecision(_uniform_query(self.model.num_queries, draw))
        if kind == "ejs":
            return ejs_select(belief, self.model)
        if kind == "ope":
            return _ope_from_draw(belief, self.model, self.config, draw, self._alphas)
        if kind == "heu":
            if self._payoffs is None:
                self._payoffs = {i: kl_payoff_matrix(self.model, i) for i in range(self.model.num_hypotheses)}
            return heu_select(belief, self.model, self.config, self._payoffs)
        return dqn_greedy_select(belief, self.config.network)

    def kernel_args(self) -> dict:
        """Tables the batch simulation kernels need for this policy."""
        n_h, n_u = self.model.num_hypotheses, self.model.num_queries
        kind = self.config.kind
        args = {
            "kind": kernels.POLICY_CODES[kind],
            "rho_bar": float(self.config.rho_bar),
            "kl": np.zeros((n_h, n_u, n_h)),
            "alpha_cdf": np.ones((n_h, n_u)),
            "theta": np.zeros(1),
            "dims": np.zeros(1, dtype=np.int64),
        }
        if kind == "heu":
            args["kl"] = kl_tensor(self.model)
        elif kind == "ope":
            args["alpha_cdf"] = self._alphas.cdf_table()
        elif kind == "dqn":
            args["theta"] = self.config.network.theta
            args["dims"] = np.asarray(self.config.network.layer_dims, dtype=np.int64)
        return args


def make_policy(config: PolicyConfig | str, model: ObservationModel) -> Policy:
    if isinstance(config, str):
        config = PolicyConfig(config)
    return Policy(config, model)

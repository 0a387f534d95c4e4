"""Active sequential hypothesis testing: beliefs, query policies, optimal rates and DQN training."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    Belief,
    DegenerateObservationError,
    DimensionError,
    ModelError,
    ObservationModel,
    abllr,
    bayes_update,
    bllr,
    kl_divergence,
    observation_marginal,
    reward,
)
from .game import ConvergenceError, GameSolution, kl_payoff_matrix, optimal_rate, solve_zero_sum  # noqa: E402
from .policies import PolicyConfig, make_policy  # noqa: E402
from .dqn import QNetwork, TrainConfig, load_network, save_network, train  # noqa: E402
from .sim import evaluate_policy, query_frequency, rate_curve, run_episode, simulate  # noqa: E402
from .modelfile import dump_model, load_model, preset  # noqa: E402

__all__ = [
    "Belief", "DegenerateObservationError", "DimensionError", "ModelError", "ObservationModel",
    "abllr", "bayes_update", "bllr", "kl_divergence", "observation_marginal", "reward",
    "ConvergenceError", "GameSolution", "kl_payoff_matrix", "optimal_rate", "solve_zero_sum",
    "PolicyConfig", "make_policy", "QNetwork", "TrainConfig", "load_network", "save_network", "train",
    "evaluate_policy", "query_frequency", "rate_curve", "run_episode", "simulate",
    "dump_model", "load_model", "preset",
]

"""Episode simulation and Monte-Carlo confidence-rate curves.

Episode ``e`` under true hypothesis ``h`` with master seed ``s`` draws all of
its randomness from ``SeedSequence(s, spawn_key=(h, e))``: two uniforms per
step, the first for the policy and the second for the observation. Results
therefore do not depend on how episodes are split across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import kernels
from .game import optimal_rate
from .model import Belief, ObservationModel, bayes_update, bllr, reward
from .policies import Policy, PolicyConfig, make_policy

__all__ = [
    "EpisodeTrace",
    "EpisodeBatch",
    "RateCurve",
    "episode_rng",
    "sample_observation",
    "run_episode",
    "simulate",
    "rate_curve",
    "evaluate_policy",
    "query_frequency",
]


@dataclass
class EpisodeTrace:
    hypothesis: int
    queries: List[int]
    observations: List[int]
    beliefs: List[Belief]
    rewards: List[float]
    confidence_on_truth: List[float]


@dataclass
class EpisodeBatch:
    """Compact output of the batch kernels; row ``e`` is episode ``e``."""

    hypothesis: int
    confidence: np.ndarray  # (E, N+1): BLLR of the true hypothesis
    abllr: np.ndarray  # (E, N+1)
    queries: np.ndarray  # (E, N)
    observations: np.ndarray  # (E, N)

    @property
    def num_episodes(self) -> int:
        return self.queries.shape[0]

    @property
    def horizon(self) -> int:
        return self.queries.shape[1]

    @property
    def rewards(self) -> np.ndarray:
        return np.diff(self.abllr, axis=1)


@dataclass
class RateCurve:
    policy: str
    hypothesis: int
    grid: np.ndarray
    mean_rate: np.ndarray
    stderr: np.ndarray
    num_episodes: int
    bound: float

    def at(self, n: int) -> float:
        return float(self.mean_rate[n - int(self.grid[0])])


def episode_rng(seed: int, h: int, e: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(h, e)))


def sample_observation(model: ObservationModel, h: int, u: int, rng: np.random.Generator) -> int:
    return _inverse_cdf(model.probs[h, u], rng.random())


def _inverse_cdf(row, draw) -> int:
    return int(np.argmax(draw < kernels.sampling_cdf(row)))


def run_episode(policy: Policy, model: ObservationModel, h: int, prior: Belief, n_steps: int,
                rng: np.random.Generator) -> EpisodeTrace:
    """Step-by-step reference simulation of one episode with true hypothesis ``h``."""
    belief = prior
    trace = EpisodeTrace(h, [], [], [prior], [], [bllr(prior, h)])
    for _ in range(n_steps):
        d_policy, d_obs = rng.random(2)
        u = policy.select(belief, d_policy).query
        y = _inverse_cdf(model.probs[h, u], d_obs)
        trace.rewards.append(reward(belief, u, y, model))
        belief = bayes_update(belief, u, y, model)
        trace.queries.append(u)
        trace.observations.append(y)
        trace.beliefs.append(belief)
        trace.confidence_on_truth.append(bllr(belief, h))
    return trace


def _draws(seed, h, start, stop, n_steps):
    out = np.empty((stop - start, n_steps, 2))
    for k, e in enumerate(range(start, stop)):
        out[k] = episode_rng(seed, h, e).random((n_steps, 2))
    return out


def simulate(policy: Policy | PolicyConfig | str, model: ObservationModel, prior: Belief, h: int,
             n_steps: int, num_episodes: int, seed: int = 0, workers: int = 1,
             chunk: int = 2000) -> EpisodeBatch:
    if not isinstance(policy, Policy):
        policy = make_policy(policy, model)
    if not 0 <= h < model.num_hypotheses:
        raise IndexError(f"hypothesis index {h} out of range")
    if prior.rho[h] <= 0:
        raise ValueError(f"prior puts no mass on the true hypothesis {h}")
    args = policy.kernel_args()
    logp_t = np.ascontiguousarray(model.log_probs.transpose(1, 2, 0))
    obs_cdf = kernels.sampling_cdf(model.probs)
    log_prior = np.ascontiguousarray(prior.log_rho)
    conf = np.empty((num_episodes, n_steps + 1))
    abl = np.empty((num_episodes, n_steps + 1))
    queries = np.empty((num_episodes, n_steps), dtype=np.int64)
    obs = np.empty((num_episodes, n_steps), dtype=np.int64)
    k = kernels.impl()

    def run(span):
        a, b = span
        k.simulate_batch(
            args["kind"], logp_t, obs_cdf, log_prior, h, _draws(seed, h, a, b, n_steps),
            args["rho_bar"], args["kl"], args["alpha_cdf"], args["theta"], args["dims"],
            conf[a:b], abl[a:b], queries[a:b], obs[a:b],
        )

    spans = [(a, min(a + chunk, num_episodes)) for a in range(0, num_episodes, chunk)]
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, spans))
    else:
        for span in spans:
            run(span)
    return EpisodeBatch(h, conf, abl, queries, obs)


def rate_curve(batch: EpisodeBatch, bound: float = float("nan"), policy: str = "") -> RateCurve:
    """Per-n mean of (C_h(rho(n+1)) - C_h(rho(1))) / n with its standard error."""
    n = np.arange(1, batch.horizon + 1)
    rates = (batch.confidence[:, 1:] - batch.confidence[:, :1]) / n
    mean = rates.mean(axis=0)
    if batch.num_episodes > 1:
        stderr = rates.std(axis=0, ddof=1) / np.sqrt(batch.num_episodes)
    else:
        stderr = np.zeros_like(mean)
    return RateCurve(policy, batch.hypothesis, n, mean, stderr, batch.num_episodes, float(bound))


def evaluate_policy(policy: Policy | PolicyConfig | str, model: ObservationModel, prior: Optional[Belief],
                    h: int, n_steps: int, num_episodes: int, seed: int = 0, workers: int = 1) -> RateCurve:
    if not isinstance(policy, Policy):
        policy = make_policy(policy, model)
    prior = prior if prior is not None else Belief.uniform(model.num_hypotheses)
    batch = simulate(policy, model, prior, h, n_steps, num_episodes, seed=seed, workers=workers)
    bound = optimal_rate(model, h).value
    return rate_curve(batch, bound, policy.name)


def query_frequency(traces: EpisodeBatch | Sequence[EpisodeTrace], window: tuple,
                    num_queries: Optional[int] = None) -> np.ndarray:
    """Empirical query distribution over steps ``n1..n2`` (1-based, inclusive)."""
    n1, n2 = window
    if isinstance(traces, EpisodeBatch):
        q = traces.queries[:, n1 - 1 : n2].ravel()
    else:
        q = np.concatenate([np.asarray(t.queries[n1 - 1 : n2], dtype=np.int64) for t in traces])
    size = num_queries if num_queries is not None else (int(q.max()) + 1 if q.size else 1)
    counts = np.bincount(q, minlength=size).astype(np.float64)
    return counts / counts.sum() if counts.sum() > 0 else counts

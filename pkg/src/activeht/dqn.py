"""Deep Q-learning over augmented beliefs with experience replay.

The Q-network is a ReLU multilayer perceptron with a linear output layer.
Its parameters live in one flat vector; layer ``l`` stores its weight matrix
(``dims[l+1] x dims[l]``, row-major) followed by its bias.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import kernels
from .model import Belief, ObservationModel, normalized_alternate

__all__ = [
    "TrainingDivergenceError",
    "QNetwork",
    "ExperienceTuple",
    "ReplayMemory",
    "TrainConfig",
    "EpisodeLog",
    "augment",
    "forward",
    "q_target",
    "train_step",
    "train",
    "save_network",
    "load_network",
]

FORMAT_TAG = "activeht-qnetwork"
FORMAT_VERSION = 1


class TrainingDivergenceError(RuntimeError):
    def __init__(self, message, episode=None, step=None):
        super().__init__(message)
        self.episode = episode
        self.step = step


class QNetwork:
    """Immutable weights of the action-value approximator."""

    __slots__ = ("layer_dims", "theta")

    def __init__(self, layer_dims: Sequence[int], theta):
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError(f"invalid layer dims {dims}")
        theta = np.array(theta, dtype=np.float64).ravel()
        if theta.size != self.param_count(dims):
            raise ValueError(f"expected {self.param_count(dims)} parameters for {dims}, got {theta.size}")
        theta.setflags(write=False)
        self.layer_dims = dims
        self.theta = theta

    @staticmethod
    def param_count(dims) -> int:
        return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))

    @classmethod
    def zeros(cls, layer_dims) -> "QNetwork":
        return cls(layer_dims, np.zeros(cls.param_count(layer_dims)))

    @classmethod
    def initialize(cls, layer_dims, rng: np.random.Generator) -> "QNetwork":
        """Uniform weights in +-sqrt(6 / fan_in), zero biases."""
        parts = []
        for din, dout in zip(layer_dims[:-1], layer_dims[1:]):
            limit = math.sqrt(6.0 / din)
            parts.append(rng.uniform(-limit, limit, size=din * dout))
            parts.append(np.zeros(dout))
        return cls(layer_dims, np.concatenate(parts))

    def layers(self):
        """List of (W, b) views."""
        out, p = [], 0
        for din, dout in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            w = self.theta[p : p + din * dout].reshape(dout, din)
            p += din * dout
            out.append((w, self.theta[p : p + dout]))
            p += dout
        return out

    @property
    def dims_array(self) -> np.ndarray:
        return np.asarray(self.layer_dims, dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, QNetwork):
            return NotImplemented
        return self.layer_dims == other.layer_dims and np.array_equal(self.theta, other.theta)

    def __repr__(self):
        return f"QNetwork(layer_dims={self.layer_dims})"


@dataclass(frozen=True)
class ExperienceTuple:
    state: np.ndarray
    query: int
    next_state: np.ndarray
    reward: float


class ReplayMemory:
    """Fixed-capacity ring buffer of experience tuples stored as arrays."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.queries = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        # [size, head]; mutated in place by the training kernels
        self.cursor = np.zeros(2, dtype=np.int64)

    def __len__(self):
        return int(self.cursor[0])

    def push(self, tup: ExperienceTuple):
        head = int(self.cursor[1])
        self.states[head] = tup.state
        self.next_states[head] = tup.next_state
        self.queries[head] = tup.query
        self.rewards[head] = tup.reward
        self.cursor[1] = (head + 1) % self.capacity
        self.cursor[0] = min(self.cursor[0] + 1, self.capacity)

    def __getitem__(self, k: int) -> ExperienceTuple:
        if not 0 <= k < len(self):
            raise IndexError(k)
        return ExperienceTuple(self.states[k].copy(), int(self.queries[k]),
                               self.next_states[k].copy(), float(self.rewards[k]))

    def oldest_first(self) -> List[ExperienceTuple]:
        n = len(self)
        start = int(self.cursor[1]) if n == self.capacity else 0
        return [self[(start + k) % self.capacity] for k in range(n)]


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    zeta: float = 0.5
    epsilon: float = 0.8
    learning_rate: float = 1e-3
    episodes: int = 2000
    horizon: int = 50
    minibatch_size: int = 32
    epochs: int = 5
    capacity: int = 10_000
    hidden: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        for name in ("horizon", "minibatch_size", "epochs", "capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")

    def layer_dims(self, model: ObservationModel) -> tuple:
        return (2 * model.num_hypotheses, *self.hidden, model.num_queries)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass(frozen=True)
class EpisodeLog:
    episode: int
    cumulative_reward: float
    mean_loss: float


def augment(belief: Belief) -> np.ndarray:
    """Belief followed by the normalized belief over the non-leading hypotheses."""
    return np.concatenate([belief.rho, normalized_alternate(belief)])


def forward(network: QNetwork, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xs = np.ascontiguousarray(np.atleast_2d(x))
    if xs.shape[1] != network.layer_dims[0]:
        raise ValueError(f"input length {xs.shape[1]} != {network.layer_dims[0]}")
    out = np.asarray(kernels.impl().mlp_forward(network.theta, network.dims_array, xs))
    return out[0] if single else out


def q_target(network: QNetwork, tup: ExperienceTuple, gamma: float, zeta: float) -> float:
    """Relaxed Q-learning target Q + zeta (r + gamma max Q(s') - Q)."""
    q = forward(network, tup.state)[tup.query]
    q_next = forward(network, tup.next_state).max()
    return float(q + zeta * (tup.reward + gamma * q_next - q))


def loss_and_grad(network: QNetwork, states, queries, targets):
    """Mean squared error over the batch, on the selected outputs only."""
    return kernels.impl().selected_loss_grad(
        network.theta, network.dims_array, np.ascontiguousarray(states, dtype=np.float64),
        np.asarray(queries, dtype=np.int64), np.asarray(targets, dtype=np.float64),
    )


def train_step(network: QNetwork, states, queries, targets, learning_rate: float) -> QNetwork:
    with np.errstate(over="ignore", invalid="ignore"):
        loss, grad = loss_and_grad(network, states, queries, targets)
    if not math.isfinite(loss):
        raise TrainingDivergenceError(f"non-finite loss {loss}")
    theta = network.theta - learning_rate * np.asarray(grad)
    if not np.all(np.isfinite(theta)):
        raise TrainingDivergenceError("non-finite weights after gradient step")
    return QNetwork(network.layer_dims, theta)


def train(model: ObservationModel, prior: Belief, config: TrainConfig = TrainConfig(),
          rng: Optional[np.random.Generator] = None,
          log: Optional[list] = None, network: Optional[QNetwork] = None) -> QNetwork:
    """Deep Q-learning with experience replay on the belief MDP.

    Each step: epsilon-greedy query on the augmented belief, simulated
    observation and Bayes update, ABLLR-difference reward, replay insert,
    then ``epochs`` gradient steps of a copy of the network on one sampled
    minibatch against targets from the pre-copy weights. ``log`` (if given)
    receives one ``EpisodeLog`` per episode.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    dims = config.layer_dims(model)
    if network is None:
        network = QNetwork.initialize(dims, rng)
    elif network.layer_dims != dims:
        raise ValueError(f"network dims {network.layer_dims} != {dims}")
    theta = network.theta.copy()
    dims_arr = np.asarray(dims, dtype=np.int64)
    memory = ReplayMemory(config.capacity, 2 * model.num_hypotheses)
    logp_t = np.ascontiguousarray(model.log_probs.transpose(1, 2, 0))
    obs_cdf = kernels.sampling_cdf(model.probs)
    prior_cdf = kernels.sampling_cdf(prior.rho)
    log_prior = np.ascontiguousarray(prior.log_rho)
    k = kernels.impl()
    for ep in range(config.episodes):
        h = int(np.argmax(rng.random() < prior_cdf))
        draws = rng.random((config.horizon, 3 + config.minibatch_size))
        cum, loss, failed = k.train_episode(
            theta, dims_arr, memory.states, memory.queries, memory.next_states, memory.rewards,
            memory.cursor, logp_t, obs_cdf, log_prior, h, draws,
            config.epsilon, config.gamma, config.zeta, config.learning_rate, config.epochs,
        )
        if failed >= 0:
            raise TrainingDivergenceError(
                f"training diverged in episode {ep} at step {failed}", episode=ep, step=int(failed)
            )
        if log is not None:
            log.append(EpisodeLog(ep, float(cum), float(loss)))
    return QNetwork(dims, theta)


# --- persistence ---------------------------------------------------------------


def save_network(network: QNetwork, path) -> None:
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION}", "layer_dims " + " ".join(map(str, network.layer_dims))]
    for l, (w, b) in enumerate(network.layers()):
        lines.append(f"weight {l} {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
        lines.append(f"bias {l} {b.shape[0]}")
        lines.append(" ".join(repr(float(v)) for v in b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_network(path) -> QNetwork:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0].split() != [FORMAT_TAG, str(FORMAT_VERSION)]:
        raise ValueError(f"{path}: not a version-{FORMAT_VERSION} {FORMAT_TAG} file")
    head = lines[1].split()
    if head[0] != "layer_dims":
        raise ValueError(f"{path}: line 2 must list layer_dims")
    dims = tuple(int(t) for t in head[1:])
    parts, pos = [], 2
    for l, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
        if lines[pos].split() != ["weight", str(l), str(dout), str(din)]:
            raise ValueError(f"{path}: expected weight header for layer {l}, got {lines[pos]!r}")
        rows = [np.array(lines[pos + 1 + r].split(), dtype=np.float64) for r in range(dout)]
        parts.append(np.concatenate(rows))
        pos += 1 + dout
        if lines[pos].split() != ["bias", str(l), str(dout)]:
            raise ValueError(f"{path}: expected bias header for layer {l}, got {lines[pos]!r}")
        parts.append(np.array(lines[pos + 1].split(), dtype=np.float64))
        pos += 2
    return QNetwork(dims, np.concatenate(parts))

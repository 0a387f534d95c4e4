"""Observation models, beliefs, Bayes updates and confidence measures.

All logarithms are natural, so confidences and rates are in nats. A belief
keeps log-probabilities internally: the leader's complement ``1 - rho_h`` is
formed as a sum over the other hypotheses, never by subtraction, so log-odds
stay exact long after ``rho_h`` rounds to 1.0 in linear space.
"""

from __future__ import annotations

from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .kernels import LOGIT_MAX, RHO_MIN, safe_log

__all__ = [
    "RHO_MIN",
    "LOGIT_MAX",
    "ModelError",
    "DimensionError",
    "DegenerateObservationError",
    "ObservationModel",
    "Belief",
    "kl_divergence",
    "bllr",
    "abllr",
    "bayes_update",
    "observation_marginal",
    "reward",
    "normalized_alternate",
    "leader",
]

SUM_TOL = 1e-9


class ModelError(ValueError):
    """An observation model or belief violates its invariants."""


class DimensionError(ValueError):
    pass


class DegenerateObservationError(ValueError):
    """The observation has zero probability under every hypothesis with positive belief."""


class ObservationModel:
    """Tables ``probs[h, u, y]`` = probability of observing y for query u under h."""

    def __init__(
        self,
        probs,
        hypothesis_labels: Sequence[str] | None = None,
        query_labels: Sequence[str] | None = None,
        observation_labels: Sequence[str] | None = None,
    ):
        p = np.array(probs, dtype=np.float64)
        if p.ndim != 3:
            raise ModelError(f"probability table must be 3-dimensional (h, u, y), got shape {p.shape}")
        n_h, n_u, n_y = p.shape
        if n_h < 2 or n_u < 1 or n_y < 2:
            raise ModelError(f"need |H| >= 2, |U| >= 1, |Y| >= 2; got ({n_h}, {n_u}, {n_y})")
        self.hypothesis_labels = _labels(hypothesis_labels, n_h, "h")
        self.query_labels = _labels(query_labels, n_u, "u")
        self.observation_labels = _labels(observation_labels, n_y, "")
        if not np.all(np.isfinite(p)):
            raise ModelError("probability table contains non-finite entries")
        for h in range(n_h):
            for u in range(n_u):
                row = p[h, u]
                if np.any(row < 0) or np.any(row > 1):
                    raise ModelError(
                        f"entries for (h={self.hypothesis_labels[h]}, u={self.query_labels[u]}) "
                        f"must lie in [0, 1]: {row.tolist()}"
                    )
                if abs(row.sum() - 1.0) > SUM_TOL:
                    raise ModelError(
                        f"row (h={self.hypothesis_labels[h]}, u={self.query_labels[u]}) "
                        f"sums to {row.sum():.12g}, not 1"
                    )
        p.setflags(write=False)
        self.probs = p

    @property
    def num_hypotheses(self) -> int:
        return self.probs.shape[0]

    @property
    def num_queries(self) -> int:
        return self.probs.shape[1]

    @property
    def num_observations(self) -> int:
        return self.probs.shape[2]

    @cached_property
    def log_probs(self) -> np.ndarray:
        lp = safe_log(self.probs)
        lp.setflags(write=False)
        return lp

    def __eq__(self, other):
        if not isinstance(other, ObservationModel):
            return NotImplemented
        return (
            np.array_equal(self.probs, other.probs)
            and self.hypothesis_labels == other.hypothesis_labels
            and self.query_labels == other.query_labels
            and self.observation_labels == other.observation_labels
        )

    def __repr__(self):
        return (
            f"ObservationModel(|H|={self.num_hypotheses}, |U|={self.num_queries}, "
            f"|Y|={self.num_observations})"
        )


def _labels(labels, n, prefix):
    if labels is None:
        return tuple(f"{prefix}{k}" for k in range(n))
    labels = tuple(str(s) for s in labels)
    if len(labels) != n:
        raise ModelError(f"expected {n} labels, got {len(labels)}")
    if len(set(labels)) != n:
        raise ModelError(f"labels must be unique: {labels}")
    return labels


class Belief:
    """A point on the probability simplex over hypotheses."""

    __slots__ = ("_log",)

    def __init__(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        if rho.ndim != 1 or rho.size < 2:
            raise ModelError("belief must be a vector over at least two hypotheses")
        if np.any(~np.isfinite(rho)) or np.any(rho < 0):
            raise ModelError(f"belief entries must be finite and non-negative: {rho.tolist()}")
        total = rho.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise ModelError(f"belief sums to {total:.12g}, not 1")
        lr = safe_log(rho / total)
        lr.setflags(write=False)
        self._log = lr

    @classmethod
    def from_log(cls, log_rho) -> "Belief":
        lr = np.array(log_rho, dtype=np.float64)
        norm = logsumexp(lr)
        if not np.isfinite(norm):
            raise ModelError("log-belief has no finite mass")
        lr = lr - norm
        lr.setflags(write=False)
        obj = cls.__new__(cls)
        obj._log = lr
        return obj

    @classmethod
    def uniform(cls, n: int) -> "Belief":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, h: int) -> "Belief":
        rho = np.zeros(n)
        rho[h] = 1.0
        return cls(rho)

    @property
    def log_rho(self) -> np.ndarray:
        return self._log

    @property
    def rho(self) -> np.ndarray:
        return np.exp(self._log)

    def __len__(self):
        return self._log.size

    def __repr__(self):
        return f"Belief({np.array2string(self.rho, precision=6)})"


def _log_complements(lr: np.ndarray) -> np.ndarray:
    """log(1 - rho_h) for every h, from log-probabilities.

    Non-leaders subtract their own weight from the total (no cancellation,
    since the leader's weight remains); the leader sums the others directly.
    """
    i = int(np.argmax(lr))
    w = np.exp(lr - lr[i])
    others = np.sum(np.delete(w, i))
    with np.errstate(divide="ignore"):
        out = np.log(np.maximum(1.0 + others - w, 0.0)) + lr[i]
        out[i] = np.log(others) + lr[i]
    return out


def _log_complement(lr: np.ndarray, h: int) -> float:
    return float(_log_complements(lr)[h])


def _check_hypothesis(h, n):
    if not 0 <= h < n:
        raise IndexError(f"hypothesis index {h} out of range [0, {n})")


def kl_divergence(p, q) -> float:
    """D(p || q) in nats; +inf when p puts mass where q has none."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"distribution lengths differ: {p.shape} vs {q.shape}")
    support = p > 0
    if np.any(q[support] == 0):
        return float("inf")
    return max(float(np.sum(p[support] * np.log(p[support] / q[support]))), 0.0)


def bllr(belief: Belief, h: int) -> float:
    """Log-odds log(rho_h / (1 - rho_h)), bounded to [-LOGIT_MAX, LOGIT_MAX]."""
    lr = belief.log_rho
    _check_hypothesis(h, lr.size)
    return float(_bllr_all(lr)[h])


def _bllr_all(lr):
    floor = np.log(RHO_MIN)
    a = np.maximum(lr, floor)
    b = np.maximum(_log_complements(lr), floor)
    return np.clip(a - b, -LOGIT_MAX, LOGIT_MAX)


def abllr(belief: Belief) -> float:
    rho = belief.rho
    pos = rho > 0
    return float(np.sum(rho[pos] * _bllr_all(belief.log_rho)[pos]))


def observation_marginal(belief: Belief, u: int, model: ObservationModel) -> np.ndarray:
    return belief.rho @ model.probs[:, u, :]


def bayes_update(belief: Belief, u: int, y: int, model: ObservationModel) -> Belief:
    lr = belief.log_rho + model.log_probs[:, u, y]
    if not np.any(lr > -np.inf):
        raise DegenerateObservationError(
            f"observation {y} under query {u} has zero probability for every hypothesis in the support"
        )
    return Belief.from_log(lr)


def reward(belief: Belief, u: int, y: int, model: ObservationModel) -> float:
    """Instantaneous reward: change in ABLLR caused by observing y after query u."""
    return abllr(bayes_update(belief, u, y, model)) - abllr(belief)


def leader(belief: Belief) -> int:
    """Most likely hypothesis; lowest index on ties."""
    return int(np.argmax(belief.log_rho))


def normalized_alternate(belief: Belief) -> np.ndarray:
    lr = belief.log_rho
    i = leader(belief)
    lc = _log_complement(lr, i)
    out = np.zeros(lr.size)
    if lc == -np.inf:
        return out
    mask = np.arange(lr.size) != i
    out[mask] = np.exp(lr[mask] - lc)
    return out

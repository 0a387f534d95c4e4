"""Constants and table preparation shared by both kernel backends."""

import math

import numpy as np

# Belief entries below RHO_MIN (including exact zeros) are treated as RHO_MIN when
# forming log-odds, which bounds every BLLR to [-LOGIT_MAX, LOGIT_MAX].
RHO_MIN = 1e-300
LOGIT_MAX = math.log((1.0 - RHO_MIN) / RHO_MIN)

# Relative slack under which two scores count as tied (lowest index wins).
TIE_TOL = 1e-12

POLICY_RANDOM = 0
POLICY_EJS = 1
POLICY_OPE = 2
POLICY_HEU = 3
POLICY_DQN = 4

POLICY_CODES = {
    "random": POLICY_RANDOM,
    "ejs": POLICY_EJS,
    "ope": POLICY_OPE,
    "heu": POLICY_HEU,
    "dqn": POLICY_DQN,
}


def sampling_cdf(probs):
    """Cumulative table along the last axis for inverse-CDF sampling.

    The entry at the last positive-probability index and everything after it is
    forced to exactly 1, so rounding never selects a zero-mass trailing outcome.
    """
    probs = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(probs, axis=-1)
    flat_p = probs.reshape(-1, probs.shape[-1])
    flat_c = cdf.reshape(-1, probs.shape[-1])
    for row_p, row_c in zip(flat_p, flat_c):
        positive = np.flatnonzero(row_p > 0)
        last = positive[-1] if positive.size else probs.shape[-1] - 1
        row_c[last:] = 1.0
    return np.ascontiguousarray(cdf)


def safe_log(probs):
    probs = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log(probs)

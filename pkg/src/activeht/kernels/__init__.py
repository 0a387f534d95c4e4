"""Hot numeric kernels behind a backend switch.

The numba backend is used when numba imports and ``ACTIVEHT_DISABLE_NUMBA`` is
unset; setting that variable to ``1`` (or running without numba installed)
selects the vectorized numpy backend. Both expose the same functions::

    from activeht import kernels
    kernels.impl().simulate_batch(...)
"""

import os

from . import _np
from ._common import (  # noqa: F401
    LOGIT_MAX,
    POLICY_CODES,
    RHO_MIN,
    TIE_TOL,
    safe_log,
    sampling_cdf,
)

try:
    from . import _nb
except ImportError:  # pragma: no cover - numba missing
    _nb = None

_BACKENDS = {"numpy": _np}
if _nb is not None:
    _BACKENDS["numba"] = _nb


def _default_backend():
    flag = os.environ.get("ACTIVEHT_DISABLE_NUMBA", "").strip().lower()
    if flag in ("1", "true", "yes", "on") or _nb is None:
        return "numpy"
    return "numba"


_current = _default_backend()


def backend():
    """Name of the active backend."""
    return _current


def available():
    return sorted(_BACKENDS)


def use_backend(name):
    """Switch backends at runtime (mainly for tests and benchmarks)."""
    global _current
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available()}")
    _current = name


def impl(name=None):
    return _BACKENDS[name or _current]

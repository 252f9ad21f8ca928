"""Backend dispatch for the hot sequence kernels.

Two interchangeable implementations exist: `reference` (pure numpy) and
`jit` (the same source compiled with numba).  The active backend is
chosen at import time from the ``NERADAPT_BACKEND`` environment variable
(``numba`` or ``numpy``); unset means numba when importable, numpy
otherwise.  `set_backend` switches at runtime, which the benchmark in
`neradapt.bench` uses to time both paths in one process.
"""

import logging
import os

from . import reference

log = logging.getLogger(__name__)

_impl = reference
BACKEND = "numpy"


def available_backends():
    names = ["numpy"]
    try:
        import numba  # noqa: F401
        names.append("numba")
    except ImportError:
        pass
    return names


def set_backend(name):
    """Select the kernel implementation: 'numpy' or 'numba'."""
    global _impl, BACKEND
    if name == "numpy":
        _impl = reference
    elif name == "numba":
        from . import jit
        _impl = jit
    else:
        raise ValueError(f"unknown backend {name!r}; expected 'numpy' or 'numba'")
    BACKEND = name


def get_backend():
    return BACKEND


def warmup():
    """Force JIT compilation now so timed sections never pay it; numpy no-op."""
    if BACKEND == "numba":
        _impl.warmup()


def lstm_forward(x, wx, wh, b):
    return _impl.lstm_forward(x, wx, wh, b)


def lstm_backward(x, wx, wh, gates, h_seq, c_seq, dh_out):
    return _impl.lstm_backward(x, wx, wh, gates, h_seq, c_seq, dh_out)


def crf_log_partition(emissions, trans, start, stop):
    return _impl.crf_log_partition(emissions, trans, start, stop)


def crf_marginals(emissions, trans, start, stop):
    return _impl.crf_marginals(emissions, trans, start, stop)


def viterbi_path(emissions, trans, start, stop):
    return _impl.viterbi_path(emissions, trans, start, stop)


_requested = os.environ.get("NERADAPT_BACKEND", "").strip().lower()
if _requested == "numpy":
    pass
elif _requested == "numba":
    set_backend("numba")
else:
    if _requested:
        log.warning("ignoring unknown NERADAPT_BACKEND=%r", _requested)
    try:
        set_backend("numba")
    except ImportError:
        log.info("numba unavailable, using the pure-numpy kernels")

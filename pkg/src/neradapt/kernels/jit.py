"""Numba-compiled twins of the reference kernels.

The reference module is written in a numba-compatible subset, so the
accelerated versions are literally the same source compiled with
``@njit``.  Importing this module raises ImportError when numba is not
installed; callers go through `neradapt.kernels` which falls back to the
pure-numpy implementations.
"""

import numba

from . import reference as _ref

_jit = numba.njit(cache=True, fastmath=False)

lstm_forward = _jit(_ref.lstm_forward)
lstm_backward = _jit(_ref.lstm_backward)
crf_log_partition = _jit(_ref.crf_log_partition)
crf_marginals = _jit(_ref.crf_marginals)
viterbi_path = _jit(_ref.viterbi_path)


def warmup():
    """Compile every kernel on tiny inputs so later calls never pay JIT latency."""
    import numpy as np

    x = np.zeros((2, 3))
    wx = np.zeros((3, 8))
    wh = np.zeros((2, 8))
    b = np.zeros(8)
    h, c, g = lstm_forward(x, wx, wh, b)
    lstm_backward(x, wx, wh, g, h, c, np.zeros_like(h))
    em = np.zeros((2, 3))
    tr = np.zeros((3, 3))
    v = np.zeros(3)
    crf_log_partition(em, tr, v, v)
    crf_marginals(em, tr, v, v)
    viterbi_path(em, tr, v, v)

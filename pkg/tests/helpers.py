"""Shared test oracles: finite differences and brute-force CRF enumeration.

These stay deliberately independent of the implementations they check:
the CRF oracle enumerates every label path, the gradient oracle uses
central differences on the loss closure.
"""

import itertools

import numpy as np


def numeric_gradient(f, arr, h=1e-5):
    """Central-difference gradient of scalar f() w.r.t. arr, in place."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        up = f()
        arr[idx] = orig - h
        down = f()
        arr[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(a, b, floor=1e-6):
    """Worst-entry relative difference with an absolute floor.

    The floor keeps the comparison meaningful where the true gradient is
    near zero: central differences on an O(1) loss carry ~1e-11 absolute
    noise, so demanding a 1e-4 RELATIVE match of a 1e-8 gradient would
    measure that noise rather than correctness.  A genuinely missing
    term still fails, since |a - b| is then on the order of the gradient
    itself, far above floor * 1e-4.
    """
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def path_score(emissions, trans, start, stop, path):
    s = start[path[0]] + stop[path[-1]]
    for t, y in enumerate(path):
        s += emissions[t, y]
    for t in range(1, len(path)):
        s += trans[path[t - 1], path[t]]
    return s


def enumerate_paths(length, n_labels):
    return itertools.product(range(n_labels), repeat=length)


def brute_force_log_partition(emissions, trans, start, stop):
    length, n_labels = emissions.shape
    scores = [path_score(emissions, trans, start, stop, p)
              for p in enumerate_paths(length, n_labels)]
    m = max(scores)
    return m + np.log(sum(np.exp(s - m) for s in scores))


def brute_force_best_path(emissions, trans, start, stop):
    """Argmax path; ties resolved toward the lexicographically smallest path,
    which matches a lowest-index tie break at every decision."""
    length, n_labels = emissions.shape
    best, best_score = None, -np.inf
    for p in enumerate_paths(length, n_labels):
        s = path_score(emissions, trans, start, stop, p)
        if s > best_score:
            best, best_score = p, s
    return list(best)

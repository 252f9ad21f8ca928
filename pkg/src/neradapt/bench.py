"""Benchmark the hot kernels on both backends.

Runs each kernel on realistic default-geometry inputs (sentence of 40
tokens, nominal hidden 200, 11 labels) under the pure-numpy and the
numba implementations and prints per-call times plus speedups.

    python -m neradapt.bench [--repeats N] [--length L]
"""

import argparse
import time

import numpy as np

from . import kernels


def _cases(length, labels):
    rng = np.random.default_rng(0)
    d_in, half = 250, 100
    x = rng.normal(size=(length, d_in))
    wx = rng.normal(size=(d_in, 4 * half)) * 0.05
    wh = rng.normal(size=(half, 4 * half)) * 0.05
    b = np.zeros(4 * half)
    em = rng.normal(size=(length, labels))
    tr = rng.normal(size=(labels, labels))
    start = rng.normal(size=labels)
    stop = rng.normal(size=labels)

    def lstm_fwd_bwd():
        h, c, g = kernels.lstm_forward(x, wx, wh, b)
        kernels.lstm_backward(x, wx, wh, g, h, c, np.ones_like(h))

    return [
        ("lstm_forward", lambda: kernels.lstm_forward(x, wx, wh, b)),
        ("lstm_forward+backward", lstm_fwd_bwd),
        ("crf_log_partition", lambda: kernels.crf_log_partition(em, tr, start, stop)),
        ("crf_marginals", lambda: kernels.crf_marginals(em, tr, start, stop)),
        ("viterbi_path", lambda: kernels.viterbi_path(em, tr, start, stop)),
    ]


def _time(fn, repeats):
    fn()  # warm the path (and JIT, on the numba backend)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def run(repeats=50, length=40, labels=11):
    results = {}
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        kernels.warmup()
        results[backend] = {name: _time(fn, repeats)
                            for name, fn in _cases(length, labels)}
    names = [n for n, _ in _cases(length, labels)]
    width = max(len(n) for n in names)
    header = f"{'kernel':<{width}}" + "".join(f"  {b:>12}" for b in results)
    if len(results) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    for name in names:
        row = f"{name:<{width}}"
        times = [results[b][name] for b in results]
        row += "".join(f"  {t * 1e3:>9.3f} ms" for t in times)
        if len(times) == 2:
            row += f"  {times[0] / times[1]:>7.1f}x"
        print(row)
    return results


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--length", type=int, default=40)
    parser.add_argument("--labels", type=int, default=11)
    args = parser.parse_args(argv)
    run(args.repeats, args.length, args.labels)


if __name__ == "__main__":
    main()

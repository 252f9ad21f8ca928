"""Minimal reverse-mode differentiation on float64 numpy arrays.

A `Tensor` wraps an ndarray plus an optional backward closure; ops build
the graph eagerly and `backward` replays it in reverse topological
order.  Two fused primitives (`lstm`, `crf_nll`) wrap the sequence
kernels in `neradapt.kernels` with hand-derived gradients so the time
recursions run compiled instead of one tape node per step.

Everything is float64; set NERADAPT_CHECK_FINITE=1 (or flip
`CHECK_FINITE`) to assert finiteness after every op.
"""

import os

import numpy as np

from . import kernels as K

CHECK_FINITE = os.environ.get("NERADAPT_CHECK_FINITE", "0") == "1"


class ShapeError(ValueError):
    """Raised when op inputs have incompatible shapes."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents",
                 "_backward", "_backward_run")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None
        self._backward_run = False

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data, name):
    """A trainable leaf tensor."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    if CHECK_FINITE and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite values produced by an op")
    return out


def _accum(t, g):
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def backward(loss):
    """Populate .grad on every requires_grad tensor reachable from `loss`.

    `loss` must be scalar.  A second call on the same graph raises; build
    a fresh graph (or reset gradients and rebuild) instead.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if loss._backward_run:
        raise RuntimeError("backward already ran on this graph; rebuild it before calling again")
    loss._backward_run = True

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise and structural ops

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        # row-broadcast bias: (n, d) + (d,)
        if not (a.data.ndim == 2 and b.data.ndim == 1
                and a.data.shape[1] == b.data.shape[0]):
            raise ShapeError(f"add: incompatible shapes {a.data.shape} vs {b.data.shape}")

    def bw(g):
        _accum(a, g)
        _accum(b, g if a.data.shape == b.data.shape else g.sum(axis=0))

    return _make(a.data + b.data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: incompatible shapes {a.data.shape} vs {b.data.shape}")

    def bw(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _make(a.data * b.data, (a, b), bw)


def scale(a, s):
    a = as_tensor(a)
    s = float(s)

    def bw(g):
        _accum(a, g * s)

    return _make(a.data * s, (a,), bw)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: expected 1D/2D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} vs {b.data.shape}")

    def bw(g):
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            _accum(a, g @ bd.T)
            _accum(b, ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            _accum(a, bd @ g)
            _accum(b, np.outer(ad, g))
        elif ad.ndim == 2 and bd.ndim == 1:
            _accum(a, np.outer(g, bd))
            _accum(b, ad.T @ g)
        else:
            _accum(a, g * bd)
            _accum(b, g * ad)

    return _make(a.data @ b.data, (a, b), bw)


def concat(tensors, axis=-1):
    ts = [as_tensor(t) for t in tensors]
    datas = [t.data for t in ts]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, splits, axis=axis)):
            _accum(t, piece)

    return _make(np.concatenate(datas, axis=axis), ts, bw)


def stack_rows(tensors):
    """Stack 1D tensors into a 2D matrix, one per row."""
    ts = [as_tensor(t) for t in tensors]
    for t in ts:
        if t.data.ndim != 1:
            raise ShapeError(f"stack_rows: expected 1D rows, got shape {t.data.shape}")

    def bw(g):
        for i, t in enumerate(ts):
            _accum(t, g[i])

    return _make(np.stack([t.data for t in ts]), ts, bw)


def tanh(a):
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def bw(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), bw)


def sigmoid(a):
    a = as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), bw)


def log_sum_exp(a, axis=None):
    """Stable log(sum(exp(a))) over `axis` (None reduces everything)."""
    a = as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = np.sum(e, axis=axis, keepdims=True)
    out_data = np.squeeze(m + np.log(s), axis=axis) if axis is not None else (m + np.log(s)).reshape(())
    softmax = e / s

    def bw(g):
        if axis is None:
            _accum(a, g * softmax)
        else:
            _accum(a, np.expand_dims(g, axis) * softmax)

    return _make(out_data, (a,), bw)


def dropout(a, rate, rng=None, training=True):
    """Inverted dropout on the inputs; identity when eval or rate == 0."""
    a = as_tensor(a)
    if not training or rate == 0.0:
        def bw_id(g):
            _accum(a, g)
        return _make(a.data, (a,), bw_id)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)

    def bw(g):
        _accum(a, g * mask)

    return _make(a.data * mask, (a,), bw)


def gather_rows(m, indices):
    """Select rows of a 2D tensor; backward scatter-adds into the source."""
    m = as_tensor(m)
    idx = np.asarray(indices, dtype=np.int64)
    if m.data.ndim != 2:
        raise ShapeError(f"gather_rows: expected a matrix, got shape {m.data.shape}")

    def bw(g):
        if m.requires_grad:
            if m.grad is None:
                m.grad = np.zeros_like(m.data)
            np.add.at(m.grad, idx, g)

    return _make(m.data[idx], (m,), bw)


def row(m, i):
    """A single row of a 2D tensor as a 1D tensor."""
    m = as_tensor(m)
    i = int(i)

    def bw(g):
        if m.requires_grad:
            if m.grad is None:
                m.grad = np.zeros_like(m.data)
            m.grad[i] += g

    return _make(m.data[i], (m,), bw)


def tsum(a):
    a = as_tensor(a)

    def bw(g):
        _accum(a, np.full_like(a.data, float(g)))

    return _make(np.sum(a.data).reshape(()), (a,), bw)


# ---------------------------------------------------------------------------
# fused sequence primitives

def lstm(x, wx, wh, b, reverse=False):
    """Unidirectional LSTM over the rows of x; gradients via compiled BPTT.

    With reverse=True the sequence is processed right-to-left and the
    outputs are returned in original order, so out.data[t] is the state
    after reading tokens t..L-1.
    """
    x, wx, wh, b = as_tensor(x), as_tensor(wx), as_tensor(wh), as_tensor(b)
    if x.data.ndim != 2:
        raise ShapeError(f"lstm: expected (L, d_in) inputs, got shape {x.data.shape}")
    if b.data.shape[0] % 4 != 0 or wx.data.shape[1] != b.data.shape[0] \
            or wh.data.shape[1] != b.data.shape[0] or wh.data.shape[0] * 4 != b.data.shape[0] \
            or wx.data.shape[0] != x.data.shape[1]:
        raise ShapeError(
            f"lstm: inconsistent parameter shapes x={x.data.shape} wx={wx.data.shape} "
            f"wh={wh.data.shape} b={b.data.shape}")
    xd = np.ascontiguousarray(x.data[::-1]) if reverse else np.ascontiguousarray(x.data)
    h_seq, c_seq, gates = K.lstm_forward(xd, wx.data, wh.data, b.data)
    out_data = h_seq[::-1].copy() if reverse else h_seq

    def bw(g):
        dh = np.ascontiguousarray(g[::-1]) if reverse else np.ascontiguousarray(g)
        dx, dwx, dwh, db = K.lstm_backward(xd, wx.data, wh.data, gates, h_seq, c_seq, dh)
        _accum(x, dx[::-1] if reverse else dx)
        _accum(wx, dwx)
        _accum(wh, dwh)
        _accum(b, db)

    return _make(out_data, (x, wx, wh, b), bw)


def crf_nll(emissions, trans, start, stop, gold):
    """Negative log-likelihood of the gold path under a linear-chain CRF.

    Scalar output: log_partition - path_score(gold).  The backward pass
    uses posterior marginals from the forward-backward recursion, so the
    emission gradient is (marginal - onehot) and the transition gradient
    is (expected - observed) pair counts.
    """
    emissions = as_tensor(emissions)
    trans, start, stop = as_tensor(trans), as_tensor(start), as_tensor(stop)
    y = np.asarray(gold, dtype=np.int64)
    L, n_labels = emissions.data.shape
    if y.shape[0] != L:
        raise ShapeError(f"crf_nll: {L} emission rows but {y.shape[0]} gold labels")
    if y.min() < 0 or y.max() >= n_labels:
        raise ValueError("crf_nll: gold label index out of range")

    em = np.ascontiguousarray(emissions.data)
    log_z, unary, pair_sum = K.crf_marginals(em, trans.data, start.data, stop.data)
    gold_score = start.data[y[0]] + em[np.arange(L), y].sum() + stop.data[y[-1]]
    gold_pairs = np.zeros_like(trans.data)
    for t in range(1, L):
        gold_score += trans.data[y[t - 1], y[t]]
        gold_pairs[y[t - 1], y[t]] += 1.0

    def bw(g):
        s = float(g)
        d_em = unary.copy()
        d_em[np.arange(L), y] -= 1.0
        _accum(emissions, s * d_em)
        _accum(trans, s * (pair_sum - gold_pairs))
        d_start = unary[0].copy()
        d_start[y[0]] -= 1.0
        _accum(start, s * d_start)
        d_stop = unary[-1].copy()
        d_stop[y[-1]] -= 1.0
        _accum(stop, s * d_stop)

    return _make(np.float64(log_z - gold_score).reshape(()), (emissions, trans, start, stop), bw)

"""Pure-numpy sequence kernels: LSTM recursions, CRF dynamic programs.

These functions are the hot inner loops of the package.  They are written
in a numba-compatible subset of numpy so that `neradapt.kernels.jit` can
compile the very same source with `@njit`; keep them free of Python
objects, keyword defaults, and helper calls.

Conventions:
  * all float arrays are C-contiguous float64,
  * LSTM gate order along the last axis is (input, forget, cell, output),
  * a "nominal" hidden size h means h units per direction here; callers
    split h in half per direction when building bidirectional encoders.
"""

import numpy as np


def lstm_forward(x, wx, wh, b):
    """Run a unidirectional LSTM over a sequence.

    x: (L, d_in) inputs; wx: (d_in, 4h); wh: (h, 4h); b: (4h,).
    Returns (h_seq, c_seq, gates) with shapes (L, h), (L, h), (L, 4h);
    gates holds post-activation (i, f, g, o) needed by lstm_backward.
    Initial hidden and cell states are zero.
    """
    L = x.shape[0]
    n4 = b.shape[0]
    n = n4 // 4
    pre = np.dot(x, wx)
    h_seq = np.zeros((L, n))
    c_seq = np.zeros((L, n))
    gates = np.zeros((L, n4))
    h_prev = np.zeros(n)
    c_prev = np.zeros(n)
    for t in range(L):
        z = pre[t] + np.dot(h_prev, wh) + b
        gi = 1.0 / (1.0 + np.exp(-z[:n]))
        gf = 1.0 / (1.0 + np.exp(-z[n:2 * n]))
        gg = np.tanh(z[2 * n:3 * n])
        go = 1.0 / (1.0 + np.exp(-z[3 * n:]))
        c_prev = gf * c_prev + gi * gg
        h_prev = go * np.tanh(c_prev)
        gates[t, :n] = gi
        gates[t, n:2 * n] = gf
        gates[t, 2 * n:3 * n] = gg
        gates[t, 3 * n:] = go
        h_seq[t] = h_prev
        c_seq[t] = c_prev
    return h_seq, c_seq, gates


def lstm_backward(x, wx, wh, gates, h_seq, c_seq, dh_out):
    """Backpropagate through lstm_forward.

    dh_out: (L, h) gradient w.r.t. h_seq.  Returns (dx, dwx, dwh, db).
    The time loop only produces the pre-activation gradients; the weight
    gradients then fall out as whole-sequence matrix products.
    """
    L = x.shape[0]
    n = h_seq.shape[1]
    d_z = np.zeros((L, 4 * n))
    dh_next = np.zeros(n)
    dc_next = np.zeros(n)
    for t in range(L - 1, -1, -1):
        gi = gates[t, :n]
        gf = gates[t, n:2 * n]
        gg = gates[t, 2 * n:3 * n]
        go = gates[t, 3 * n:]
        tanh_c = np.tanh(c_seq[t])
        if t > 0:
            c_prev = c_seq[t - 1]
        else:
            c_prev = np.zeros(n)
        dh = dh_out[t] + dh_next
        d_o = dh * tanh_c
        dc = dh * go * (1.0 - tanh_c * tanh_c) + dc_next
        d_z[t, :n] = dc * gg * gi * (1.0 - gi)
        d_z[t, n:2 * n] = dc * c_prev * gf * (1.0 - gf)
        d_z[t, 2 * n:3 * n] = dc * gi * (1.0 - gg * gg)
        d_z[t, 3 * n:] = d_o * go * (1.0 - go)
        dh_next = np.dot(wh, d_z[t])
        dc_next = dc * gf
    h_prev = np.zeros((L, n))
    h_prev[1:] = h_seq[:L - 1]
    dx = np.dot(d_z, np.ascontiguousarray(wx.T))
    dwx = np.dot(np.ascontiguousarray(x.T), d_z)
    dwh = np.dot(np.ascontiguousarray(h_prev.T), d_z)
    db = np.sum(d_z, axis=0)
    return dx, dwx, dwh, db


def crf_log_partition(emissions, trans, start, stop):
    """Log of the summed exponentiated path scores (forward algorithm).

    emissions: (L, Y); trans: (Y, Y) with trans[i, j] scoring i -> j;
    start, stop: (Y,) boundary scores.  Max-subtracted log-sum-exp keeps
    the recursion stable for large potentials.
    """
    L = emissions.shape[0]
    Y = emissions.shape[1]
    alpha = start + emissions[0]
    for t in range(1, L):
        nxt = np.zeros(Y)
        for j in range(Y):
            col = alpha + trans[:, j]
            m = col.max()
            nxt[j] = emissions[t, j] + m + np.log(np.sum(np.exp(col - m)))
        alpha = nxt
    final = alpha + stop
    m = final.max()
    return m + np.log(np.sum(np.exp(final - m)))


def crf_marginals(emissions, trans, start, stop):
    """Forward-backward pass over the chain.

    Returns (log_partition, unary, pair_sum) where unary[t, j] is the
    posterior probability of label j at position t and pair_sum[i, j] is
    the posterior expected count of the i -> j transition summed over
    all adjacent positions.  These are exactly the partials of the log
    partition w.r.t. emissions and the transition matrix.
    """
    L = emissions.shape[0]
    Y = emissions.shape[1]
    alpha = np.zeros((L, Y))
    alpha[0] = start + emissions[0]
    for t in range(1, L):
        for j in range(Y):
            col = alpha[t - 1] + trans[:, j]
            m = col.max()
            alpha[t, j] = emissions[t, j] + m + np.log(np.sum(np.exp(col - m)))
    beta = np.zeros((L, Y))
    beta[L - 1] = stop
    for t in range(L - 2, -1, -1):
        for i in range(Y):
            row = trans[i] + emissions[t + 1] + beta[t + 1]
            m = row.max()
            beta[t, i] = m + np.log(np.sum(np.exp(row - m)))
    final = alpha[L - 1] + stop
    m = final.max()
    log_z = m + np.log(np.sum(np.exp(final - m)))
    unary = np.exp(alpha + beta - log_z)
    pair_sum = np.zeros((Y, Y))
    for t in range(L - 1):
        for i in range(Y):
            pair_sum[i] += np.exp(alpha[t, i] + trans[i] + emissions[t + 1]
                                  + beta[t + 1] - log_z)
    return log_z, unary, pair_sum


def viterbi_path(emissions, trans, start, stop):
    """Highest-scoring label sequence (max-product recursion).

    Ties are broken toward the lowest label index at every backpointer
    decision and at the final argmax.
    """
    L = emissions.shape[0]
    Y = emissions.shape[1]
    delta = np.zeros((L, Y))
    back = np.zeros((L, Y), dtype=np.int64)
    delta[0] = start + emissions[0]
    for t in range(1, L):
        for j in range(Y):
            best = delta[t - 1, 0] + trans[0, j]
            arg = 0
            for i in range(1, Y):
                v = delta[t - 1, i] + trans[i, j]
                if v > best:
                    best = v
                    arg = i
            delta[t, j] = best + emissions[t, j]
            back[t, j] = arg
    final = delta[L - 1] + stop
    best = final[0]
    arg = 0
    for j in range(1, Y):
        if final[j] > best:
            best = final[j]
            arg = j
    path = np.zeros(L, dtype=np.int64)
    path[L - 1] = arg
    for t in range(L - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path

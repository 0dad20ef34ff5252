"""Jit-compiled implementation of the dense-network kernels.

Same contract as `_kernels_numpy`; see `kernels` for the parameter layout.
Every row of the batch is processed independently with explicit loops, so
results do not depend on how rows are grouped into batches.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def forward_acts(params, sizes, x, drop_mask):
    batch = x.shape[0]
    n_layers = sizes.shape[0] - 1
    use_drop = drop_mask.shape[0] > 0

    total = 0
    for l in range(1, n_layers + 1):
        total += sizes[l]
    acts = np.empty((batch, total), np.float64)

    off = 0
    a_off = 0
    for l in range(n_layers):
        fin = sizes[l]
        fout = sizes[l + 1]
        w_off = off
        b_off = off + fin * fout
        off = b_off + fout
        prev_off = a_off - sizes[l]
        last = l == n_layers - 1
        for i in range(batch):
            for r in range(fout):
                s = params[b_off + r]
                wrow = w_off + r * fin
                if l == 0:
                    for c in range(fin):
                        s += params[wrow + c] * x[i, c]
                else:
                    for c in range(fin):
                        s += params[wrow + c] * acts[i, prev_off + c]
                if last:
                    if s >= 0.0:
                        v = 1.0 / (1.0 + np.exp(-s))
                    else:
                        e = np.exp(s)
                        v = e / (1.0 + e)
                else:
                    v = s if s > 0.0 else 0.0
                acts[i, a_off + r] = v
        if use_drop and l == n_layers - 2:
            for i in range(batch):
                for r in range(fout):
                    acts[i, a_off + r] *= drop_mask[i, r]
        a_off += fout
    return acts


@njit(cache=True)
def backward_acts(params, sizes, x, acts, drop_mask, upstream):
    batch = x.shape[0]
    n_layers = sizes.shape[0] - 1
    use_drop = drop_mask.shape[0] > 0

    offs_w = np.empty(n_layers, np.int64)
    offs_b = np.empty(n_layers, np.int64)
    offs_a = np.empty(n_layers, np.int64)
    off = 0
    a_off = 0
    for l in range(n_layers):
        offs_w[l] = off
        offs_b[l] = off + sizes[l] * sizes[l + 1]
        off = offs_b[l] + sizes[l + 1]
        offs_a[l] = a_off
        a_off += sizes[l + 1]

    grads = np.zeros(params.shape[0], np.float64)

    width = 0
    for l in range(n_layers + 1):
        if sizes[l] > width:
            width = sizes[l]
    d_cur = np.empty(width, np.float64)
    d_prev = np.empty(width, np.float64)

    for i in range(batch):
        for r in range(sizes[n_layers]):
            o = acts[i, offs_a[n_layers - 1] + r]
            d_cur[r] = upstream[i, r] * o * (1.0 - o)
        for l in range(n_layers - 1, -1, -1):
            fin = sizes[l]
            fout = sizes[l + 1]
            w0 = offs_w[l]
            b0 = offs_b[l]
            for r in range(fout):
                dr = d_cur[r]
                grads[b0 + r] += dr
                wrow = w0 + r * fin
                if l == 0:
                    for c in range(fin):
                        grads[wrow + c] += dr * x[i, c]
                else:
                    ap = offs_a[l - 1]
                    for c in range(fin):
                        grads[wrow + c] += dr * acts[i, ap + c]
            if l == 0:
                break
            ap = offs_a[l - 1]
            for c in range(fin):
                s = 0.0
                for r in range(fout):
                    s += d_cur[r] * params[w0 + r * fin + c]
                # stored activations are post-dropout; a zeroed unit keeps
                # gradient zero and a kept unit picks up the mask factor
                g = 1.0 if acts[i, ap + c] > 0.0 else 0.0
                if use_drop and l - 1 == n_layers - 2:
                    g *= drop_mask[i, c]
                d_prev[c] = s * g
            tmp = d_cur
            d_cur = d_prev
            d_prev = tmp
    return grads

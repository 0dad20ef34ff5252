"""Vectorized numpy implementation of the dense-network kernels.

Same contract as `_kernels_numba`; see `kernels` for the parameter layout.
"""

import numpy as np


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _layer_views(params, sizes):
    views = []
    off = 0
    for l in range(len(sizes) - 1):
        fin, fout = int(sizes[l]), int(sizes[l + 1])
        w = params[off : off + fin * fout].reshape(fout, fin)
        off += fin * fout
        b = params[off : off + fout]
        off += fout
        views.append((w, b))
    return views


def forward_acts(params, sizes, x, drop_mask):
    n_layers = len(sizes) - 1
    use_drop = drop_mask.size > 0
    blocks = []
    a = x
    for l, (w, b) in enumerate(_layer_views(params, sizes)):
        z = a @ w.T + b
        if l == n_layers - 1:
            a = _stable_sigmoid(z)
        else:
            a = np.maximum(z, 0.0)
            if use_drop and l == n_layers - 2:
                a = a * drop_mask
        blocks.append(a)
    return np.concatenate(blocks, axis=1)


def backward_acts(params, sizes, x, acts, drop_mask, upstream):
    n_layers = len(sizes) - 1
    use_drop = drop_mask.size > 0
    views = _layer_views(params, sizes)

    starts = np.concatenate(([0], np.cumsum(sizes[1:])))
    block = [acts[:, starts[l] : starts[l + 1]] for l in range(n_layers)]

    grads = np.zeros_like(params)
    g_views = _layer_views(grads, sizes)

    out = block[-1]
    delta = upstream * out * (1.0 - out)
    for l in range(n_layers - 1, -1, -1):
        inp = x if l == 0 else block[l - 1]
        gw, gb = g_views[l]
        gw += delta.T @ inp
        gb += delta.sum(axis=0)
        if l == 0:
            break
        w, _ = views[l]
        gate = (block[l - 1] > 0.0).astype(np.float64)
        if use_drop and l - 1 == n_layers - 2:
            # stored activations are post-dropout; the mask factor belongs to
            # the derivative as well
            gate = gate * drop_mask
        delta = (delta @ w) * gate
    return grads

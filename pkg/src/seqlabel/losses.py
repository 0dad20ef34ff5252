"""Training losses and their parameter gradients.

Gradients are exact for the clamped objectives: wherever a probability factor
is clipped to [EPS, 1 - EPS], the derivative through the clip is zero, and
gradient checks against finite differences hold to first order.

The sequential losses operate on a conditioning net directly (the marginal
stage is frozen while the integrator trains); model-level wrappers with the
same semantics are provided for single instances.
"""

import numpy as np

from . import kernels
from .errors import ShapeError
from .model import EPS, Model, clamp_prob


def _bce_parts(p, t):
    """Elementwise cross-entropy and its derivative w.r.t. the probability."""
    pc = clamp_prob(p)
    loss = -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))
    inside = (p > EPS) & (p < 1.0 - EPS)
    grad = np.where(inside, (pc - t) / (pc * (1.0 - pc)), 0.0)
    return loss, grad


def base_bce_loss(marginals, target):
    """Mean binary cross-entropy over labels and its gradient w.r.t. marginals."""
    p = np.asarray(marginals, dtype=np.float64)
    t = np.asarray(target, dtype=bool).astype(np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ShapeError("marginals and target must be 1-d and the same length")
    loss, grad = _bce_parts(p, t)
    return float(np.mean(loss)), grad / len(p)


def bce_loss_batch(base_net, X, Y, drop_mask=None):
    """Mean BCE of a marginal net over a batch, with flat parameter gradient."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=bool).astype(np.float64)
    acts = kernels.forward_acts(base_net.params, base_net.layer_sizes, X, drop_mask)
    p = acts[:, acts.shape[1] - base_net.n_out :]
    if p.shape != Y.shape:
        raise ShapeError(f"targets must be {p.shape}, got {Y.shape}")
    loss, grad = _bce_parts(p, Y)
    upstream = grad / Y.size
    grads = kernels.backward_acts(
        base_net.params, base_net.layer_sizes, X, acts, drop_mask, upstream
    )
    return float(np.mean(loss)), grads


def _prefix_rows(contexts, bit_targets, n):
    """One conditioning row per (sample, step), lower-triangular prefixes."""
    batch = contexts.shape[0]
    tri = (np.arange(n)[None, :] < np.arange(n)[:, None]).astype(np.float64)
    values = (bit_targets[:, None, :] * tri[None, :, :]).reshape(batch * n, n)
    masks = np.broadcast_to(tri, (batch, n, n)).reshape(batch * n, n)
    rep = np.repeat(contexts, n, axis=0)
    return np.concatenate([rep, values, masks], axis=1)


def seq_nll_batch(cond_net, n, contexts, targets, drop_mask=None):
    """Mean negative log likelihood of complete valuations, with gradient.

    `contexts` is (batch, d), `targets` (batch, n) bool. The gradient is with
    respect to the conditioning net only. `drop_mask`, when given, must cover
    the (batch * n) stacked step rows.
    """
    contexts = np.asarray(contexts, dtype=np.float64)
    targets = np.asarray(targets, dtype=bool)
    batch = contexts.shape[0]
    if targets.shape != (batch, n):
        raise ShapeError(f"targets must be ({batch}, {n}), got {targets.shape}")
    bits = targets.astype(np.float64)
    rows = _prefix_rows(contexts, bits, n)
    acts = kernels.forward_acts(cond_net.params, cond_net.layer_sizes, rows, drop_mask)
    c = acts[:, -1]
    tb = bits.reshape(-1)
    raw = np.where(tb > 0.5, c, 1.0 - c)
    term = clamp_prob(raw)
    loss = -np.sum(np.log(term)) / batch
    inside = (raw > EPS) & (raw < 1.0 - EPS)
    sign = np.where(tb > 0.5, 1.0, -1.0)
    upstream = np.where(inside, -sign / (term * batch), 0.0)
    grads = kernels.backward_acts(
        cond_net.params, cond_net.layer_sizes, rows, acts, drop_mask, upstream[:, None]
    )
    return float(loss), grads


def supervised_loss(model: Model, context, target, drop_mask=None):
    """Negative log likelihood of one valuation under the sequential model."""
    context = np.asarray(context, dtype=np.float64)
    target = np.asarray(target, dtype=bool)
    if target.shape != (model.n,):
        raise ShapeError(f"expected {model.n} labels, got {target.shape}")
    return seq_nll_batch(model.cond, model.n, context[None, :], target[None, :], drop_mask)


def compute_masks(valid_valuations, invalid_valuations) -> np.ndarray:
    """Per-step flags for invalid valuations: 1 where the prefix is already wrong.

    Position j of row i is 0 exactly when the first j+1 entries of invalid
    valuation i coincide with the first j+1 entries of some valid valuation
    (the step was locally indistinguishable from a correct one), else 1.
    """
    invalid = [tuple(bool(b) for b in v) for v in invalid_valuations]
    valid = [tuple(bool(b) for b in v) for v in valid_valuations]
    if not invalid:
        return np.zeros((0, 0), dtype=bool)
    n = len(invalid[0])
    if any(len(v) != n for v in invalid) or any(len(v) != n for v in valid):
        raise ShapeError("all valuations must have the same length")
    ok_prefixes = {v[: j + 1] for v in valid for j in range(n)}
    masks = np.empty((len(invalid), n), dtype=bool)
    for i, v in enumerate(invalid):
        for j in range(n):
            masks[i, j] = v[: j + 1] not in ok_prefixes
    return masks


def constraint_loss_on_net(cond_net, n, context, invalid, masks, drop_mask=None):
    """Masked log-likelihood of constraint-violating valuations, with gradient.

    The sum of log factors over flagged steps is returned as-is; minimizing it
    drives the flagged steps toward probability zero.
    """
    context = np.asarray(context, dtype=np.float64)
    count = len(invalid)
    if count == 0:
        return 0.0, np.zeros_like(cond_net.params)
    bits = np.array([[1.0 if b else 0.0 for b in v] for v in invalid])
    if bits.shape != (count, n) or masks.shape != (count, n):
        raise ShapeError("invalid valuations and masks must be (count, n)")
    rows = _prefix_rows(np.broadcast_to(context, (count, len(context))), bits, n)
    acts = kernels.forward_acts(cond_net.params, cond_net.layer_sizes, rows, drop_mask)
    c = acts[:, -1]
    tb = bits.reshape(-1)
    mb = masks.astype(np.float64).reshape(-1)
    raw = np.where(tb > 0.5, c, 1.0 - c)
    term = clamp_prob(raw)
    loss = float(np.sum(mb * np.log(term)))
    inside = (raw > EPS) & (raw < 1.0 - EPS)
    sign = np.where(tb > 0.5, 1.0, -1.0)
    upstream = np.where(inside, mb * sign / term, 0.0)
    grads = kernels.backward_acts(
        cond_net.params, cond_net.layer_sizes, rows, acts, drop_mask, upstream[:, None]
    )
    return loss, grads


def constraint_loss(model: Model, context, valid, invalid, drop_mask=None):
    """Constraint loss for one input given already-split decoded valuations."""
    if len(invalid) == 0:
        return 0.0, np.zeros_like(model.cond.params)
    masks = compute_masks(valid, invalid)
    return constraint_loss_on_net(model.cond, model.n, context, invalid, masks, drop_mask)

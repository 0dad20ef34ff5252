"""Decoders: turn a trained sequential model and one context into valuations.

All decoders walk label positions left to right. Scores are log probabilities
built from the same clamped factors the joint scorer uses, added one step at
a time, so a decoded hypothesis carries exactly the score the scorer assigns
it. Ties in score break lexicographically (False before True), which keeps
every decoder deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet, sat_with_prefix
from .errors import ContractError, EnumerationCapError, ShapeError
from .model import Model, clamp_prob, enumerate_valuations, joint_logprob_seq_batch

ENUM_CAP = 20
DEFAULT_BEAM_WIDTH = 4


@dataclass(frozen=True)
class SamplingStrategy:
    """How ancestral sampling picks each bit: argmax or a Bernoulli draw."""

    kind: str = "greedy"
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("greedy", "bernoulli"):
            raise ContractError(f"unknown sampling kind {self.kind!r}")
        if self.kind == "bernoulli" and self.seed is None:
            raise ContractError("bernoulli sampling needs a seed")


def _check_context(model: Model, context) -> np.ndarray:
    context = np.asarray(context, dtype=np.float64)
    if context.shape != (model.context_dim,):
        raise ShapeError(f"expected context of length {model.context_dim}, got {context.shape}")
    return context


def ancestral_sample(model: Model, context, strategy: SamplingStrategy) -> np.ndarray:
    """One valuation sampled step by step from the conditional chain."""
    context = _check_context(model, context)
    rng = np.random.default_rng(strategy.seed) if strategy.kind == "bernoulli" else None
    bits: list[bool] = []
    ctx = context[None, :]
    for _ in range(model.n):
        row = np.array([[1.0 if b else 0.0 for b in bits]])
        c = float(model.cond_step_batch(ctx, row)[0])
        if strategy.kind == "greedy":
            bits.append(c > 0.5)
        else:
            bits.append(bool(rng.random() < c))
    return np.array(bits, dtype=bool)


def _expand(model: Model, context, beams):
    """Score all children of the current beam entries, one net call."""
    width = len(beams)
    j = len(beams[0][0])
    rows = np.array(
        [[1.0 if b else 0.0 for b in prefix] for prefix, _ in beams], dtype=np.float64
    ).reshape(width, j)
    ctx = np.broadcast_to(context, (width, len(context)))
    c = model.cond_step_batch(ctx, rows)
    log_true = np.log(clamp_prob(c))
    log_false = np.log(clamp_prob(1.0 - c))
    children = []
    for i, (prefix, logp) in enumerate(beams):
        children.append((prefix + (False,), logp + float(log_false[i])))
        children.append((prefix + (True,), logp + float(log_true[i])))
    return children


def _finish(beams):
    return [(np.array(prefix, dtype=bool), logp) for prefix, logp in beams]


def beam_search(model: Model, context, k: int):
    """Top-k valuations by beam search, as (valuation, logp), best first."""
    if k < 1:
        raise ContractError("beam width must be at least 1")
    context = _check_context(model, context)
    beams = [((), 0.0)]
    for _ in range(model.n):
        children = _expand(model, context, beams)
        children.sort(key=lambda e: (-e[1], e[0]))
        beams = children[:k]
    return _finish(beams)


def beam_search_sat(model: Model, context, cs: ConstraintSet, k: int):
    """Beam search that discards constraint-unsatisfiable prefixes before pruning.

    A prefix is dropped the first time no completion of it can satisfy the
    constraints, so only satisfying valuations can ever be returned. The
    constraint set itself must be satisfiable.
    """
    if k < 1:
        raise ContractError("beam width must be at least 1")
    context = _check_context(model, context)
    if cs.n_vars != model.n:
        raise ShapeError(f"constraints cover {cs.n_vars} variables, model has {model.n} labels")
    if not sat_with_prefix(cs, ()):
        raise ContractError("constraint set is unsatisfiable")
    beams = [((), 0.0)]
    for _ in range(model.n):
        children = _expand(model, context, beams)
        children = [e for e in children if sat_with_prefix(cs, e[0])]
        children.sort(key=lambda e: (-e[1], e[0]))
        beams = children[:k]
    return _finish(beams)


def exact_topk(model: Model, context, k: int, cap: int = ENUM_CAP):
    """Exact top-k by full enumeration; refuses more than `cap` labels."""
    if k < 1:
        raise ContractError("k must be at least 1")
    context = _check_context(model, context)
    n = model.n
    if n > cap:
        raise EnumerationCapError(f"exact enumeration over n={n} labels exceeds the cap of {cap}")
    valuations = enumerate_valuations(n)
    contexts = np.broadcast_to(context, (len(valuations), len(context)))
    logps = joint_logprob_seq_batch(model, contexts, valuations)
    order = np.argsort(-logps, kind="stable")[: min(k, len(valuations))]
    return [(valuations[i].copy(), float(logps[i])) for i in order]


def independent_topk(marginals, k: int, cap: int = ENUM_CAP):
    """Top-k under the independence product of marginals, as (valuation, prob).

    This is the decoder a marginal-only model supports; it ignores any
    sequential stage and exists for head-to-head comparisons.
    """
    if k < 1:
        raise ContractError("k must be at least 1")
    marginals = np.asarray(marginals, dtype=np.float64)
    n = len(marginals)
    if n > cap:
        raise EnumerationCapError(f"exact enumeration over n={n} labels exceeds the cap of {cap}")
    valuations = enumerate_valuations(n)
    probs = np.prod(np.where(valuations, marginals, 1.0 - marginals), axis=1)
    order = np.argsort(-probs, kind="stable")[: min(k, len(valuations))]
    return [(valuations[i].copy(), float(probs[i])) for i in order]


def valuation_str(valuation) -> str:
    return "".join("1" if b else "0" for b in valuation)


def decode_records(results) -> list[dict]:
    """JSON-friendly form of a decoder result list."""
    return [{"valuation": valuation_str(v), "score": s} for v, s in results]

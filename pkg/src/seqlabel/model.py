"""Probabilistic models over binary label vectors.

Two variants share one decoding interface. `BaseSeqModel` first maps features
to per-label marginal probabilities (the context), then a second network
consumes those marginals plus a growing prefix of decided labels and emits
the probability of the next label being true. `SeqOnlyModel` skips the
marginal stage and conditions directly on the raw features.

The conditioning network always sees `[context | prefix values | known mask]`
where the value channel is zero-padded past the prefix and the mask flags
which positions are decided. Label positions may be a permutation of the
dataset's label columns; `label_order[i]` is the dataset column decoded at
step i, and constraint variables refer to post-permutation positions.

Joint probabilities are accumulated in log space, one step at a time, with
every factor clamped to [EPS, 1 - EPS] before the log.
"""

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import kernels
from .errors import ContractError, ParseError, ShapeError
from .nnet import DenseNet, load_net, save_net

EPS = 1e-7

BUNDLE_MAGIC = b"SEQLABEL-BUNDLE-1\n"

# Documentation aliases: a valuation is a complete (n,) bool vector, a prefix
# valuation its first j entries, a marginal assignment an (n,) float vector
# of per-label probabilities.
Valuation = np.ndarray
PrefixValuation = np.ndarray
MarginalAssignment = np.ndarray


def clamp_prob(p):
    return np.clip(p, EPS, 1.0 - EPS)


def _check_label_order(label_order, n) -> np.ndarray:
    order = np.asarray(label_order, dtype=np.int64)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise ShapeError(f"label_order must be a permutation of 0..{n - 1}")
    return order


def encode_rows(contexts, values, masks) -> np.ndarray:
    """Stack context, value and mask channels into conditioning-net inputs."""
    return np.concatenate([contexts, values, masks], axis=1)


def encode_cond_input(marginals, prefix) -> np.ndarray:
    """Single conditioning-net input row for a marginal-context model.

    The row is `[marginals | prefix values zero-padded to n | known mask]`,
    length 3n. The prefix must leave at least one label undecided.
    """
    marginals = np.asarray(marginals, dtype=np.float64)
    n = len(marginals)
    if np.any(marginals < 0.0) or np.any(marginals > 1.0):
        raise ContractError("marginals must lie in [0, 1]")
    j = len(prefix)
    if j >= n:
        raise ContractError(f"prefix of length {j} leaves no label to predict (n={n})")
    values = np.zeros(n)
    masks = np.zeros(n)
    for i, bit in enumerate(prefix):
        values[i] = 1.0 if bit else 0.0
        masks[i] = 1.0
    return np.concatenate([marginals, values, masks])


def _step_rows(contexts, prefix_bits, n) -> np.ndarray:
    """Conditioning rows for a batch of equal-length prefixes."""
    batch, j = prefix_bits.shape
    values = np.zeros((batch, n))
    masks = np.zeros((batch, n))
    if j:
        values[:, :j] = prefix_bits
        masks[:, :j] = 1.0
    return encode_rows(contexts, values, masks)


def _cond_forward(cond: DenseNet, rows) -> np.ndarray:
    acts = kernels.forward_acts(cond.params, cond.layer_sizes, rows, None)
    return acts[:, -1]


@dataclass
class BaseSeqModel:
    """Marginal network feeding a prefix-conditioning network."""

    base: DenseNet
    cond: DenseNet
    label_order: np.ndarray = None

    def __post_init__(self):
        n = self.base.n_out
        if self.cond.n_out != 1:
            raise ShapeError("conditioning net must have one output")
        if self.cond.n_in != 3 * n:
            raise ShapeError(
                f"conditioning net must take 3n={3 * n} inputs, takes {self.cond.n_in}"
            )
        if self.label_order is None:
            self.label_order = np.arange(n, dtype=np.int64)
        self.label_order = _check_label_order(self.label_order, n)

    @property
    def n(self) -> int:
        return self.base.n_out

    @property
    def m(self) -> int:
        return self.base.n_in

    @property
    def kind(self) -> str:
        return "base-seq"

    @property
    def context_dim(self) -> int:
        return self.n

    def context(self, x) -> np.ndarray:
        return base_predict(self, x)

    def context_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        acts = kernels.forward_acts(self.base.params, self.base.layer_sizes, X, None)
        raw = acts[:, acts.shape[1] - self.n :]
        return raw[:, self.label_order]

    def cond_step_batch(self, contexts, prefix_bits) -> np.ndarray:
        """Probability of the next label for equal-length prefix rows."""
        return _cond_forward(self.cond, _step_rows(contexts, prefix_bits, self.n))


@dataclass
class SeqOnlyModel:
    """Prefix-conditioning network over raw features, no marginal stage."""

    cond: DenseNet
    n: int
    label_order: np.ndarray = None

    def __post_init__(self):
        if self.n < 1:
            raise ShapeError("need at least one label")
        if self.cond.n_out != 1:
            raise ShapeError("conditioning net must have one output")
        if self.cond.n_in <= 2 * self.n:
            raise ShapeError(
                f"conditioning net takes {self.cond.n_in} inputs, needs more than 2n={2 * self.n}"
            )
        if self.label_order is None:
            self.label_order = np.arange(self.n, dtype=np.int64)
        self.label_order = _check_label_order(self.label_order, self.n)

    @property
    def m(self) -> int:
        return self.cond.n_in - 2 * self.n

    @property
    def kind(self) -> str:
        return "seq-only"

    @property
    def context_dim(self) -> int:
        return self.m

    def context(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.m,):
            raise ShapeError(f"expected {self.m} features, got {x.shape}")
        return x

    def context_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.m:
            raise ShapeError(f"expected (batch, {self.m}) features, got {X.shape}")
        return X

    def cond_step_batch(self, contexts, prefix_bits) -> np.ndarray:
        return _cond_forward(self.cond, _step_rows(contexts, prefix_bits, self.n))


Model = Union[BaseSeqModel, SeqOnlyModel]


def base_predict(model: BaseSeqModel, x) -> np.ndarray:
    """Marginal vector for one input, reordered to model label positions."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.m,):
        raise ShapeError(f"expected {model.m} features, got {x.shape}")
    return model.context_batch(x[None, :])[0]


def cond_predict(model: BaseSeqModel, marginals, prefix) -> float:
    """Probability that the label after `prefix` is true, given marginals."""
    if len(marginals) != model.n:
        raise ShapeError(f"expected {model.n} marginals, got {len(marginals)}")
    row = encode_cond_input(marginals, prefix)
    return float(_cond_forward(model.cond, row[None, :])[0])


def seq_only_cond_predict(model: SeqOnlyModel, x, prefix) -> float:
    """Probability that the label after `prefix` is true, given raw features."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.m,):
        raise ShapeError(f"expected {model.m} features, got {x.shape}")
    j = len(prefix)
    if j >= model.n:
        raise ContractError(f"prefix of length {j} leaves no label to predict (n={model.n})")
    bits = np.array([[1.0 if b else 0.0 for b in prefix]])
    return float(model.cond_step_batch(x[None, :], bits)[0])


def joint_logprob_seq(model: Model, context, valuation) -> float:
    """Log probability of a complete valuation under the sequential model."""
    context = np.asarray(context, dtype=np.float64)
    valuation = np.asarray(valuation, dtype=bool)
    if valuation.shape != (model.n,):
        raise ShapeError(f"expected {model.n} labels, got {valuation.shape}")
    return float(joint_logprob_seq_batch(model, context[None, :], valuation[None, :])[0])


def joint_logprob_seq_batch(model: Model, contexts, valuations) -> np.ndarray:
    """Log probability of each (context, valuation) row pair.

    Factors are accumulated strictly one step at a time so the result matches
    what a step-by-step decoder computes for the same model.
    """
    contexts = np.asarray(contexts, dtype=np.float64)
    valuations = np.asarray(valuations, dtype=bool)
    batch = contexts.shape[0]
    n = model.n
    if valuations.shape != (batch, n):
        raise ShapeError(f"expected ({batch}, {n}) valuations, got {valuations.shape}")
    logp = np.zeros(batch)
    bits = valuations.astype(np.float64)
    for j in range(n):
        c = model.cond_step_batch(contexts, bits[:, :j])
        term = clamp_prob(np.where(valuations[:, j], c, 1.0 - c))
        logp = logp + np.log(term)
    return logp


def joint_prob_base(marginals, valuation) -> float:
    """Independence product of per-label marginals for one valuation."""
    marginals = np.asarray(marginals, dtype=np.float64)
    valuation = np.asarray(valuation, dtype=bool)
    if valuation.shape != marginals.shape:
        raise ShapeError("marginals and valuation must have the same length")
    return float(np.prod(np.where(valuation, marginals, 1.0 - marginals)))


def enumerate_valuations(n: int) -> np.ndarray:
    """All 2^n valuations in lexicographic order (False before True)."""
    if n < 1 or n > 24:
        raise ContractError(f"refusing to enumerate 2^{n} valuations")
    idx = np.arange(2**n, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return bits.astype(bool)


def save_bundle(model: Model, target) -> None:
    """Write a model (header plus embedded nets) to a path or binary file."""
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "wb") as f:
            save_bundle(model, f)
        return
    header = {
        "kind": model.kind,
        "n": model.n,
        "m": model.m,
        "label_order": [int(i) for i in model.label_order],
    }
    target.write(BUNDLE_MAGIC)
    target.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
    if model.kind == "base-seq":
        save_net(model.base, target)
    save_net(model.cond, target)


def load_bundle(source) -> Model:
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as f:
            model = load_bundle(f)
            if f.read(1):
                raise ParseError("trailing data after model bundle")
            return model
    magic = source.read(len(BUNDLE_MAGIC))
    if magic != BUNDLE_MAGIC:
        raise ParseError("not a model bundle (bad magic header)")
    line = bytearray()
    while True:
        ch = source.read(1)
        if not ch:
            raise ParseError("truncated bundle header")
        if ch == b"\n":
            break
        line += ch
        if len(line) > 65536:
            raise ParseError("bundle header too long")
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad bundle header: {exc}") from None
    kind = header.get("kind")
    if kind == "base-seq":
        base = load_net(source)
        cond = load_net(source)
        model = BaseSeqModel(base, cond, np.asarray(header["label_order"]))
    elif kind == "seq-only":
        cond = load_net(source)
        model = SeqOnlyModel(cond, int(header["n"]), np.asarray(header["label_order"]))
    else:
        raise ParseError(f"unknown bundle kind {kind!r}")
    if model.n != header.get("n") or model.m != header.get("m"):
        raise ParseError("bundle header does not match embedded networks")
    return model

"""Training stages, weak-supervision rounds, and evaluation reports."""

import json
from dataclasses import dataclass, replace

import numpy as np

from . import losses
from .constraints import ConstraintSet, eval_full, sat_with_prefix, split_valid_invalid
from .data import LabeledSet, SplitDataset
from .errors import ContractError
from .inference import (
    SamplingStrategy,
    ancestral_sample,
    beam_search,
    beam_search_sat,
    exact_topk,
    independent_topk,
)
from .model import BaseSeqModel, Model, joint_logprob_seq, joint_logprob_seq_batch
from .nnet import AdamState, DenseNet, EpochStats, TrainConfig, adam_step, make_dropout_mask, train_loop

# Beam width used while training (pseudo-labeling, constraint loss); decoding
# at evaluation time defaults to inference.DEFAULT_BEAM_WIDTH instead.
TRAIN_BEAM_WIDTH = 5

SWEEP_WIDTHS = (1, 2, 4, 8, 16, 32, 64)


def base_train_config(**overrides) -> TrainConfig:
    """Stage-one defaults: slow, heavily regularized marginal training."""
    cfg = dict(learning_rate=1e-4, weight_decay=1e-4, dropout_rate=0.8, batch_size=4)
    cfg.update(overrides)
    return TrainConfig(**cfg)


def seq_train_config(**overrides) -> TrainConfig:
    """Stage-two defaults for the conditioning net."""
    cfg = dict(learning_rate=1e-3, weight_decay=1e-3, dropout_rate=0.1, batch_size=16)
    cfg.update(overrides)
    return TrainConfig(**cfg)


def _with_cond(model: Model, cond: DenseNet) -> Model:
    return replace(model, cond=cond)


def train_base_stage(sd: SplitDataset, hidden, cfg: TrainConfig):
    """Train the marginal net on supervised rows; returns (net, history)."""
    sup, val = sd.train_supervised, sd.validation
    if len(sup) == 0:
        raise ContractError("empty train set")
    m, n = sup.X.shape[1], sup.Y.shape[1]
    net = DenseNet.init([m, *hidden, n], np.random.default_rng(cfg.rng_seed))

    def loss_fn(current, batch, rng):
        X = np.stack([x for x, _ in batch])
        Y = np.stack([y for _, y in batch])
        mask = make_dropout_mask(rng, len(batch), int(current.layer_sizes[-2]), cfg.dropout_rate)
        return losses.bce_loss_batch(current, X, Y, mask)

    return train_loop(net, list(zip(sup.X, sup.Y)), list(zip(val.X, val.Y)), loss_fn, cfg)


def train_seq_stage(sd: SplitDataset, model: Model, cfg: TrainConfig):
    """Train the conditioning net, keeping any marginal stage frozen.

    Contexts are precomputed without dropout; targets are permuted into the
    model's label order before scoring. Returns (model, history).
    """
    sup, val = sd.train_supervised, sd.validation
    if len(sup) == 0:
        raise ContractError("empty train set")
    n = model.n
    ctx_sup = model.context_batch(sup.X)
    ctx_val = model.context_batch(val.X)
    y_sup = sup.Y[:, model.label_order]
    y_val = val.Y[:, model.label_order]

    def loss_fn(current, batch, rng):
        ctx = np.stack([c for c, _ in batch])
        tgt = np.stack([t for _, t in batch])
        mask = make_dropout_mask(
            rng, len(batch) * n, int(current.layer_sizes[-2]), cfg.dropout_rate
        )
        return losses.seq_nll_batch(current, n, ctx, tgt, mask)

    cond, history = train_loop(
        model.cond, list(zip(ctx_sup, y_sup)), list(zip(ctx_val, y_val)), loss_fn, cfg
    )
    return _with_cond(model, cond), history


def pseudo_label(model: Model, cs: ConstraintSet, X_unsup, beam_width: int = TRAIN_BEAM_WIDTH):
    """Beam-decode unlabeled rows and label each with its best valid guess.

    The highest-scoring constraint-satisfying hypothesis within the beam
    becomes the label; rows whose beam holds no valid hypothesis are dropped.
    Retained labels are returned in dataset column order.
    Returns (LabeledSet, indices of retained rows).
    """
    X_unsup = np.asarray(X_unsup, dtype=np.float64)
    contexts = model.context_batch(X_unsup)
    kept: list[int] = []
    labels: list[np.ndarray] = []
    for i in range(len(X_unsup)):
        for v, _ in beam_search(model, contexts[i], beam_width):
            if eval_full(cs, v):
                y = np.empty(model.n, dtype=bool)
                y[model.label_order] = v
                kept.append(i)
                labels.append(y)
                break
    Y = np.array(labels, dtype=bool).reshape(len(kept), model.n)
    return LabeledSet(X_unsup[kept], Y), np.array(kept, dtype=np.int64)


def train_with_pseudo_labels(
    sd: SplitDataset,
    model: Model,
    cs: ConstraintSet,
    cfg: TrainConfig,
    beam_width: int = TRAIN_BEAM_WIDTH,
):
    """Second training round on supervised rows plus accepted pseudo-labels.

    With no unsupervised rows there is nothing to add and the model is
    returned untouched. Returns (model, history, pseudo-labeled set).
    """
    if len(sd.train_unsupervised) == 0:
        empty = LabeledSet(np.empty((0, sd.train_supervised.X.shape[1])), np.empty((0, model.n), dtype=bool))
        return model, [], empty
    pl, _ = pseudo_label(model, cs, sd.train_unsupervised, beam_width)
    sup = sd.train_supervised
    merged = SplitDataset(
        train_supervised=LabeledSet(
            np.vstack([sup.X, pl.X]), np.vstack([sup.Y, pl.Y])
        ),
        train_unsupervised=np.empty((0, sup.X.shape[1])),
        validation=sd.validation,
        test=sd.test,
        unsupervised_ratio=sd.unsupervised_ratio,
    )
    retrained, history = train_seq_stage(merged, model, cfg)
    return retrained, history, pl


def train_with_constraint_loss(
    sd: SplitDataset,
    model: Model,
    cs: ConstraintSet,
    cfg: TrainConfig,
    lam: float = 1.0,
    beam_width: int = TRAIN_BEAM_WIDTH,
):
    """Joint training: supervised NLL batches plus beam-derived constraint batches.

    Each unsupervised batch decodes its rows with the current net, splits the
    beam output into valid and invalid valuations, and penalizes the masked
    steps of the invalid ones, scaled by `lam`. Early stopping watches the
    supervised validation NLL. With `lam` of zero or no unsupervised rows the
    supervised model is returned unchanged. Returns (model, history).
    """
    if lam < 0:
        raise ContractError("constraint weight must be non-negative")
    if lam == 0 or len(sd.train_unsupervised) == 0:
        return model, []
    if not sat_with_prefix(cs, ()):
        raise ContractError("constraint set is unsatisfiable")
    sup, val = sd.train_supervised, sd.validation
    if len(sup) == 0:
        raise ContractError("empty train set")
    n = model.n
    ctx_sup = model.context_batch(sup.X)
    ctx_uns = model.context_batch(sd.train_unsupervised)
    ctx_val = model.context_batch(val.X)
    y_sup = sup.Y[:, model.label_order]
    y_val = val.Y[:, model.label_order]

    rng = np.random.default_rng(cfg.rng_seed)
    net = model.cond.copy()
    work = _with_cond(model, net)
    state = AdamState.for_net(net)
    hidden = int(net.layer_sizes[-2])
    best_params = net.params.copy()
    best_loss = np.inf
    bad_epochs = 0
    history: list[EpochStats] = []

    def chunks(order, size):
        return [order[i : i + size] for i in range(0, len(order), size)]

    for epoch in range(cfg.max_epochs):
        batches = [("sup", b) for b in chunks(rng.permutation(len(sup)), cfg.batch_size)]
        batches += [("uns", b) for b in chunks(rng.permutation(len(ctx_uns)), cfg.batch_size)]
        batches = [batches[i] for i in rng.permutation(len(batches))]
        total, count = 0.0, 0
        for tag, idx in batches:
            if tag == "sup":
                mask = make_dropout_mask(rng, len(idx) * n, hidden, cfg.dropout_rate)
                loss, grads = losses.seq_nll_batch(net, n, ctx_sup[idx], y_sup[idx], mask)
            else:
                loss = 0.0
                grads = np.zeros_like(net.params)
                for i in idx:
                    decoded = beam_search(work, ctx_uns[i], beam_width)
                    valid, invalid = split_valid_invalid(cs, [v for v, _ in decoded])
                    if not invalid:
                        continue
                    masks = losses.compute_masks(valid, invalid)
                    mask = make_dropout_mask(rng, len(invalid) * n, hidden, cfg.dropout_rate)
                    l_i, g_i = losses.constraint_loss_on_net(
                        net, n, ctx_uns[i], invalid, masks, mask
                    )
                    loss += l_i
                    grads += g_i
                loss *= lam / len(idx)
                grads *= lam / len(idx)
            if not np.isfinite(loss):
                raise ContractError(f"non-finite training loss at epoch {epoch}")
            adam_step(net, grads, state, cfg)
            total += loss * len(idx)
            count += len(idx)
        train_loss = total / count
        valid_loss, _ = losses.seq_nll_batch(net, n, ctx_val, y_val, None)
        history.append(EpochStats(epoch, float(train_loss), float(valid_loss)))
        if valid_loss < best_loss:
            best_loss = valid_loss
            best_params = net.params.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break

    net.params[:] = best_params
    return _with_cond(model, net), history


@dataclass(frozen=True)
class DecoderSpec:
    """Which decoder evaluation uses and how many candidates it keeps."""

    kind: str = "beam"
    k: int = 4

    def __post_init__(self):
        if self.kind not in ("beam", "beam-sat", "exact", "greedy", "base"):
            raise ContractError(f"unknown decoder {self.kind!r}")
        if self.k < 1:
            raise ContractError("k must be at least 1")


def default_ks(k: int) -> list[int]:
    return sorted({v for v in (1, 2, 5, 10) if v < k} | {k})


@dataclass
class EvalReport:
    decoder: str
    k: int
    ks: list[int]
    n_test: int
    accuracy: float
    topk_accuracy: dict[int, float]
    violation_ratio: float | None
    mean_target_probability: float
    seed: int

    def to_dict(self) -> dict:
        d = {
            "decoder": self.decoder,
            "k": self.k,
            "n_test": self.n_test,
            "accuracy": self.accuracy,
            "topk_accuracy": {str(k): v for k, v in self.topk_accuracy.items()},
            "violation_ratio": self.violation_ratio,
            "mean_target_probability": self.mean_target_probability,
            "seed": self.seed,
        }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _decode(model: Model, context, decoder: DecoderSpec, cs):
    if decoder.kind == "beam":
        return beam_search(model, context, decoder.k)
    if decoder.kind == "beam-sat":
        if cs is None:
            raise ContractError("beam-sat decoding needs a constraint set")
        return beam_search_sat(model, context, cs, decoder.k)
    if decoder.kind == "exact":
        return exact_topk(model, context, decoder.k)
    if decoder.kind == "greedy":
        v = ancestral_sample(model, context, SamplingStrategy("greedy"))
        return [(v, joint_logprob_seq(model, context, v))]
    if not isinstance(model, BaseSeqModel):
        raise ContractError("the independence decoder needs a marginal stage")
    return independent_topk(context, decoder.k)


def evaluate(
    model: Model,
    cs: ConstraintSet | None,
    test: LabeledSet,
    decoder: DecoderSpec = DecoderSpec(),
    ks=None,
    seed: int = 0,
) -> EvalReport:
    """Decode every test row and report exact-match metrics.

    `ks` defaults to the standard checkpoints up to the decoder's k. The
    violation ratio is None when no constraint set is given. The mean target
    probability scores the true labels under the sequential model regardless
    of the decoder in use.
    """
    if len(test) == 0:
        raise ContractError("empty test set")
    ks = default_ks(decoder.k) if ks is None else sorted(set(int(k) for k in ks))
    if any(k < 1 for k in ks):
        raise ContractError("every k must be at least 1")
    contexts = model.context_batch(test.X)
    targets = test.Y[:, model.label_order]
    logps = joint_logprob_seq_batch(model, contexts, targets)

    hits = 0
    topk_hits = {k: 0 for k in ks}
    violations = 0
    for i in range(len(test)):
        results = _decode(model, contexts[i], decoder, cs)
        top = results[0][0]
        if np.array_equal(top, targets[i]):
            hits += 1
        if cs is not None and not eval_full(cs, top):
            violations += 1
        for k in ks:
            if any(np.array_equal(v, targets[i]) for v, _ in results[:k]):
                topk_hits[k] += 1

    n = len(test)
    return EvalReport(
        decoder=decoder.kind,
        k=decoder.k,
        ks=ks,
        n_test=n,
        accuracy=hits / n,
        topk_accuracy={k: h / n for k, h in topk_hits.items()},
        violation_ratio=(violations / n) if cs is not None else None,
        mean_target_probability=float(np.mean(np.exp(logps))),
        seed=seed,
    )


def sweep_beam(model: Model, cs, test: LabeledSet, widths=SWEEP_WIDTHS, seed: int = 0):
    """Evaluate the beam decoder at several widths; returns [(width, report)]."""
    out = []
    for w in widths:
        out.append((w, evaluate(model, cs, test, DecoderSpec("beam", int(w)), ks=[1], seed=seed)))
    return out


def sweep_to_csv(rows) -> str:
    lines = ["k,accuracy,violation_ratio,mean_target_probability"]
    for w, report in rows:
        vr = "" if report.violation_ratio is None else repr(report.violation_ratio)
        lines.append(
            f"{w},{report.accuracy!r},{vr},{report.mean_target_probability!r}"
        )
    return "\n".join(lines) + "\n"


def history_to_csv(history) -> str:
    lines = ["epoch,train_loss,valid_loss"]
    for e in history:
        lines.append(f"{e.epoch},{e.train_loss!r},{e.valid_loss!r}")
    return "\n".join(lines) + "\n"

"""Dense feed-forward networks over a flat parameter vector.

A network is its layer sizes plus one contiguous float64 parameter vector
(layout documented in `kernels`). Keeping parameters flat makes the optimizer
and the gradient checks trivial; per-layer weight and bias matrices are
exposed as reshaped views into the same buffer.
"""

import io
from dataclasses import dataclass
from typing import BinaryIO, Callable, NamedTuple

import numpy as np

from . import kernels
from .errors import ContractError, NumericError, ParseError, ShapeError

NET_MAGIC = b"SEQLABEL-NET-1\n"


def param_count(layer_sizes) -> int:
    sizes = np.asarray(layer_sizes, dtype=np.int64)
    return int(np.sum(sizes[:-1] * sizes[1:] + sizes[1:]))


def layer_slices(layer_sizes) -> list[tuple[slice, slice]]:
    """(weight, bias) slices into the flat parameter vector, one per layer."""
    out = []
    off = 0
    for fin, fout in zip(layer_sizes[:-1], layer_sizes[1:]):
        fin, fout = int(fin), int(fout)
        out.append((slice(off, off + fin * fout), slice(off + fin * fout, off + fin * fout + fout)))
        off += fin * fout + fout
    return out


@dataclass
class DenseNet:
    """Feed-forward net: ReLU hidden layers, sigmoid output layer."""

    layer_sizes: np.ndarray
    params: np.ndarray

    def __post_init__(self):
        self.layer_sizes = np.ascontiguousarray(self.layer_sizes, dtype=np.int64)
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.layer_sizes.ndim != 1 or len(self.layer_sizes) < 2:
            raise ShapeError("layer_sizes needs at least an input and an output size")
        if np.any(self.layer_sizes < 1):
            raise ShapeError("every layer size must be positive")
        expected = param_count(self.layer_sizes)
        if self.params.ndim != 1 or len(self.params) != expected:
            raise ShapeError(f"expected {expected} parameters, got {self.params.shape}")

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator) -> "DenseNet":
        """Glorot-uniform weights, zero biases."""
        net = cls.zeros(layer_sizes)
        for (w_sl, _), fin, fout in zip(
            layer_slices(net.layer_sizes), net.layer_sizes[:-1], net.layer_sizes[1:]
        ):
            lim = np.sqrt(6.0 / (int(fin) + int(fout)))
            net.params[w_sl] = rng.uniform(-lim, lim, int(fin) * int(fout))
        return net

    @classmethod
    def zeros(cls, layer_sizes) -> "DenseNet":
        sizes = np.asarray(layer_sizes, dtype=np.int64)
        return cls(sizes, np.zeros(param_count(sizes)))

    @property
    def n_in(self) -> int:
        return int(self.layer_sizes[0])

    @property
    def n_out(self) -> int:
        return int(self.layer_sizes[-1])

    @property
    def depth(self) -> int:
        """Number of weight layers."""
        return len(self.layer_sizes) - 1

    def weight(self, layer: int) -> np.ndarray:
        """(fan_out, fan_in) view into the flat parameters; writable."""
        w_sl, _ = layer_slices(self.layer_sizes)[layer]
        fout = int(self.layer_sizes[layer + 1])
        return self.params[w_sl].reshape(fout, -1)

    def bias(self, layer: int) -> np.ndarray:
        _, b_sl = layer_slices(self.layer_sizes)[layer]
        return self.params[b_sl]

    def copy(self) -> "DenseNet":
        return DenseNet(self.layer_sizes.copy(), self.params.copy())

    def save(self, target) -> None:
        save_net(self, target)

    @classmethod
    def load(cls, source) -> "DenseNet":
        return load_net(source)


def make_dropout_mask(rng, batch: int, width: int, rate: float) -> np.ndarray:
    """Inverted-dropout multiplier, or the empty mask when dropout is off."""
    if rng is None or rate <= 0.0:
        return kernels.EMPTY_MASK
    return (rng.random((batch, width)) >= rate) / (1.0 - rate)


def forward(net: DenseNet, x, dropout_rate: float = 0.0, rng=None) -> np.ndarray:
    """Network output. A 1-d input yields a 1-d output, a 2-d input a batch.

    Dropout is applied to the last hidden layer only, and only when both a
    positive rate and a generator are given (training mode).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    mask = make_dropout_mask(rng, x.shape[0], int(net.layer_sizes[-2]), dropout_rate)
    acts = kernels.forward_acts(net.params, net.layer_sizes, x, mask)
    out = acts[:, acts.shape[1] - net.n_out :]
    return out[0] if single else out


def backward(net: DenseNet, x, upstream) -> np.ndarray:
    """Gradient of sum(upstream * output) w.r.t. the flat parameters.

    Recomputes activations without dropout; training code that needs dropout
    uses the kernels directly so the stored activations match the mask.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
        upstream = upstream[None, :]
    acts = kernels.forward_acts(net.params, net.layer_sizes, x, None)
    return kernels.backward_acts(net.params, net.layer_sizes, x, acts, None, upstream)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    dropout_rate: float = 0.0
    batch_size: int = 16
    max_epochs: int = 200
    patience: int = 20
    rng_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: DenseNet) -> "AdamState":
        return cls(np.zeros_like(net.params), np.zeros_like(net.params))


def adam_step(net: DenseNet, grads: np.ndarray, state: AdamState, cfg: TrainConfig):
    """One optimizer step, in place. Weight decay is decoupled from the moments."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != net.params.shape:
        raise ShapeError(f"gradient shape {grads.shape} does not match parameters")
    for layer, (w_sl, b_sl) in enumerate(layer_slices(net.layer_sizes)):
        if not np.all(np.isfinite(grads[w_sl])):
            raise NumericError(f"non-finite gradient in layer {layer} weights")
        if not np.all(np.isfinite(grads[b_sl])):
            raise NumericError(f"non-finite gradient in layer {layer} biases")

    if state.step == 0 and (np.any(state.m != 0) or np.any(state.v != 0)):
        raise ContractError("Adam state was not initialized for this net")
    state.step += 1
    t = state.step
    if cfg.weight_decay > 0:
        net.params *= 1.0 - cfg.learning_rate * cfg.weight_decay
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**t)
    v_hat = state.v / (1.0 - state.beta2**t)
    net.params -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return net, state


class EpochStats(NamedTuple):
    epoch: int
    train_loss: float
    valid_loss: float


LossFn = Callable[[DenseNet, list, object], tuple[float, np.ndarray]]


def train_loop(net: DenseNet, train_items, valid_items, loss_fn: LossFn, cfg: TrainConfig):
    """Minibatch Adam with early stopping on validation loss.

    `loss_fn(net, items, rng)` returns (mean loss over items, flat gradient).
    It receives a generator during training (so it may sample dropout masks)
    and None for validation passes. Training stops after `patience` epochs
    without strict validation improvement; the returned net carries the
    parameters of the best epoch seen. Fully deterministic for a fixed
    config and item order.
    """
    train_items = list(train_items)
    valid_items = list(valid_items)
    if not train_items:
        raise ContractError("empty train set")
    if not valid_items:
        raise ContractError("empty validation set")

    rng = np.random.default_rng(cfg.rng_seed)
    net = net.copy()
    state = AdamState.for_net(net)
    best_params = net.params.copy()
    best_loss = np.inf
    bad_epochs = 0
    history: list[EpochStats] = []

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train_items))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            batch = [train_items[j] for j in chunk]
            loss, grads = loss_fn(net, batch, rng)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            adam_step(net, grads, state, cfg)
            total += loss * len(batch)
        train_loss = total / len(train_items)
        valid_loss, _ = loss_fn(net, valid_items, None)
        if not np.isfinite(valid_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
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
    return net, history


def _read_exact(f: BinaryIO, count: int) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise ParseError(f"truncated network file: wanted {count} bytes, got {len(data)}")
    return data


def save_net(net: DenseNet, target) -> None:
    """Write a net to a path or binary file object (little-endian, versioned)."""
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "wb") as f:
            save_net(net, f)
        return
    target.write(NET_MAGIC)
    target.write(np.array([len(net.layer_sizes)], dtype="<i8").tobytes())
    target.write(net.layer_sizes.astype("<i8").tobytes())
    target.write(net.params.astype("<f8").tobytes())


def load_net(source) -> DenseNet:
    """Inverse of `save_net`. Embedded reads consume exactly one net."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as f:
            net = load_net(f)
            if f.read(1):
                raise ParseError("trailing data after network parameters")
            return net
    magic = source.read(len(NET_MAGIC))
    if magic != NET_MAGIC:
        raise ParseError("not a network file (bad magic header)")
    (n_sizes,) = np.frombuffer(_read_exact(source, 8), dtype="<i8")
    if n_sizes < 2 or n_sizes > 64:
        raise ParseError(f"implausible layer count {n_sizes}")
    sizes = np.frombuffer(_read_exact(source, 8 * int(n_sizes)), dtype="<i8").astype(np.int64)
    if np.any(sizes < 1):
        raise ParseError("non-positive layer size in network file")
    n_params = param_count(sizes)
    params = np.frombuffer(_read_exact(source, 8 * n_params), dtype="<f8").astype(np.float64)
    return DenseNet(sizes, params)


def net_bytes(net: DenseNet) -> bytes:
    buf = io.BytesIO()
    save_net(net, buf)
    return buf.getvalue()

"""Batched dense-network kernels with a selectable backend.

Two interchangeable implementations exist: jit-compiled explicit loops
(`_kernels_numba`) and vectorized numpy (`_kernels_numpy`). The active one is
picked once at import time from the ``SEQLABEL_BACKEND`` environment variable
("numba" or "numpy"). When the variable is unset, the jitted backend is used
if numba imports cleanly, otherwise the numpy fallback.

Both backends share one parameter layout. For layer sizes
``[d0, d1, ..., dL]`` the flat parameter vector is

    [W1 (d1 x d0, row-major), b1, W2 (d2 x d1), b2, ..., WL, bL]

and ``forward_acts`` returns the concatenated post-activation blocks of every
layer, shape ``(batch, d1 + ... + dL)``. Hidden layers use ReLU, the final
layer a numerically stable sigmoid. When a dropout mask is supplied it is an
inverted-dropout multiplier applied to the last hidden block only; an empty
``(0, 0)`` mask means dropout is off.

The jitted backend processes each row independently, so its results are
bit-identical no matter how rows are batched. The numpy backend delegates to
BLAS, whose blocking can shift row results by a few ulps across batch sizes.
"""

import os

import numpy as np

from . import _kernels_numpy
from .errors import ContractError, ShapeError

EMPTY_MASK = np.zeros((0, 0), dtype=np.float64)

_BACKENDS = {"numpy": _kernels_numpy}

try:
    from . import _kernels_numba

    _BACKENDS["numba"] = _kernels_numba
except ImportError:  # pragma: no cover - exercised only without numba installed
    pass

_name = os.environ.get("SEQLABEL_BACKEND", "").strip().lower()
if not _name:
    _name = "numba" if "numba" in _BACKENDS else "numpy"
if _name not in _BACKENDS:
    raise ContractError(
        f"SEQLABEL_BACKEND={_name!r} is not available; choose one of {sorted(_BACKENDS)}"
    )
_active = _BACKENDS[_name]


def backend_name() -> str:
    """Name of the backend selected at import time."""
    return _name


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str):
    """Return the raw kernel module for `name` (used by the benchmark)."""
    if name not in _BACKENDS:
        raise ContractError(f"unknown backend {name!r}; available: {sorted(_BACKENDS)}")
    return _BACKENDS[name]


def _check_common(params, sizes, x):
    if sizes.ndim != 1 or len(sizes) < 2:
        raise ShapeError("sizes must be a 1-d array with at least two entries")
    n_params = int(np.sum(sizes[:-1] * sizes[1:] + sizes[1:]))
    if params.ndim != 1 or len(params) != n_params:
        raise ShapeError(f"expected {n_params} parameters, got {params.shape}")
    if x.ndim != 2 or x.shape[1] != sizes[0]:
        raise ShapeError(f"input must be (batch, {sizes[0]}), got {x.shape}")


def _check_mask(drop_mask, sizes, batch):
    if drop_mask is None:
        return EMPTY_MASK
    drop_mask = np.ascontiguousarray(drop_mask, dtype=np.float64)
    if drop_mask.size == 0:
        return EMPTY_MASK
    if len(sizes) < 3:
        raise ShapeError("dropout mask given but the network has no hidden layer")
    if drop_mask.shape != (batch, sizes[-2]):
        raise ShapeError(
            f"dropout mask must be ({batch}, {sizes[-2]}), got {drop_mask.shape}"
        )
    return drop_mask


def forward_acts(params, sizes, x, drop_mask=None):
    """All post-activation blocks for a batch, shape (batch, sum(sizes[1:]))."""
    params = np.ascontiguousarray(params, dtype=np.float64)
    sizes = np.ascontiguousarray(sizes, dtype=np.int64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    _check_common(params, sizes, x)
    drop_mask = _check_mask(drop_mask, sizes, x.shape[0])
    return _active.forward_acts(params, sizes, x, drop_mask)


def backward_acts(params, sizes, x, acts, drop_mask, upstream):
    """Parameter gradient of sum(upstream * output), same layout as `params`.

    `acts` must be the array `forward_acts` returned for the same inputs and
    mask (the stored activations already include the dropout multiplier).
    """
    params = np.ascontiguousarray(params, dtype=np.float64)
    sizes = np.ascontiguousarray(sizes, dtype=np.int64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    _check_common(params, sizes, x)
    acts = np.ascontiguousarray(acts, dtype=np.float64)
    total = int(np.sum(sizes[1:]))
    if acts.shape != (x.shape[0], total):
        raise ShapeError(f"acts must be ({x.shape[0]}, {total}), got {acts.shape}")
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    if upstream.shape != (x.shape[0], sizes[-1]):
        raise ShapeError(
            f"upstream must be ({x.shape[0]}, {sizes[-1]}), got {upstream.shape}"
        )
    drop_mask = _check_mask(drop_mask, sizes, x.shape[0])
    return _active.backward_acts(params, sizes, x, acts, drop_mask, upstream)

"""Backend selection for the cone/disc stencil kernel.

The compiled extension is used when it imports; setting ``TENTLAB_PURE=1``
forces the numpy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _cone_py

BACKEND = "python"
_impl = _cone_py.stencil_reduce
if os.environ.get("TENTLAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _cone

        _impl = _cone.stencil_reduce
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

__all__ = ["BACKEND", "stencil_reduce", "pure_stencil_reduce", "as_stack"]


def _triples(idx: np.ndarray, size: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64) % size
    if idx.shape[1] == 2:
        idx = np.concatenate([np.zeros((len(idx), 1), dtype=np.int64), idx], axis=1)
    return np.ascontiguousarray(idx, dtype=np.int64)


def as_stack(arr: np.ndarray, dim: int) -> np.ndarray:
    """View ``(J, N, ..., N)`` data as the kernel's 4-axis layout."""
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if dim == 2:
        arr = arr.reshape(arr.shape[0], 1, *arr.shape[1:])
    return arr


def _call(impl, stack, offsets, levels, centers, use_max):
    dim = stack.ndim - 1
    size = stack.shape[-1]
    return impl(as_stack(stack, dim), _triples(offsets, size),
                np.ascontiguousarray(levels, dtype=np.int64),
                _triples(centers, size), bool(use_max))


def stencil_reduce(stack, offsets, levels, centers, use_max=False):
    """Periodic gather-reduce ``out[p] = op_k stack[levels[k], centers[p] + offsets[k]]``.

    ``stack`` has shape ``(J,) + (N,) * dim``; offsets ``(K, dim)`` may be
    negative; ``levels < 0`` are skipped; ``op`` is max or sum.
    """
    return _call(_impl, stack, offsets, levels, centers, use_max)


def pure_stencil_reduce(stack, offsets, levels, centers, use_max=False):
    """The numpy fallback, callable regardless of the selected backend."""
    return _call(_cone_py.stencil_reduce, stack, offsets, levels, centers, use_max)

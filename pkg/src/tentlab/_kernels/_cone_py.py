"""Pure numpy version of the periodic stencil reduction."""
from __future__ import annotations

import numpy as np

_CHUNK = 1 << 22


def stencil_reduce(stack, offsets, levels, centers, use_max):
    """``out[c] = op_k stack[levels[k], centers[c] + offsets[k]]`` with periodic wrap.

    Same contract as the compiled kernel: ``stack`` is ``(J, A, B, C)``,
    offsets and centers are ``(K, 3)`` / ``(P, 3)`` reduced index triples.
    """
    stack = np.asarray(stack, dtype=np.float64)
    keep = np.asarray(levels) >= 0
    offsets = np.asarray(offsets)[keep]
    levels = np.asarray(levels)[keep]
    centers = np.asarray(centers)
    J, na, nb, nc = stack.shape
    flat = stack.reshape(-1)
    out = np.full(len(centers), -np.inf if use_max else 0.0)
    if len(levels) == 0:
        return out
    dims = np.array([na, nb, nc])
    lev_base = levels * (na * nb * nc)
    step = max(1, _CHUNK // max(1, len(levels)))
    for lo in range(0, len(centers), step):
        c = centers[lo : lo + step]
        idx = (c[:, None, :] + offsets[None, :, :]) % dims
        lin = lev_base[None, :] + (idx[..., 0] * nb + idx[..., 1]) * nc + idx[..., 2]
        vals = flat[lin]
        out[lo : lo + step] = vals.max(axis=1) if use_max else vals.sum(axis=1)
    return out

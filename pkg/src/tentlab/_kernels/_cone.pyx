# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled periodic stencil reduction."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def stencil_reduce(double[:, :, :, ::1] stack, long[:, ::1] offsets, long[::1] levels,
                   long[:, ::1] centers, bint use_max):
    """``out[c] = op_k stack[levels[k], centers[c] + offsets[k]]`` with periodic wrap.

    ``stack`` has shape ``(J, A, B, C)``; 2D data uses ``A = 1``. Offsets and
    centers are ``(K, 3)`` and ``(P, 3)`` index triples already reduced to
    ``[0, size)`` per axis. Entries with ``levels[k] < 0`` are skipped.
    """
    cdef Py_ssize_t K = offsets.shape[0], P = centers.shape[0]
    cdef long na = stack.shape[1], nb = stack.shape[2], nc = stack.shape[3]
    cdef Py_ssize_t p, k
    cdef long a, b, c, lev
    cdef double acc, v
    out = np.empty(P, dtype=np.float64)
    cdef double[::1] o = out
    for p in range(P):
        acc = -INFINITY if use_max else 0.0
        for k in range(K):
            lev = levels[k]
            if lev < 0:
                continue
            a = centers[p, 0] + offsets[k, 0]
            if a >= na:
                a -= na
            b = centers[p, 1] + offsets[k, 1]
            if b >= nb:
                b -= nb
            c = centers[p, 2] + offsets[k, 2]
            if c >= nc:
                c -= nc
            v = stack[lev, a, b, c]
            if use_max:
                if v > acc:
                    acc = v
            else:
                acc += v
        o[p] = acc
    return out

"""Compiled stencil kernel against the numpy fallback and a direct loop."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tentlab import _kernels


def _loop(stack, offsets, levels, centers, use_max):
    n = stack.shape[-1]
    out = np.full(len(centers), -np.inf if use_max else 0.0)
    for p, c in enumerate(centers):
        for o, lev in zip(offsets, levels):
            if lev < 0:
                continue
            v = stack[(lev,) + tuple((c + o) % n)]
            out[p] = max(out[p], v) if use_max else out[p] + v
    if use_max:
        out[np.isneginf(out)] = 0.0
    return out


@st.composite
def _problem(draw):
    dim = draw(st.sampled_from([2, 3]))
    n = draw(st.sampled_from([4, 6, 8]))
    J = draw(st.integers(1, 4))
    K = draw(st.integers(1, 12))
    P = draw(st.integers(1, 6))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    stack = rng.standard_normal((J,) + (n,) * dim)
    offsets = rng.integers(-2 * n, 2 * n, size=(K, dim))
    levels = rng.integers(-1, J, size=K)
    centers = rng.integers(0, n, size=(P, dim))
    return stack, offsets, levels, centers


class TestStencilReduce:
    def test_backend_is_named(self):
        assert _kernels.BACKEND in ("cython", "python")

    @given(_problem(), st.booleans())
    @settings(max_examples=60, deadline=None)
    def test_backends_agree_with_loop(self, prob, use_max):
        stack, offsets, levels, centers = prob
        ref = _loop(stack, offsets, levels, centers, use_max)
        fast = _kernels.stencil_reduce(stack, offsets, levels, centers, use_max)
        slow = _kernels.pure_stencil_reduce(stack, offsets, levels, centers, use_max)
        if not use_max or np.any(levels >= 0):
            assert np.allclose(fast, ref, atol=1e-12)
            assert np.allclose(slow, ref, atol=1e-12)
        assert np.allclose(fast, slow, atol=1e-12)

    def test_large_problem_agrees(self, rng):
        stack = rng.random((10, 64, 64))
        offsets = rng.integers(-32, 32, size=(500, 2))
        levels = rng.integers(-1, 10, size=500)
        centers = np.argwhere(np.ones((64, 64), bool))
        for use_max in (False, True):
            a = _kernels.stencil_reduce(stack, offsets, levels, centers, use_max)
            b = _kernels.pure_stencil_reduce(stack, offsets, levels, centers, use_max)
            assert np.allclose(a, b, rtol=1e-13)

    def test_environment_forces_fallback(self):
        env = dict(os.environ, TENTLAB_PURE="1")
        out = subprocess.run([sys.executable, "-c", "from tentlab import _kernels; print(_kernels.BACKEND)"],
                             env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"

    @pytest.mark.skipif(_kernels.BACKEND != "cython", reason="extension not built")
    def test_compiled_extension_loaded(self):
        from tentlab._kernels import _cone
        assert callable(_cone.stencil_reduce)

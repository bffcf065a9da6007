import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from paneitz_lab import _kernels


def _random_poly(seed, dim=7, terms=6, degree=4):
    rng = np.random.default_rng(seed)
    exps = rng.integers(0, degree + 1, size=(terms, dim)).astype(np.int64)
    coeffs = rng.normal(size=terms)
    X = rng.normal(size=(20, dim))
    return exps, coeffs, X


@pytest.mark.skipif(not _kernels.USE_NUMBA, reason="numba disabled")
@given(st.integers(0, 2**31 - 1))
def test_compiled_and_numpy_kernels_agree(seed):
    exps, coeffs, X = _random_poly(seed)
    for name in ("value", "grad", "hess"):
        fast = getattr(_kernels, f"poly_{name}_numba")(exps, coeffs, X)
        ref = getattr(_kernels, f"poly_{name}_numpy")(exps, coeffs, X)
        np.testing.assert_allclose(fast, ref, rtol=1e-12, atol=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_gradient_and_hessian_match_finite_differences(seed):
    exps, coeffs, X = _random_poly(seed)
    x = X[:1]
    h = 1e-6
    g = _kernels.poly_grad(exps, coeffs, x)[0]
    H = _kernels.poly_hess(exps, coeffs, x)[0]
    for k in range(x.shape[1]):
        e = np.zeros_like(x)
        e[0, k] = h
        fd = (_kernels.poly_value(exps, coeffs, x + e) - _kernels.poly_value(exps, coeffs, x - e)) / (2 * h)
        assert g[k] == pytest.approx(fd[0], rel=1e-6, abs=1e-6)
        fdg = (_kernels.poly_grad(exps, coeffs, x + e) - _kernels.poly_grad(exps, coeffs, x - e)) / (2 * h)
        np.testing.assert_allclose(H[k], fdg[0], rtol=1e-5, atol=1e-5)


def test_environment_flag_selects_numpy_fallback():
    code = "from paneitz_lab import _kernels; print(_kernels.USE_NUMBA)"
    env = dict(os.environ, PANEITZ_LAB_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "False"

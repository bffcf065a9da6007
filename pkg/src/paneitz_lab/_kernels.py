"""Hot loops for ambient polynomial evaluation.

Every quadrature over a curvature candidate and every Newton iteration of the
critical-point search funnels through value/gradient/hessian evaluation of a
sparse multivariate polynomial at many points.  Those three kernels are
compiled with numba when it is importable; setting the environment variable
``PANEITZ_LAB_DISABLE_NUMBA=1`` before import selects the pure-numpy versions
instead.  Both paths return identical arrays up to round-off.
"""

import os

import numpy as np

_DISABLED = os.environ.get("PANEITZ_LAB_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
except ImportError:
    njit = None

USE_NUMBA = njit is not None


# ---------------------------------------------------------------------------
# numpy reference implementations


def _np_monomials(exps, X):
    # (m, T) table of monomial values
    return np.prod(X[:, None, :] ** exps[None, :, :], axis=2)


def poly_value_numpy(exps, coeffs, X):
    return _np_monomials(exps, X) @ coeffs


def poly_grad_numpy(exps, coeffs, X):
    m, d = X.shape
    out = np.empty((m, d))
    for k in range(d):
        mult = exps[:, k].astype(float) * coeffs
        lowered = exps.copy()
        lowered[:, k] = np.maximum(lowered[:, k] - 1, 0)
        out[:, k] = _np_monomials(lowered, X) @ mult
    return out


def poly_hess_numpy(exps, coeffs, X):
    m, d = X.shape
    out = np.empty((m, d, d))
    for k in range(d):
        for l in range(k, d):
            lowered = exps.copy()
            if k == l:
                mult = exps[:, k] * (exps[:, k] - 1) * coeffs
                lowered[:, k] = np.maximum(lowered[:, k] - 2, 0)
            else:
                mult = exps[:, k] * exps[:, l] * coeffs
                lowered[:, k] = np.maximum(lowered[:, k] - 1, 0)
                lowered[:, l] = np.maximum(lowered[:, l] - 1, 0)
            col = _np_monomials(lowered, X) @ mult.astype(float)
            out[:, k, l] = col
            out[:, l, k] = col
    return out


# ---------------------------------------------------------------------------
# compiled implementations

if USE_NUMBA:

    @njit(cache=True)
    def _ipow(x, e):
        r = 1.0
        for _ in range(e):
            r *= x
        return r

    @njit(cache=True)
    def poly_value_numba(exps, coeffs, X):
        m, d = X.shape
        T = exps.shape[0]
        out = np.zeros(m)
        for i in range(m):
            acc = 0.0
            for t in range(T):
                v = coeffs[t]
                for j in range(d):
                    e = exps[t, j]
                    if e:
                        v *= _ipow(X[i, j], e)
                acc += v
            out[i] = acc
        return out

    @njit(cache=True)
    def poly_grad_numba(exps, coeffs, X):
        m, d = X.shape
        T = exps.shape[0]
        out = np.zeros((m, d))
        for i in range(m):
            for t in range(T):
                for k in range(d):
                    ek = exps[t, k]
                    if ek == 0:
                        continue
                    v = coeffs[t] * ek
                    for j in range(d):
                        e = exps[t, j] - 1 if j == k else exps[t, j]
                        if e:
                            v *= _ipow(X[i, j], e)
                    out[i, k] += v
        return out

    @njit(cache=True)
    def poly_hess_numba(exps, coeffs, X):
        m, d = X.shape
        T = exps.shape[0]
        out = np.zeros((m, d, d))
        for i in range(m):
            for t in range(T):
                for k in range(d):
                    ek = exps[t, k]
                    if ek == 0:
                        continue
                    for l in range(k, d):
                        el = exps[t, l]
                        if k == l:
                            if ek < 2:
                                continue
                            v = coeffs[t] * ek * (ek - 1)
                        else:
                            if el == 0:
                                continue
                            v = coeffs[t] * ek * el
                        for j in range(d):
                            e = exps[t, j]
                            if j == k:
                                e -= 1
                            if j == l:
                                e -= 1
                            if e:
                                v *= _ipow(X[i, j], e)
                        out[i, k, l] += v
                        if k != l:
                            out[i, l, k] += v
        return out

    poly_value = poly_value_numba
    poly_grad = poly_grad_numba
    poly_hess = poly_hess_numba
else:
    poly_value = poly_value_numpy
    poly_grad = poly_grad_numpy
    poly_hess = poly_hess_numpy

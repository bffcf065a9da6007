"""Curvature candidates K as ambient polynomials and their Morse data on S^n.

Intrinsic derivatives come from ambient ones: for any extension F of K,

    grad_S K = g - (x.g) x,
    Hess_S K(u, v) = u^T H v - (x.g) u.v          (u, v tangent),
    Delta_S K = tr H - x^T H x - n x.g,

with g, H the ambient gradient and Hessian at the unit vector x.
"""

from dataclasses import dataclass, field
import json
import math
import warnings

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from . import _kernels
from .sphere_geometry import as_point, exp_map, geodesic_distance, tangent_basis

GRAD_TOL = 1e-9
DEGENERACY_TOL = 1e-6
DEDUP_TOL = 1e-6


class MorseViolationError(ValueError):
    """K is not Morse with nonvanishing Laplacian at some critical point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class IncompleteSearchWarning(UserWarning):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class CurvatureFileError(ValueError):
    pass


# ---------------------------------------------------------------------------
# the polynomial


@dataclass(frozen=True)
class CurvatureField:
    """K(x) = sum_t coeff_t prod_j x_j^exps[t, j] restricted to S^n."""

    n: int
    exps: np.ndarray
    coeffs: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        exps = np.ascontiguousarray(np.asarray(self.exps, dtype=np.int64).reshape(-1, self.n + 1))
        coeffs = np.ascontiguousarray(np.asarray(self.coeffs, dtype=float).reshape(-1))
        if exps.shape[0] != coeffs.size:
            raise ValueError("one coefficient per exponent row")
        if np.any(exps < 0):
            raise ValueError("exponents must be non-negative")
        object.__setattr__(self, "exps", exps)
        object.__setattr__(self, "coeffs", coeffs)

    # construction -----------------------------------------------------

    @classmethod
    def from_terms(cls, n, terms, meta=None):
        exps = [t[0] for t in terms]
        coeffs = [t[1] for t in terms]
        return cls(n, np.array(exps, dtype=np.int64).reshape(-1, n + 1), np.array(coeffs, float),
                   meta or {})

    @classmethod
    def constant(cls, n, c=1.0):
        return cls(n, np.zeros((1, n + 1), dtype=np.int64), np.array([float(c)]))

    @classmethod
    def quadratic_family(cls, n, a, const=1.0):
        """1 + sum_i a_i x_i^2."""
        a = np.asarray(a, dtype=float)
        if a.size != n + 1:
            raise ValueError("need n+1 quadratic coefficients")
        exps = [np.zeros(n + 1, dtype=np.int64)]
        for i in range(n + 1):
            e = np.zeros(n + 1, dtype=np.int64)
            e[i] = 2
            exps.append(e)
        return cls(n, np.array(exps), np.concatenate(([const], a)), {"family": "quadratic"})

    @classmethod
    def linear(cls, n, eps, axis=0, const=1.0):
        e = np.zeros((2, n + 1), dtype=np.int64)
        e[1, axis] = 1
        return cls(n, e, np.array([const, eps]), {"family": "linear"})

    @classmethod
    def from_dict(cls, data):
        try:
            n = int(data["n"])
            terms = data["terms"]
            exps = [list(map(int, t["exponents"])) for t in terms]
            coeffs = [float(t["coeff"]) for t in terms]
        except (KeyError, TypeError, ValueError) as exc:
            raise CurvatureFileError(f"malformed curvature description: {exc}") from exc
        if n not in (5, 6):
            raise CurvatureFileError(f"n must be 5 or 6, got {n}")
        if not terms:
            raise CurvatureFileError("no terms")
        for e in exps:
            if len(e) != n + 1:
                raise CurvatureFileError(f"exponent list {e} must have n+1 = {n + 1} entries")
            if min(e) < 0:
                raise CurvatureFileError(f"negative exponent in {e}")
        if not all(math.isfinite(c) for c in coeffs):
            raise CurvatureFileError("non-finite coefficient")
        return cls(n, np.array(exps, dtype=np.int64), np.array(coeffs), {})

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CurvatureFileError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def to_dict(self):
        return {"n": self.n,
                "terms": [{"exponents": [int(v) for v in e], "coeff": float(c)}
                          for e, c in zip(self.exps, self.coeffs)]}

    @property
    def degree(self):
        return int(self.exps.sum(axis=1).max())

    @property
    def is_constant(self):
        active = self.exps[np.abs(self.coeffs) > 0]
        return active.size == 0 or int(active.sum(axis=1).max()) == 0

    # ambient evaluation -------------------------------------------------

    def _X(self, x):
        X = np.asarray(x, dtype=float)
        return np.ascontiguousarray(X.reshape(-1, self.n + 1)), X.ndim == 1

    def __call__(self, x):
        X, single = self._X(x)
        v = _kernels.poly_value(self.exps, self.coeffs, X)
        return float(v[0]) if single else v

    def ambient_grad(self, x):
        X, single = self._X(x)
        g = _kernels.poly_grad(self.exps, self.coeffs, X)
        return g[0] if single else g

    def ambient_hess(self, x):
        X, single = self._X(x)
        H = _kernels.poly_hess(self.exps, self.coeffs, X)
        return H[0] if single else H

    def check_positive(self, samples=4000, seed=0):
        """Minimum of K over a seeded sample set; raises if not positive."""
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((samples, self.n + 1))
        X = g / np.linalg.norm(g, axis=1, keepdims=True)
        m = float(np.min(self(X)))
        if not m > 0:
            raise MorseViolationError(f"K is not positive on S^{self.n} (sampled min {m:.6g})")
        return m


def eval_K(K, x):
    return K(x)


def grad_K(K, x):
    """Tangential gradient at x (ambient coordinates)."""
    X = np.asarray(x, dtype=float)
    g = K.ambient_grad(X)
    if X.ndim == 1:
        return g - (g @ X) * X
    return g - np.sum(g * X, axis=1, keepdims=True) * X


def hess_K(K, x, basis=None):
    """Intrinsic Hessian at a single point x in a tangent basis (n x n)."""
    x = np.asarray(x, dtype=float)
    B = tangent_basis(x) if basis is None else basis
    g = K.ambient_grad(x)
    H = K.ambient_hess(x)
    return B.T @ (H - (g @ x) * np.eye(x.size)) @ B


def laplacian_K(K, x):
    """Laplace-Beltrami operator of K on S^n at x (one point or an array)."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X2 = X.reshape(-1, K.n + 1)
    g = K.ambient_grad(X2)
    H = K.ambient_hess(X2)
    tr = np.trace(H, axis1=1, axis2=2)
    xHx = np.einsum("mi,mij,mj->m", X2, H, X2)
    xg = np.sum(X2 * g, axis=1)
    out = tr - xHx - K.n * xg
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# critical points


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    value: float
    grad_norm: float
    morse_index: int
    laplacian: float
    hessian_eigenvalues: np.ndarray

    @property
    def first_class(self):
        """True when -Delta K > 0 at the point."""
        return self.laplacian < 0

    def to_dict(self):
        return {"location": [float(v) for v in self.location],
                "value": float(self.value),
                "grad_norm": float(self.grad_norm),
                "morse_index": int(self.morse_index),
                "laplacian": float(self.laplacian),
                "hessian_eigenvalues": [float(v) for v in self.hessian_eigenvalues],
                "class": "first" if self.first_class else "second"}


def _batch_tangent_bases(X):
    m, d = X.shape
    s = np.where(X[:, 0] >= 0, 1.0, -1.0)
    V = X.copy()
    V[:, 0] += s
    H = np.eye(d)[None] - 2.0 * V[:, :, None] * V[:, None, :] / np.sum(V * V, axis=1)[:, None, None]
    return H[:, :, 1:]


def _newton_batch(K, X, iters=60, max_step=0.3, tol=1e-12):
    X = X.copy()
    d = K.n + 1
    active = np.ones(X.shape[0], dtype=bool)
    for _ in range(iters):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        Xa = X[idx]
        B = _batch_tangent_bases(Xa)
        g = K.ambient_grad(Xa)
        H = K.ambient_hess(Xa)
        xg = np.sum(Xa * g, axis=1)
        gt = np.einsum("mdk,md->mk", B, g)
        gn = np.linalg.norm(gt, axis=1)
        done = gn < tol
        active[idx[done]] = False
        keep = ~done
        if not np.any(keep):
            break
        idx, Xa, B, gt, H, xg = idx[keep], Xa[keep], B[keep], gt[keep], H[keep], xg[keep]
        Ht = np.einsum("mdk,mde,mel->mkl", B, H - xg[:, None, None] * np.eye(d)[None], B)
        # Levenberg-style shift keeps singular Hessians solvable
        shift = 1e-14 * (1.0 + np.abs(Ht).max(axis=(1, 2)))
        Ht = Ht + shift[:, None, None] * np.eye(K.n)[None]
        try:
            step = -np.linalg.solve(Ht, gt[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            step = -gt
        sn = np.linalg.norm(step, axis=1)
        scale = np.minimum(1.0, max_step / np.maximum(sn, 1e-300))
        V = np.einsum("mdk,mk->md", B, step * scale[:, None])
        t = np.linalg.norm(V, axis=1)
        safe = np.maximum(t, 1e-300)
        Xn = np.cos(t)[:, None] * Xa + (np.sin(t) / safe)[:, None] * V
        X[idx] = Xn / np.linalg.norm(Xn, axis=1, keepdims=True)
    return X


def seed_points(n, count, seed=0):
    """2(n+1) coordinate poles followed by a scrambled-Sobol quasi-uniform set.

    The Sobol set is rounded up to the next power of two (2000 -> 2048).
    """
    poles = np.concatenate([np.eye(n + 1), -np.eye(n + 1)])
    if count <= 0:
        return poles
    sob = qmc.Sobol(d=n + 1, scramble=True, seed=seed)
    u = sob.random_base2(max(1, math.ceil(math.log2(count))))
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.concatenate([poles, g])


def _polish(K, x, iters=8):
    for _ in range(iters):
        B = tangent_basis(x)
        g = grad_K(K, x)
        gt = B.T @ g
        if np.linalg.norm(gt) < 1e-15:
            break
        Ht = hess_K(K, x, B)
        try:
            step = -np.linalg.solve(Ht, gt)
        except np.linalg.LinAlgError:
            break
        x = exp_map(x, B @ step)
    return x


def make_critical_point(K, x):
    x = as_point(x)
    B = tangent_basis(x)
    mu = np.sort(np.linalg.eigvalsh(hess_K(K, x, B)))
    g = grad_K(K, x)
    return CriticalPoint(location=x, value=K(x), grad_norm=float(np.linalg.norm(g)),
                         morse_index=int(np.sum(mu < 0)), laplacian=laplacian_K(K, x),
                         hessian_eigenvalues=mu)


def euler_characteristic(n):
    return 2 if n % 2 == 0 else 0


def _dedupe(X):
    # deterministic lexicographic order before merging
    order = np.lexsort(np.round(X, 9).T[::-1])
    out = []
    for x in X[order]:
        if all(geodesic_distance(x, y) >= DEDUP_TOL for y in out):
            out.append(x)
    return out


def find_critical_points(K, grid=2000, newton_tol=GRAD_TOL, seed=0, retries=2):
    """All critical points reached by multi-start projected Newton.

    Raises :class:`MorseViolationError` at the first degenerate point
    (hessian eigenvalue or Laplacian within 1e-6 of zero).  If the indices do
    not sum to the Euler characteristic the seed grid is quadrupled and the
    search repeated; a persistent mismatch is reported with
    :class:`IncompleteSearchWarning`.
    """
    count = grid
    for attempt in range(retries + 1):
        seeds = seed_points(K.n, count, seed)
        X = _newton_batch(K, seeds)
        gn = np.linalg.norm(grad_K(K, X), axis=1)
        conv = X[gn < 1e-7]
        pts = []
        for x in _dedupe(conv):
            x = _polish(K, x)
            cp = make_critical_point(K, x)
            if cp.grad_norm > newton_tol:
                continue
            if np.min(np.abs(cp.hessian_eigenvalues)) < DEGENERACY_TOL:
                raise MorseViolationError(
                    f"degenerate critical point at {np.round(x, 6).tolist()} "
                    f"(hessian eigenvalue {np.min(np.abs(cp.hessian_eigenvalues)):.3g})", x)
            if abs(cp.laplacian) <= DEGENERACY_TOL:
                raise MorseViolationError(
                    f"critical point at {np.round(x, 6).tolist()} has vanishing Laplacian", x)
            pts.append(cp)
        # polishing can merge neighbours; dedupe again on the final locations
        final = []
        for cp in pts:
            if all(geodesic_distance(cp.location, q.location) >= DEDUP_TOL for q in final):
                final.append(cp)
        if sum((-1) ** cp.morse_index for cp in final) == euler_characteristic(K.n):
            return final
        count *= 4
    warnings.warn(f"index sum of {len(final)} critical points does not match the Euler "
                  f"characteristic of S^{K.n}; search may be incomplete", IncompleteSearchWarning)
    return final


def classify_split(points):
    """(first class with -Delta K > 0, second class), order preserved."""
    first = [p for p in points if p.laplacian < 0]
    second = [p for p in points if p.laplacian >= 0]
    return first, second


# ---------------------------------------------------------------------------
# gradient flow lines of K


@dataclass
class FlowLineResult:
    limit: np.ndarray
    matched: CriticalPoint | None
    trace: list
    steps: int


def flow_line(K, x0, direction="ascend", points=None, step=0.05, max_steps=200_000,
              tol=GRAD_TOL, record_every=50):
    """Follow +grad K (ascend) or -grad K (descend) from ``x0``.

    Explicit steps on the sphere with renormalization and step halving when
    the objective fails to improve; once the Hessian has the definite sign of
    the target extremum, Newton polishing finishes the approach.  The limit is
    matched to ``points`` (if given) within 1e-6.
    """
    if direction not in ("ascend", "descend"):
        raise ValueError("direction must be 'ascend' or 'descend'")
    sgn = 1.0 if direction == "ascend" else -1.0
    x = as_point(x0)
    h = step
    trace = [x.copy()]
    val = K(x)
    for it in range(1, max_steps + 1):
        g = grad_K(K, x)
        gn = float(np.linalg.norm(g))
        if gn < tol:
            break
        if gn < 1e-3:
            mu = np.linalg.eigvalsh(hess_K(K, x))
            if (sgn > 0 and np.all(mu < 0)) or (sgn < 0 and np.all(mu > 0)):
                x = _polish(K, x, iters=20)
                trace.append(x.copy())
                if np.linalg.norm(grad_K(K, x)) < tol:
                    break
        xn = x + sgn * h * g
        xn /= np.linalg.norm(xn)
        vn = K(xn)
        if sgn * (vn - val) < 0:
            h *= 0.5
            if h < 1e-12:
                break
            continue
        x, val = xn, vn
        h = min(h * 1.1, 1.0)
        if it % record_every == 0:
            trace.append(x.copy())
    else:
        raise NonConvergenceError("flow line did not converge within the step budget", trace)
    trace.append(x.copy())
    if np.linalg.norm(grad_K(K, x)) >= tol:
        raise NonConvergenceError("flow line stalled before reaching a critical point", trace)
    matched = None
    if points is not None:
        for cp in points:
            if geodesic_distance(cp.location, x) < DEDUP_TOL:
                matched = cp
                break
    return FlowLineResult(limit=x, matched=matched, trace=trace, steps=it)


@dataclass
class A2Report:
    verdict: str
    samples: int
    tested_points: list
    witnesses: list
    nonconvergent: int

    def to_dict(self):
        return {"verdict": self.verdict, "samples": self.samples,
                "tested_points": self.tested_points,
                "witnesses": self.witnesses, "nonconvergent": self.nonconvergent}


def check_A2_heuristic(K, samples, points=None, radius=1e-2, seed=0):
    """Sample descent lines leaving second-class points; look for first-class limits.

    A heuristic only: "no intersection observed" is not a proof of
    disjointness of the stable and unstable manifolds.
    """
    if samples <= 0:
        return A2Report("untested", 0, [], [], 0)
    if points is None:
        points = find_critical_points(K)
    first, second = classify_split(points)
    rng = np.random.default_rng(seed)
    witnesses = []
    bad = 0
    tested = []
    for j, yj in enumerate(second):
        tested.append([float(v) for v in yj.location])
        B = tangent_basis(yj.location)
        for _ in range(samples):
            v = B @ rng.standard_normal(K.n)
            x0 = exp_map(yj.location, radius * v / np.linalg.norm(v))
            try:
                res = flow_line(K, x0, "descend", points)
            except NonConvergenceError:
                bad += 1
                continue
            if res.matched is not None and res.matched.first_class:
                witnesses.append({"from": [float(v) for v in yj.location],
                                  "to": [float(v) for v in res.matched.location]})
    verdict = "intersection witnessed" if witnesses else "no intersection observed"
    if not second:
        verdict = "no intersection observed"
    return A2Report(verdict, samples, tested, witnesses, bad)

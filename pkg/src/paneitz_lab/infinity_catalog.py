"""Interaction matrices, critical points at infinity and index-sum reports.

For n = 6 a tuple of first-class critical points (y_1, ..., y_s) carries the
symmetric matrix

    m_pp = -Delta K(y_p) / K(y_p)^{3/2},
    m_pq = -30 G(y_p, y_q) / (K(y_p) K(y_q))^{1/4},   G(x, y) = 1 / (1 - cos d(x, y)),

and the tuple gives a critical point at infinity exactly when its least
eigenvalue rho is positive.  In dimension 5 every first-class point gives
one, and the matrix is never needed.
"""

from dataclasses import dataclass, field
from itertools import combinations
import json
import math

import numpy as np

from .bubble_kernel import check_dim, sobolev_mass
from .morse_analyzer import (
    check_A2_heuristic,
    classify_split,
    find_critical_points,
)
from .sphere_geometry import green_function

RHO_TOL = 1e-9
SCHEMA = "paneitz-lab/1"


class CatalogDomainError(ValueError):
    pass


class BoundaryDegenerateError(ValueError):
    def __init__(self, message, tau=None, rho=None):
        super().__init__(message)
        self.tau = tau
        self.rho = rho


class TiedLevelsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# symmetric eigen-solver


def jacobi_eigh(A, tol=1e-15, max_sweeps=64):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi sweeps.

    Returns ascending eigenvalues and the matching orthonormal eigenvectors
    as columns.  Each sweep visits every off-diagonal pair once and zeroes it
    with a plane rotation; convergence is quadratic once the off-diagonal
    mass is small.
    """
    A = np.array(A, dtype=float, copy=True)
    m = A.shape[0]
    if A.shape != (m, m):
        raise ValueError("matrix must be square")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix must be symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(m)
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = math.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- R^T A R with R the rotation in the (p, q) plane
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise ArithmeticError("Jacobi sweeps did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


# ---------------------------------------------------------------------------
# interaction matrix


@dataclass
class InteractionMatrix:
    tau: tuple
    entries: np.ndarray
    rho: float
    eigenvalues: np.ndarray
    eigenvector: np.ndarray
    residual: float

    def to_dict(self):
        return {"tau": list(self.tau), "entries": self.entries.tolist(), "rho": float(self.rho),
                "eigenvalues": self.eigenvalues.tolist(),
                "eigenvector": self.eigenvector.tolist(), "residual": float(self.residual)}


def matrix_entries(locations, kvals, laplacians):
    """The raw matrix from point locations, K values and Laplacians."""
    Y = np.asarray(locations, dtype=float)
    Kv = np.asarray(kvals, dtype=float)
    L = np.asarray(laplacians, dtype=float)
    s = Y.shape[0]
    M = np.empty((s, s))
    for p in range(s):
        M[p, p] = -L[p] / Kv[p] ** 1.5
        for q in range(p + 1, s):
            M[p, q] = M[q, p] = -30.0 * green_function(Y[p], Y[q]) / (Kv[p] * Kv[q]) ** 0.25
    return M


def matrix_from_data(locations, kvals, laplacians, tau=None):
    M = matrix_entries(locations, kvals, laplacians)
    w, V = jacobi_eigh(M)
    v = V[:, 0]
    if v.sum() < 0:
        v = -v
    res = float(np.linalg.norm(M @ v - w[0] * v))
    if res > 1e-10 * max(1.0, np.abs(M).max()):
        raise ArithmeticError(f"eigen residual {res:.3g} too large")
    tau = tuple(range(len(w))) if tau is None else tuple(tau)
    return InteractionMatrix(tau, M, float(w[0]), w, v, res)


def interaction_matrix(tau, K, points, allow_second_class=False):
    """Interaction matrix of the tuple ``tau`` (indices into ``points``)."""
    if K.n != 6:
        raise CatalogDomainError("the interaction matrix is defined for n = 6 only")
    tau = tuple(int(i) for i in tau)
    if len(set(tau)) != len(tau) or not tau:
        raise CatalogDomainError("tuple indices must be distinct and nonempty")
    sel = [points[i] for i in tau]
    if not allow_second_class and any(not p.first_class for p in sel):
        raise CatalogDomainError("tuple contains a second-class point")
    return matrix_from_data([p.location for p in sel], [p.value for p in sel],
                            [p.laplacian for p in sel], tau)


@dataclass
class ConditionH:
    holds: bool
    lhs: float
    rhs: float

    def to_dict(self):
        return {"holds": self.holds, "lhs": self.lhs, "rhs": self.rhs}


def condition_H_data(y_i, y_j, k_i, k_j, lap_i, lap_j):
    lhs = float(lap_i * lap_j)
    rhs = float(900.0 * green_function(y_i, y_j) ** 2 * k_i * k_j)
    return ConditionH(lhs < rhs, lhs, rhs)


def condition_H(K, points, i, j):
    """Delta K(y_i) Delta K(y_j) < 900 G(y_i, y_j)^2 K(y_i) K(y_j)."""
    if i == j:
        raise CatalogDomainError("condition (H) compares two distinct points")
    a, b = points[i], points[j]
    return condition_H_data(a.location, b.location, a.value, b.value, a.laplacian, b.laplacian)


# ---------------------------------------------------------------------------
# critical points at infinity


@dataclass
class CpiRecord:
    tau: tuple
    locations: list
    n: int
    morse_index: int
    critical_value: float
    rho: float | None = None

    @property
    def p(self):
        return len(self.tau)

    def to_dict(self):
        return {"tau": list(self.tau), "p": self.p, "n": self.n,
                "locations": [[float(v) for v in y] for y in self.locations],
                "morse_index": self.morse_index, "critical_value": self.critical_value,
                "rho": self.rho}


def critical_value(n, kvals):
    """Level of the tuple: S_n^{4/n} (sum K^{-(n-4)/4})^{4/n}."""
    kvals = np.asarray(kvals, dtype=float)
    return float(sobolev_mass(n) ** (4.0 / n) * np.sum(kvals ** (-(n - 4) / 4.0)) ** (4.0 / n))


def index_at_infinity(n, indices):
    if n == 5:
        if len(indices) != 1:
            raise CatalogDomainError("n = 5 critical points at infinity are single bubbles")
        return 5 - int(indices[0])
    return 7 * len(indices) - 1 - int(sum(indices))


def _record(n, tau, pts, rho=None):
    return CpiRecord(tau=tuple(tau), locations=[pts[i].location for i in tau], n=n,
                     morse_index=index_at_infinity(n, [pts[i].morse_index for i in tau]),
                     critical_value=critical_value(n, [pts[i].value for i in tau]), rho=rho)


def _rho_checked(tau, K, points):
    im = interaction_matrix(tau, K, points)
    if abs(im.rho) < RHO_TOL:
        raise BoundaryDegenerateError(f"interaction matrix of {list(tau)} is degenerate "
                                      f"(rho = {im.rho:.3g})", tau, im.rho)
    return im.rho


def enumerate_cpi(K, n, points, prune=True):
    """Critical points at infinity as records sorted by level, then tuple.

    With ``prune`` the tuples are grown level by level and only tuples all of
    whose one-smaller sub-tuples have rho > 0 are evaluated.  Dropping the
    rest is safe: a principal submatrix has least eigenvalue at least rho of
    the full matrix, so a nonpositive sub-block forces rho <= 0.
    """
    check_dim(n)
    if K.n != n:
        raise CatalogDomainError("dimension of K does not match n")
    first = [i for i, p in enumerate(points) if p.first_class]
    if n == 5:
        recs = [_record(5, (i,), points) for i in first]
    elif not prune:
        recs = []
        for s in range(1, len(first) + 1):
            for tau in combinations(first, s):
                rho = _rho_checked(tau, K, points)
                if rho > 0:
                    recs.append(_record(6, tau, points, rho))
    else:
        recs = []
        alive = set()
        level = [(i,) for i in first]
        while level:
            nxt = set()
            for tau in level:
                rho = _rho_checked(tau, K, points)
                if rho > 0:
                    recs.append(_record(6, tau, points, rho))
                    alive.add(tau)
            # candidates of the next size whose every sub-tuple survived
            for tau in sorted(t for t in alive if len(t) == len(level[0])):
                for j in first:
                    if j <= tau[-1]:
                        continue
                    cand = tau + (j,)
                    if all(sub in alive for sub in combinations(cand, len(tau))):
                        nxt.add(cand)
            level = sorted(nxt)
    recs.sort(key=lambda r: (r.critical_value, r.tau))
    return recs


# ---------------------------------------------------------------------------
# theorem reports

# index-sum criteria and the dimension each one applies to
THEOREMS = {"t:1": 5, "t:2": 5, "t:3": 6, "t:4": 6, "t:5": 6}


def resolve_theorem(which):
    key = str(which).strip().lower()
    if key not in THEOREMS:
        raise CatalogDomainError(f"unknown theorem id {which!r}")
    return key


@dataclass
class HypothesisCheck:
    name: str
    verdict: str  # pass | fail | unverifiable
    witness: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "verdict": self.verdict, "witness": self.witness}


@dataclass
class TheoremReport:
    theorem: str
    n: int
    hypotheses: list
    index_sum: int | None
    forbidden_value: int | None
    criterion_holds: bool | None
    conclusion: str
    terms: list = field(default_factory=list)

    def to_dict(self):
        return {"schema": SCHEMA, "theorem": self.theorem, "n": self.n,
                "hypotheses": [h.to_dict() for h in self.hypotheses],
                "index_sum": self.index_sum, "forbidden_value": self.forbidden_value,
                "criterion_holds": self.criterion_holds, "conclusion": self.conclusion,
                "terms": self.terms}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _sketch(first):
    return {"first_class": [{"location": [float(v) for v in p.location],
                             "morse_index": p.morse_index} for p in first]}


def _check_H_all(K, points):
    idx = [i for i, p in enumerate(points) if p.first_class]
    failures = []
    pairs = 0
    for i, j in combinations(idx, 2):
        pairs += 1
        c = condition_H(K, points, i, j)
        if not c.holds:
            failures.append({"pair": [i, j], "lhs": c.lhs, "rhs": c.rhs})
    return HypothesisCheck("condition (H) on all first-class pairs",
                           "fail" if failures else "pass",
                           {"pairs": pairs, "failures": failures})


def _check_A2(K, points, samples, seed):
    rep = check_A2_heuristic(K, samples, points, seed=seed)
    verdict = {"no intersection observed": "pass", "intersection witnessed": "fail"}.get(
        rep.verdict, "unverifiable")
    w = rep.to_dict()
    w["note"] = "sampling heuristic, not a proof of disjointness"
    return HypothesisCheck("stable/unstable disjointness", verdict, w)


def _conclude(hyps, criterion):
    if any(h.verdict == "fail" for h in hyps) or criterion is False:
        return "criterion-inconclusive"
    if any(h.verdict == "unverifiable" for h in hyps) or criterion is None:
        return "hypothesis-unverifiable"
    return "solution-exists"


def theorem_report(K, n, which, points=None, a2_samples=8, seed=0, prune=True):
    """Evaluate the hypotheses and the index-sum criterion of one theorem."""
    key = resolve_theorem(which)
    need_n = THEOREMS[key]
    if n != need_n or K.n != n:
        raise CatalogDomainError(f"{key} applies to n = {need_n}")
    if points is None:
        points = find_critical_points(K, seed=seed)
    first, _ = classify_split(points)
    hyps, s, forbidden, terms = [], None, None, []
    if key == "t:1":
        terms = [{"location": [float(v) for v in p.location], "k": p.morse_index,
                  "term": (-1) ** p.morse_index} for p in first]
        s, forbidden = sum(t["term"] for t in terms), -1
    elif key == "t:4":
        hyps.append(_check_H_all(K, points))
        terms = [{"location": [float(v) for v in p.location], "k": p.morse_index,
                  "term": (-1) ** p.morse_index} for p in first]
        s, forbidden = sum(t["term"] for t in terms), 1
    elif key == "t:3":
        try:
            recs = enumerate_cpi(K, 6, points, prune=prune)
            hyps.append(HypothesisCheck("nondegenerate interaction matrices", "pass", {}))
        except BoundaryDegenerateError as err:
            hyps.append(HypothesisCheck("nondegenerate interaction matrices", "fail",
                                        {"tau": list(err.tau), "rho": err.rho}))
            recs = []
        if recs or hyps[-1].verdict == "pass":
            terms = [{"tau": list(r.tau), "s": r.p, "index": r.morse_index,
                      "term": (-1) ** r.morse_index, "rho": r.rho} for r in recs]
            s, forbidden = sum(t["term"] for t in terms), 1
    elif key == "t:2":
        hyps.append(HypothesisCheck("non-contractible stable set", "unverifiable", _sketch(first)))
        hyps.append(_check_A2(K, points, a2_samples, seed))
    else:  # t:5
        hyps.append(HypothesisCheck("non-contractible stable set", "unverifiable", _sketch(first)))
        hyps.append(_check_H_all(K, points))
        hyps.append(_check_A2(K, points, a2_samples, seed))
    crit = None if s is None else s != forbidden
    return TheoremReport(key, n, hyps, s, forbidden, crit, _conclude(hyps, crit), terms)


# ---------------------------------------------------------------------------
# level-crossing Euler characteristic


@dataclass
class LevelRow:
    location: list
    K: float
    morse_index: int
    level: float
    increment: int
    chi: int

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class EulerTrace:
    rows: list
    final_chi: int
    equals_one: bool

    def to_dict(self):
        return {"rows": [r.to_dict() for r in self.rows], "final_chi": self.final_chi,
                "equals_one": self.equals_one,
                "flag": ("consistent with no solution detection" if self.equals_one
                         else "existence criterion fires")}


def euler_characteristic_trace(K, n=6, points=None, rel_tol=1e-12):
    """Running Euler characteristic as the levels of single-bubble points are crossed."""
    if n != 6 or K.n != 6:
        raise CatalogDomainError("the level-crossing trace is defined for n = 6")
    if points is None:
        points = find_critical_points(K)
    first, _ = classify_split(points)
    first = sorted(first, key=lambda p: critical_value(6, [p.value]))
    levels = [critical_value(6, [p.value]) for p in first]
    for a, b in zip(levels, levels[1:]):
        if abs(b - a) <= rel_tol * abs(b):
            raise TiedLevelsError("two first-class points share a critical level")
    rows, chi = [], 0
    for p, c in zip(first, levels):
        inc = (-1) ** (6 - p.morse_index)
        chi += inc
        rows.append(LevelRow([float(v) for v in p.location], float(p.value), p.morse_index,
                             c, inc, chi))
    return EulerTrace(rows, chi, chi == 1)


def records_to_json(records, n):
    return json.dumps({"schema": SCHEMA, "n": n, "records": [r.to_dict() for r in records]},
                      indent=2, sort_keys=True)


"""Finite-dimensional dynamics of bubble parameters near sums of bubbles.

A state is (alpha_i, a_i, s_i = 1/lambda_i).  Two drivers move it:

* ``leading``: descent along the leading-order gradient pairings of J, with
  the lambda-rates normalized so that a well separated n = 6 configuration
  near critical points obeys ds/dt = -kappa M s;
* ``pseudogradient``: the region-by-region vector field built from the
  directions Z_1, Z_a, Z_2, ... (the sets V1..V5 partition the tube).

Weights are slaved to the balance alpha_i^{8/(n-4)} J^{n/(n-4)} K(a_i) = 1
after every step.
"""

from dataclasses import dataclass, field
import csv
import io
import json
import math

import numpy as np

from .bubble_kernel import Configuration, check_dim, epsilon_ij
from .infinity_catalog import SCHEMA, BoundaryDegenerateError, enumerate_cpi, matrix_from_data
from .morse_analyzer import find_critical_points, grad_K, laplacian_K
from .paneitz_functional import (
    balanced_alphas,
    expansion_value,
    grad_a_pairing,
    grad_lambda_pairing,
    self_constant,
)
from .sphere_geometry import exp_map, geodesic_distance, project_tangent, tangent_basis

REGIONS = ("V1", "V2", "V3", "V4", "V5", "exterior")
OUTCOMES = ("blowup", "collapse", "exited", "step-limit")


class RegimeError(ValueError):
    pass


class UnclassifiableStateError(ValueError):
    pass


@dataclass(frozen=True)
class FlowParams:
    """Constants of the pseudogradient and of the integrator."""

    C: float = 10.0
    m: float = 0.1
    gamma: float = 0.2
    gamma_prime: float = 0.1
    kappa_lam: float = 1.0
    kappa_a: float = 1.0
    lambda_min: float = 20.0
    eps_max: float = 1e-2
    w_max: float | None = None
    blowup_ratio: float = 1e-6
    settle_tol: float = 1e-8
    dlog_step: float = 0.05
    da_step: float = 0.01
    dt_max: float = 1.0
    max_steps: int = 20000
    record_every: int = 10

    @property
    def speed_cap(self):
        return self.C if self.w_max is None else self.w_max

    def to_dict(self):
        d = dict(self.__dict__)
        d["speed_cap"] = self.speed_cap
        return d


# ---------------------------------------------------------------------------
# state


@dataclass(frozen=True)
class FlowState:
    alphas: np.ndarray
    centers: np.ndarray
    inv_lambdas: np.ndarray
    t: float = 0.0
    n: int = 6

    def __post_init__(self):
        check_dim(self.n)
        al = np.asarray(self.alphas, dtype=float).reshape(-1)
        C = np.atleast_2d(np.asarray(self.centers, dtype=float))
        s = np.asarray(self.inv_lambdas, dtype=float).reshape(-1)
        if not (al.size == C.shape[0] == s.size) or C.shape[1] != self.n + 1:
            raise ValueError("inconsistent state shapes")
        if not (np.all(np.isfinite(al)) and np.all(np.isfinite(C)) and np.all(np.isfinite(s))):
            raise ValueError("state is not finite")
        if np.any(s <= 0) or np.any(al <= 0):
            raise ValueError("weights and inverse concentrations must be positive")
        C = C / np.linalg.norm(C, axis=1, keepdims=True)
        object.__setattr__(self, "alphas", al)
        object.__setattr__(self, "centers", C)
        object.__setattr__(self, "inv_lambdas", s)

    @property
    def p(self):
        return self.inv_lambdas.size

    @property
    def lams(self):
        return 1.0 / self.inv_lambdas

    def config(self):
        return Configuration.from_arrays(self.alphas, self.centers, self.lams, self.n)

    @classmethod
    def balanced(cls, K, centers, lams, t=0.0):
        C = np.atleast_2d(np.asarray(centers, dtype=float))
        n = C.shape[1] - 1
        al = balanced_alphas(K, C / np.linalg.norm(C, axis=1, keepdims=True), n)
        return cls(al, C, 1.0 / np.asarray(lams, dtype=float), t, n)


@dataclass
class Velocity:
    """d(log lambda_i)/dt and da_i/dt (ambient tangent vectors)."""

    dlog_lam: np.ndarray
    da: np.ndarray
    region: str = ""
    case: str = ""

    def d_inv_lambdas(self, state):
        return -state.inv_lambdas * self.dlog_lam


@dataclass
class RegionLabel:
    label: str
    witness: dict = field(default_factory=dict)

    def to_dict(self):
        return {"label": self.label, "witness": self.witness}


# ---------------------------------------------------------------------------
# critical-point context


@dataclass
class CriticalData:
    """Critical points of K flattened into arrays for fast lookup."""

    points: list
    locations: np.ndarray
    values: np.ndarray
    laplacians: np.ndarray

    @classmethod
    def of(cls, points):
        if not points:
            raise ValueError("no critical points")
        return cls(list(points), np.array([p.location for p in points]),
                   np.array([p.value for p in points]), np.array([p.laplacian for p in points]))

    def first_class(self, j):
        return self.laplacians[j] < 0

    def nearest(self, centers):
        D = geodesic_distance(centers[:, None, :], self.locations[None, :, :])
        D = np.atleast_2d(D)
        j = np.argmin(D, axis=1)
        return j, D[np.arange(D.shape[0]), j]

    def rho(self, tau):
        if len(tau) == 1:
            j = tau[0]
            return -self.laplacians[j] / self.values[j] ** 1.5, np.ones(1)
        im = matrix_from_data(self.locations[list(tau)], self.values[list(tau)],
                              self.laplacians[list(tau)], tau)
        return im.rho, im.eigenvector


def eta_bound(points):
    if isinstance(points, CriticalData):
        points = points.points
    locs = np.array([p.location for p in points])
    if len(locs) < 2:
        return math.pi / 4
    D = geodesic_distance(locs[:, None, :], locs[None, :, :])
    D[np.diag_indices_from(D)] = np.inf
    return 0.25 * float(D.min())


def default_eta(K, points, samples=64, seed=0):
    """0.2 x the smallest separation, shrunk until Delta K keeps its sign on each ball."""
    eta = 0.8 * eta_bound(points)
    rng = np.random.default_rng(seed)
    for _ in range(60):
        ok = True
        for p in points:
            B = tangent_basis(p.location)
            V = rng.standard_normal((samples, K.n)) @ B.T
            V /= np.linalg.norm(V, axis=1, keepdims=True)
            for r in (eta, 0.5 * eta):
                X = np.array([exp_map(p.location, r * v) for v in V])
                L = laplacian_K(K, X)
                if np.any(np.sign(L) != np.sign(p.laplacian)) or np.any(np.abs(L) < 1e-6):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return eta
        eta *= 0.8
    raise ValueError("could not find a radius on which Delta K keeps its sign")


# ---------------------------------------------------------------------------
# regions


def in_tube(state, lambda_min, eps_max):
    lams = state.lams
    if np.any(lams < lambda_min):
        return False, {"reason": "lambda below minimum", "lambda_min": float(lams.min())}
    cfg = state.config()
    worst = 0.0
    for i in range(state.p):
        for j in range(i + 1, state.p):
            worst = max(worst, epsilon_ij(cfg.bubbles[i], cfg.bubbles[j]))
    if worst >= eps_max:
        return False, {"reason": "interaction above maximum", "eps": worst}
    return True, {}


def _classify_indices(centers, lams, crit, eta, n):
    """Region of a sub-configuration (no tube test)."""
    j, d = crit.nearest(centers)
    far = [int(i) for i in np.nonzero(d > 0.5 * eta)[0]]
    if far:
        return RegionLabel("V5", {"far": far, "distances": d.tolist()})
    tau = [int(x) for x in j]
    if len(set(tau)) < len(tau):
        groups = {}
        for i, jj in enumerate(tau):
            groups.setdefault(jj, []).append(i)
        return RegionLabel("V4", {"tau": tau, "shared": {str(k): v for k, v in groups.items()
                                                         if len(v) > 1}})
    second = [i for i, jj in enumerate(tau) if not crit.first_class(jj)]
    if second:
        return RegionLabel("V3", {"tau": tau, "second_class": second})
    if n == 5:
        label = "V1" if len(tau) == 1 else "V2"
        return RegionLabel(label, {"tau": tau})
    rho, _ = crit.rho(tau)
    return RegionLabel("V1" if rho > 0 else "V2", {"tau": tau, "rho": float(rho)})


def classify_region(state, K, points, eta, eps_max=1e-2, lambda_min=20.0):
    """First matching clause among V5, V4, V3, V2, V1; exterior outside the tube."""
    if eta > eta_bound(points) * (1 + 1e-12):
        raise ValueError("eta exceeds a quarter of the smallest critical-point separation")
    ok, why = in_tube(state, lambda_min, eps_max)
    if not ok:
        return RegionLabel("exterior", why)
    crit = points if isinstance(points, CriticalData) else CriticalData.of(points)
    return _classify_indices(state.centers, state.lams, crit, eta, state.n)


# ---------------------------------------------------------------------------
# leading-order driver


def _speed_normalizer(n, J):
    # 8 ((n-4)/n) c_2 J^{-(n-4)/4}: turns the lambda pairing of a balanced
    # V1 configuration into -(M s)_i s_i for n = 6
    return 8.0 * (n - 4) / n * self_constant(n) * J ** (-(n - 4) / 4.0)


def velocity_leading(state, K, params=FlowParams(), check_regime=True):
    """Descent velocity from the leading-order pairings.

    ds_i/dt = kappa_lam alpha_i <grad J, lam_i d(delta_i)/d(lam_i)> / (nu s_i),
    da_i/dt = -kappa_a alpha_i <grad J, (1/lam_i) d(delta_i)/d(a_i)> / nu,
    with nu the normalizer above.
    """
    if check_regime:
        ok, why = in_tube(state, params.lambda_min, params.eps_max)
        if not ok:
            raise RegimeError(f"state outside the expansion tube: {why}")
    n = state.n
    cfg = state.config()
    J = expansion_value(cfg, K)
    nu = _speed_normalizer(n, J)
    s = state.inv_lambdas
    dlog = np.empty(state.p)
    da = np.empty_like(state.centers)
    for i in range(state.p):
        g = grad_lambda_pairing(cfg, K, i, J, lambda_min=0.0, eps_max=math.inf)
        ds = params.kappa_lam * state.alphas[i] * g / (nu * s[i])
        dlog[i] = -ds / s[i]
        ga = grad_a_pairing(cfg, K, i, J, lambda_min=0.0, eps_max=math.inf)
        da[i] = -params.kappa_a * state.alphas[i] * ga / nu
    return Velocity(dlog, da, case="leading")


# ---------------------------------------------------------------------------
# pseudogradient


def smooth_step(t, lo, hi):
    """0 for t <= lo, 1 for t >= hi, C^1 in between."""
    x = np.clip((np.asarray(t, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _unit_grad(K, a):
    g = grad_K(K, a)
    nrm = float(np.linalg.norm(g))
    return (g / nrm if nrm > 0 else np.zeros_like(g)), nrm


def _z_a(idx, st, K, weight=1.0):
    """Move each center up grad K at rate s_i, switched on by phi(lam |grad K|)."""
    da = np.zeros_like(st.centers)
    for i in idx:
        u, g = _unit_grad(K, st.centers[i])
        da[i] = weight * float(smooth_step(st.lams[i] * g, 1.0, 2.0)) * st.inv_lambdas[i] * u
    return da


def _z2_ds(s, e):
    """ds moving Lambda/|Lambda| toward e along y(t) = (1-t) Lambda + t |Lambda| e."""
    L = float(np.linalg.norm(s))
    w = L * e - s
    return w - s * float(s @ w) / (L * L)


class _Field:
    def __init__(self, p, dim):
        self.dlog = np.zeros(p)
        self.da = np.zeros((p, dim))
        self.notes = []

    def add(self, other, scale=1.0):
        self.dlog += scale * other.dlog
        self.da += scale * other.da


def _sub_state(st, idx):
    return FlowState(st.alphas[idx], st.centers[idx], st.inv_lambdas[idx], st.t, st.n)


def _embed(sub, idx, p, dim):
    out = _Field(p, dim)
    out.dlog[idx] = sub.dlog
    out.da[idx] = sub.da
    out.notes = sub.notes
    return out


def _v2_field(st, K, idx, M_rho_e, P):
    """V2 rule on the indices ``idx`` (case 1: -C Z_1, case 2: C Z_2)."""
    f = _Field(st.p, st.n + 1)
    rho, e = M_rho_e
    s = st.inv_lambdas[idx]
    sh = s / np.linalg.norm(s)
    if np.linalg.norm(sh - e) <= P.gamma:
        f.dlog[idx] = -P.C
        f.notes.append("V2 case 1")
    else:
        ds = P.C * _z2_ds(s, e)
        f.dlog[idx] = -ds / s
        f.notes.append("V2 case 2")
    return f


def _field6(st, K, crit, eta, P):
    """Unscaled n = 6 field on the whole state; returns (_Field, label)."""
    p, dim = st.p, st.n + 1
    lab = _classify_indices(st.centers, st.lams, crit, eta, st.n)
    allidx = list(range(p))
    f = _Field(p, dim)
    if lab.label == "V1":
        f.dlog[:] = P.C
        f.da += _z_a(allidx, st, K)
        f.notes.append("V1")
    elif lab.label == "V2":
        tau = lab.witness["tau"]
        f.add(_v2_field(st, K, allidx, crit.rho(tuple(tau)), P))
        f.da += _z_a(allidx, st, K)
    elif lab.label == "V3":
        Q = lab.witness["second_class"]
        f.dlog[Q] -= P.C
        lmin = min(st.lams[k] for k in Q)
        I = [i for i in allidx if st.lams[i] <= 0.1 * lmin]
        if I:
            # the matrix of the points a_i themselves, i in I
            A = st.centers[I]
            im = matrix_from_data(A, K(A), laplacian_K(K, A))
            if im.rho > 0:
                f.dlog[I] += 1.0
                f.notes.append("V3 sub-block positive definite")
            else:
                f.add(_v2_field(st, K, I, (im.rho, im.eigenvector), P))
                f.notes.append("V3 sub-block indefinite")
        f.da += P.m * _z_a(allidx, st, K)
        f.notes.append("V3")
    elif lab.label == "V4":
        tau = lab.witness["tau"]
        groups = {}
        for i, jj in enumerate(tau):
            groups.setdefault(jj, []).append(i)
        multi = [g for g in groups.values() if len(g) > 1]
        chibar = np.zeros(p)
        for g in multi:
            for jx in g:
                chibar[jx] = sum(float(smooth_step(st.lams[jx] / st.lams[ix], P.gamma_prime, 1.0))
                                 for ix in g if ix != jx)
        z4 = -chibar
        i0 = int(np.argmin(st.lams))
        sub1 = any(chibar[j] > 0 and st.lams[i0] / st.lams[j] > P.gamma_prime for j in allidx)
        f.dlog += P.C * z4
        if sub1:
            f.da += _z_a(allidx, st, K)
            f.notes.append("V4 subcase 1")
        else:
            in_multi = set(i for g in multi for i in g)
            D = [i for i in allidx
                 if (chibar[i] == 0 or i not in in_multi)
                 and st.lams[i] / st.lams[i0] < 1.0 / P.gamma_prime]
            if D:
                sub, _ = _field6(_sub_state(st, D), K, crit, eta, P)
                f.add(_embed(sub, D, p, dim))
            f.da += P.m * _z_a(allidx, st, K)
            f.notes.append("V4 subcase 2")
    elif lab.label == "V5":
        order = list(np.argsort(st.lams, kind="stable"))
        _, d = crit.nearest(st.centers)
        pos = next(k for k, i in enumerate(order) if d[i] > 0.5 * eta)
        head = [int(i) for i in order[:pos]]
        if head:
            sub, _ = _field6(_sub_state(st, head), K, crit, eta, P)
            f.add(_embed(sub, head, p, dim))
        i1 = int(order[pos])
        u, _ = _unit_grad(K, st.centers[i1])
        f.da[i1] += P.C * st.inv_lambdas[i1] * u
        for k in range(pos, p):
            f.dlog[order[k]] -= P.C * P.C * 2.0 ** (k + 1)
        f.notes.append("V5")
    else:
        raise UnclassifiableStateError(lab.label)
    return f, lab


def _field5(st, K, crit, eta, P):
    """n = 5: one bubble (sign of -Delta K near a critical point) or several."""
    p, dim = st.p, st.n + 1
    lab = _classify_indices(st.centers, st.lams, crit, eta, st.n)
    mu = 0.5 * eta
    f = _Field(p, dim)
    j, d = crit.nearest(st.centers)
    if p == 1:
        w = 1.0 - float(smooth_step(d[0], mu, 2.0 * mu))
        u, g = _unit_grad(K, st.centers[0])
        s = st.inv_lambdas[0]
        sgn = 1.0 if crit.first_class(j[0]) else -1.0
        phi = float(smooth_step(st.lams[0] * g, 1.0, 2.0))
        f.dlog[0] = w * sgn
        f.da[0] = (w * P.m * phi + (1.0 - w)) * s * u
        f.notes.append("single bubble near critical point" if w > 0 else "single bubble far")
        return f, lab
    order = list(np.argsort(st.lams, kind="stable"))
    for k in range(1, p):
        f.dlog[order[k]] -= P.C * 2.0 ** (k + 1)
    grads = [_unit_grad(K, st.centers[i]) for i in range(p)]
    I = [i for i in range(p) if st.lams[i] * grads[i][1] >= 1.0]
    i1 = order[0]
    case2 = st.lams[order[1]] >= st.lams[i1] ** 2 and d[i1] <= 2.0 * mu
    scale = P.m if case2 else 1.0
    for i in I:
        f.da[i] += scale * st.inv_lambdas[i] * grads[i][0]
    if case2:
        f.dlog[i1] += 1.0 if crit.first_class(j[i1]) else -1.0
        f.notes.append("several bubbles, case 2")
    else:
        f.notes.append("several bubbles, case 1")
    return f, lab


def pseudogradient_W(state, K, points, eta, params=FlowParams()):
    """Parameter velocity of the pseudogradient in the region of ``state``.

    The result is scaled so that max_i max(|d log lam_i|, lam_i |da_i|)
    does not exceed the speed cap.
    """
    crit = points if isinstance(points, CriticalData) else CriticalData.of(points)
    ok, why = in_tube(state, params.lambda_min, params.eps_max)
    if not ok:
        raise UnclassifiableStateError(f"state outside the tube: {why}")
    field_fn = _field6 if state.n == 6 else _field5
    f, lab = field_fn(state, K, crit, eta, params)
    speed = max(float(np.max(np.abs(f.dlog))),
                float(np.max(np.linalg.norm(f.da, axis=1) * state.lams)))
    cap = params.speed_cap
    if speed > cap:
        f.dlog *= cap / speed
        f.da *= cap / speed
    return Velocity(f.dlog, f.da, lab.label, "; ".join(f.notes))


# ---------------------------------------------------------------------------
# integration


@dataclass
class FlowTrace:
    driver: str
    n: int
    params: dict
    rows: list
    outcome: str
    tau: tuple | None
    matched: bool
    steps: int
    tail_region: str
    diagnostics: dict

    def to_dict(self):
        return {"schema": SCHEMA, "driver": self.driver, "n": self.n, "params": self.params,
                "outcome": self.outcome, "tau": None if self.tau is None else list(self.tau),
                "matched": self.matched, "steps": self.steps, "tail_region": self.tail_region,
                "diagnostics": self.diagnostics}

    def header(self):
        p = (len(self.rows[0]) - 3) // (self.n + 3) if self.rows else 0
        cols = ["t"] + [f"alpha_{i}" for i in range(p)]
        cols += [f"a_{i}_{k}" for i in range(p) for k in range(self.n + 1)]
        cols += [f"s_{i}" for i in range(p)] + ["region", "J_expansion"]
        return cols

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.header())
        for r in self.rows:
            w.writerow([x if isinstance(x, str) else format(x, ".17g") for x in r])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _advance(st, K, v, dt):
    s = np.exp(np.log(st.inv_lambdas) - dt * v.dlog_lam)
    C = np.array([exp_map(a, dt * project_tangent(a, d)) for a, d in zip(st.centers, v.da)])
    al = balanced_alphas(K, C, st.n)
    return FlowState(al, C, s, st.t + dt, st.n)


def _row(st, region, J):
    return ([st.t] + st.alphas.tolist() + st.centers.reshape(-1).tolist()
            + st.inv_lambdas.tolist() + [region, J])


def _budget(st, K):
    cfg = st.config()
    g = np.linalg.norm(grad_K(K, st.centers), axis=1)
    b = float(np.sum(g * st.inv_lambdas) + np.sum(st.inv_lambdas ** 2))
    for i in range(st.p):
        for j in range(st.p):
            if i != j:
                b += epsilon_ij(cfg.bubbles[i], cfg.bubbles[j])
    return b


def integrate_flow(state0, K, driver="leading", points=None, eta=None, params=FlowParams()):
    """Integrate one trajectory until blowup, exit from the tube or the step limit.

    Explicit Heun steps in (log s, a); the step is halved when the predictor
    leaves the admissible set.  Blowup: max s below blowup_ratio times its
    initial value and center motion below settle_tol per step.
    """
    if driver not in ("leading", "pseudogradient"):
        raise ValueError("driver must be 'leading' or 'pseudogradient'")
    if points is None:
        points = find_critical_points(K)
    crit = points if isinstance(points, CriticalData) else CriticalData.of(points)
    if eta is None:
        eta = default_eta(K, crit.points)
    ok, why = in_tube(state0, params.lambda_min, params.eps_max)
    if not ok:
        raise RegimeError(f"initial state outside the tube: {why}")

    def vel(st):
        if driver == "leading":
            return velocity_leading(st, K, params, check_regime=False)
        return pseudogradient_W(st, K, crit, eta, params)

    st = state0
    s0 = float(state0.inv_lambdas.max())
    J = expansion_value(st.config(), K)
    lab = _classify_indices(st.centers, st.lams, crit, eta, st.n).label
    rows = [_row(st, lab, J)]
    regions = {lab: 1}
    descent_viol, worst_rise = 0, 0.0
    entered, monotone = False, True
    min_budget = _budget(st, K)
    outcome, steps = "step-limit", params.max_steps
    for step in range(1, params.max_steps + 1):
        v = vel(st)
        rate = max(float(np.max(np.abs(v.dlog_lam))) / params.dlog_step,
                   float(np.max(np.linalg.norm(v.da, axis=1))) / params.da_step, 1e-300)
        dt = min(params.dt_max, 1.0 / rate)
        while True:
            try:
                pred = _advance(st, K, v, dt)
                if not in_tube(pred, 0.5 * params.lambda_min, 1.0)[0]:
                    raise ValueError
                v2 = vel(pred)
                avg = Velocity(0.5 * (v.dlog_lam + v2.dlog_lam), 0.5 * (v.da + v2.da))
                new = _advance(st, K, avg, dt)
                break
            except (ValueError, UnclassifiableStateError):
                # predictor outside the tube: fall back to a single Euler step
                if dt < 1e-12:
                    new = _advance(st, K, v, dt)
                    break
                try:
                    new = _advance(st, K, v, dt)
                    break
                except ValueError:
                    dt *= 0.5
        motion = float(np.max(geodesic_distance(new.centers, st.centers)))
        lam_up = np.all(new.lams >= st.lams * (1 - 1e-12))
        st = new
        J_new = expansion_value(st.config(), K)
        rise = J_new - J
        if rise > 1e-9 * abs(J):
            descent_viol += 1
            worst_rise = max(worst_rise, rise / abs(J))
        J = J_new
        ok, why = in_tube(st, params.lambda_min, params.eps_max)
        lab = _classify_indices(st.centers, st.lams, crit, eta, st.n).label if ok else "exterior"
        regions[lab] = regions.get(lab, 0) + 1
        _, dist = crit.nearest(st.centers)
        if entered and not lam_up:
            monotone = False
        if np.all(dist <= eta):
            entered = True
        min_budget = min(min_budget, _budget(st, K))
        if step % params.record_every == 0:
            rows.append(_row(st, lab, J))
        if not ok:
            outcome = "collapse" if why["reason"].startswith("interaction") else "exited"
            steps = step
            break
        if st.inv_lambdas.max() < params.blowup_ratio * s0 and motion < params.settle_tol:
            outcome, steps = "blowup", step
            break
    if rows[-1][0] != st.t:
        rows.append(_row(st, lab, J))
    tau, matched = None, False
    if outcome == "blowup":
        j, dist = crit.nearest(st.centers)
        tau = tuple(sorted(int(x) for x in j))
        matched = bool(np.all(dist <= eta)) and len(set(tau)) == len(tau)
    diag = {"descent_violations": descent_viol, "worst_relative_rise": worst_rise,
            "monotone_lambda_after_entry": bool(monotone), "entered_eta_balls": bool(entered),
            "min_budget": min_budget, "final_budget": _budget(st, K), "regions": regions,
            "eta": eta, "final_inv_lambdas": st.inv_lambdas.tolist(),
            "final_centers": st.centers.tolist()}
    return FlowTrace(driver, st.n, params.to_dict(), rows, outcome, tau, matched, steps, lab, diag)


def s_direction(trace):
    """Unit direction of the final inverse concentrations."""
    s = np.asarray(trace.diagnostics["final_inv_lambdas"])
    return s / np.linalg.norm(s)


# ---------------------------------------------------------------------------
# surveys


def seed_state(K, crit, targets, eta, lam_range, rng, radius_frac=0.8):
    """Random state with center i in the eta/2-ball of critical point targets[i]."""
    C = []
    for j in targets:
        y = crit.locations[j]
        B = tangent_basis(y)
        v = B @ rng.standard_normal(K.n)
        r = radius_frac * 0.5 * eta * rng.uniform() ** (1.0 / K.n)
        C.append(exp_map(y, r * v / np.linalg.norm(v)))
    lo, hi = lam_range
    lams = np.exp(rng.uniform(math.log(lo), math.log(hi), len(targets)))
    return FlowState.balanced(K, np.array(C), lams)


@dataclass
class SurveyResult:
    histogram: dict
    violations: list
    samples: int
    records: list

    def to_dict(self):
        return {"schema": SCHEMA, "histogram": self.histogram, "violations": self.violations,
                "samples": self.samples, "records": [r.to_dict() for r in self.records]}


def basin_survey(K, n, p, samples, seed=0, driver="leading", points=None, eta=None,
                 params=FlowParams(), lam_range=None):
    """Histogram of trajectory outcomes from random in-tube seeds near critical points.

    Every blowup must land on an enumerated critical point at infinity;
    anything else is recorded as a violation.
    """
    if K.n != n:
        raise ValueError("dimension of K does not match n")
    if points is None:
        points = find_critical_points(K, seed=seed)
    crit = CriticalData.of(points)
    if eta is None:
        eta = default_eta(K, points)
    try:
        records = enumerate_cpi(K, n, points)
    except BoundaryDegenerateError:
        records = []
    allowed = {tuple(sorted(r.tau)) for r in records}
    hist, bad = {}, []
    if samples <= 0:
        return SurveyResult(hist, bad, 0, records)
    if p > len(points):
        raise ValueError("more bubbles than critical points")
    lam_range = lam_range or (1.5 * params.lambda_min, 10.0 * params.lambda_min)
    rng = np.random.default_rng(seed)
    done = 0
    while done < samples:
        targets = rng.choice(len(points), size=p, replace=False)
        st = seed_state(K, crit, targets, eta, lam_range, rng)
        if not in_tube(st, params.lambda_min, params.eps_max)[0]:
            continue
        tr = integrate_flow(st, K, driver, crit, eta, params)
        key = tr.outcome if tr.tau is None else f"blowup{list(tr.tau)}"
        hist[key] = hist.get(key, 0) + 1
        if tr.outcome == "blowup" and (not tr.matched or tr.tau not in allowed):
            bad.append({"seed_targets": [int(x) for x in targets], "tau": list(tr.tau),
                        "matched": tr.matched})
        done += 1
    return SurveyResult(dict(sorted(hist.items())), bad, samples, records)

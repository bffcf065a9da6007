"""Paneitz operator constants, the variational norm, the functional J and its
asymptotic expansion near sums of bubbles.

On S^n the operator is P = Delta^2 - c_n Delta + d_n and the bubbles satisfy
P delta = delta^{(n+4)/(n-4)}, so pairings <delta_j, phi> reduce to
int delta_j^{(n+4)/(n-4)} phi.  The norm itself is always evaluated from its
three quadrature terms, which keeps that identity testable.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
import math
import warnings

import numpy as np

from .bubble_kernel import (
    Bubble,
    Configuration,
    beta_n,
    check_dim,
    epsilon_dlambda,
    epsilon_ij,
    flat_bubble,
    profile,
    profile_da_factor,
    profile_lam_dlam,
    sobolev_mass,
)
from .morse_analyzer import CurvatureField, grad_K, laplacian_K
from .sphere_geometry import (
    DEFAULT_RULE,
    integrate_axisym,
    integrate_biaxisym,
    integrate_radial_angular,
    integrate_radial_rn,
    tangent_basis,
)

LAMBDA_MIN = 20.0
EPS_MAX = 1e-2


class DomainError(ValueError):
    pass


class CalibrationError(RuntimeError):
    pass


class RegimeWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# operator constants


@dataclass(frozen=True)
class PaneitzConstants:
    n: int
    a_n: float
    b_n: float
    c_n: float
    d_n: float


def paneitz_constants(n):
    check_dim(n)
    a = Fraction((n - 2) ** 2 + 4, 2 * (n - 1) * (n - 2))
    b = Fraction(-4, n - 2)
    c = Fraction(n * n - 2 * n - 4, 2)
    d = Fraction((n - 4) * n * (n * n - 4), 16)
    return PaneitzConstants(n, float(a), float(b), float(c), float(d))


def paneitz_symbol(k, n):
    """Eigenvalue of P on degree-k spherical harmonics."""
    if k < 0:
        raise ValueError("harmonic degree must be non-negative")
    pc = paneitz_constants(n)
    mu = k * (k + n - 1)
    return mu * mu + pc.c_n * mu + pc.d_n


# ---------------------------------------------------------------------------
# radial constants


@lru_cache(maxsize=None)
def interaction_constant(n):
    """c_1 = beta^{2n/(n-4)} int_{R^n} (1 + |x|^2)^{-(n+4)/2}."""
    check_dim(n)
    return beta_n(n) ** (2.0 * n / (n - 4)) * integrate_radial_rn(
        lambda r: (1.0 + r * r) ** (-0.5 * (n + 4)), n)


@lru_cache(maxsize=None)
def self_constant(n):
    """c_2 = (1/2n) int_{R^n} |x|^2 delta_(0,1)^{2n/(n-4)}."""
    check_dim(n)
    q = 2.0 * n / (n - 4)
    return integrate_radial_rn(lambda r: r * r * flat_bubble(n, 1.0, r) ** q, n) / (2.0 * n)


@dataclass(frozen=True)
class Calibration:
    """Record of the numerical calibration of the center-gradient constant."""

    n: int
    lam: float
    center_axis: int
    gradient_axis: int
    c3: float
    c3_check: float
    residual: float
    tolerance: float = 0.05

    def to_dict(self):
        return dict(self.__dict__)


def _calibration_field(n):
    # K = 1 + x_0, probed at e_1 where K = 1 and grad K = e_0
    return CurvatureField.linear(n, 1.0, axis=0)


def _c3_at(n, lam):
    K = _calibration_field(n)
    a = np.eye(n + 1)[1]
    v = np.eye(n + 1)[0]
    b = Bubble.at(a, lam, n)
    cfg = Configuration(np.array([1.0]), (b,), n)
    phi = lambda X: profile_da_factor(n, lam, X @ a) * (X @ v) / lam
    pairing, J = direct_gradient_pairing(cfg, K, phi, angular_order=2)
    grad_dot_v = float(grad_K(K, a) @ v)
    return -pairing * lam / (2.0 * J ** ((2.0 * n - 4) / (n - 4)) * grad_dot_v)


@lru_cache(maxsize=None)
def calibrate_c3(n, lam=1e3):
    """Calibrate c_3 at one bubble of concentration ``lam`` on K = 1 + x_0.

    The same quantity at 2*lam serves as the residual check: the pairing
    formula is exact up to O(1/lam), so the two must agree within 5%.
    """
    check_dim(n)
    c3 = _c3_at(n, lam)
    c3b = _c3_at(n, 2.0 * lam)
    res = abs(c3b - c3) / abs(c3)
    cal = Calibration(n=n, lam=lam, center_axis=1, gradient_axis=0, c3=c3, c3_check=c3b,
                      residual=res)
    if res > cal.tolerance or not c3 > 0:
        raise CalibrationError(f"c3 calibration residual {res:.3g} exceeds {cal.tolerance}")
    return cal


def constants_c(n):
    """(c_1, c_2, c_3, S_n) for n in {5, 6}."""
    check_dim(n)
    return interaction_constant(n), self_constant(n), calibrate_c3(n).c3, sobolev_mass(n)


# ---------------------------------------------------------------------------
# bubble fields: value, gradient and Laplacian on the sphere


def _profile_c_derivatives(n, lam, c):
    """(P, dP/dc, d2P/dc2) of the bubble profile as a function of c = cos d."""
    h = 0.5 * (n - 4)
    kap = 0.5 * (lam * lam - 1.0)
    D = 1.0 + kap * (1.0 - c)
    P = profile(n, lam, c)
    P1 = h * kap * P / D
    P2 = h * (h + 1) * kap * kap * P / (D * D)
    return P, P1, P2


def _profile_lam_derivatives(n, lam, c):
    """lam d/dlam applied to (P, dP/dc, d2P/dc2)."""
    h = 0.5 * (n - 4)
    kap = 0.5 * (lam * lam - 1.0)
    l2 = lam * lam
    omc = 1.0 - c
    D = 1.0 + kap * omc
    A = beta_n(n) * 2.0 ** (-h) * lam ** h
    Q = A * D ** (-h)
    dP = h * Q * (1.0 - l2 * omc / D)
    dP1 = A * h * D ** (-h - 1) * (h * kap + l2 - (h + 1) * kap * l2 * omc / D)
    dP2 = A * h * (h + 1) * D ** (-h - 2) * (h * kap * kap + 2.0 * kap * l2
                                              - (h + 2) * kap * kap * l2 * omc / D)
    return dP, dP1, dP2


def _radial_field(n, c, triple):
    """Value, |grad|-factor and Laplacian of f(c) given (f, f', f'')."""
    f, f1, f2 = triple
    lap = f2 * (1.0 - c * c) - n * c * f1
    return f, f1, lap


def configuration_fields(cfg, X):
    """u, grad u (ambient, tangential) and Delta u at points X."""
    n = cfg.n
    u = np.zeros(X.shape[0])
    gu = np.zeros_like(X)
    lu = np.zeros(X.shape[0])
    for al, b in zip(cfg.alphas, cfg.bubbles):
        c = X @ b.center
        P, P1, P2 = _profile_c_derivatives(n, b.lam, c)
        u += al * P
        gu += (al * P1)[:, None] * (b.center[None, :] - c[:, None] * X)
        lu += al * (P2 * (1.0 - c * c) - n * c * P1)
    return u, gu, lu


def _energy_density(n, u, gu2, lu, v=None, gv_dot=None, lv=None):
    pc = paneitz_constants(n)
    if v is None:
        return lu * lu + pc.c_n * gu2 + pc.d_n * u * u
    return lu * lv + pc.c_n * gv_dot + pc.d_n * u * v


def norm_sq(u, rule=DEFAULT_RULE):
    """<u, u> = int |Delta u|^2 + c_n int |grad u|^2 + d_n int u^2.

    ``u`` is a :class:`Configuration` or a polynomial :class:`CurvatureField`.
    """
    if isinstance(u, CurvatureField):
        n = u.n
        K = u

        def dens(X):
            val = K(X)
            g = grad_K(K, X)
            lap = laplacian_K(K, X)
            return _energy_density(n, val, np.sum(g * g, axis=1), lap)

        order = max(2, K.degree + 1)
        return integrate_radial_angular(dens, np.eye(n + 1)[0], n, angular_order=order, rule=rule)
    cfg = u
    n = cfg.n
    if cfg.p == 1:
        al, b = cfg.alphas[0], cfg.bubbles[0]

        def dens1(th):
            c = np.cos(th)
            P, P1, P2 = _profile_c_derivatives(n, b.lam, c)
            lap = P2 * (1.0 - c * c) - n * c * P1
            return al * al * _energy_density(n, P, P1 * P1 * (1.0 - c * c), lap)

        return integrate_axisym(dens1, n, rule=rule)

    def dens(X):
        val, g, lap = configuration_fields(cfg, X)
        return _energy_density(n, val, np.sum(g * g, axis=1), lap)

    return _integrate_config(dens, cfg, rule=rule)


def _integrate_config(f, cfg, K=None, rule=DEFAULT_RULE, extra_degree=0):
    """Route an integrand over a configuration to the matching rule."""
    n = cfg.n
    deg = 0 if K is None or K.is_constant else K.degree
    deg += extra_degree
    if cfg.p == 1:
        order = max(1, deg // 2 + 1)
        return integrate_radial_angular(f, cfg.bubbles[0].center, n, angular_order=order, rule=rule)
    if cfg.p == 2:
        order = None if deg == 0 else max(1, deg // 2 + 1)
        return integrate_biaxisym(f, cfg.bubbles[0].center, cfg.bubbles[1].center, n,
                                  angular_order=order, rule=rule)
    return integrate_radial_angular(f, cfg.bubbles[0].center, n,
                                    angular_order=max(rule.angular_order, deg // 2 + 1), rule=rule)


def _K_values(K, X):
    vals = K(X)
    if np.any(vals <= 0):
        raise DomainError("K is not positive on the quadrature sample set")
    return vals


def _config_values(cfg, X):
    u = np.zeros(X.shape[0])
    for al, b in zip(cfg.alphas, cfg.bubbles):
        u += al * profile(cfg.n, b.lam, X @ b.center)
    return u


def critical_integral(cfg, K, rule=DEFAULT_RULE):
    """int K |u|^{2n/(n-4)} for u the configuration."""
    n = cfg.n
    q = 2.0 * n / (n - 4)
    if K.is_constant and cfg.p == 1:
        k0 = float(K.coeffs.sum())
        if k0 <= 0:
            raise DomainError("K is not positive")
        al, b = cfg.alphas[0], cfg.bubbles[0]
        return k0 * al ** q * integrate_axisym(lambda th: profile(n, b.lam, np.cos(th)) ** q, n,
                                               rule=rule)
    return _integrate_config(lambda X: _K_values(K, X) * np.abs(_config_values(cfg, X)) ** q,
                             cfg, K, rule=rule)


def J_eval(cfg, K, rule=DEFAULT_RULE):
    """J(u) = ||u||^2 / (int K |u|^{2n/(n-4)})^{(n-4)/n} by quadrature."""
    n = cfg.n
    return norm_sq(cfg, rule) / critical_integral(cfg, K, rule) ** ((n - 4) / n)


def direct_gradient_pairing(cfg, K, phi, rule=DEFAULT_RULE, angular_order=None):
    """<grad J(u/||u||), phi> and J(u), both by quadrature.

    phi is a function of points; <delta_j, phi> is evaluated as
    int delta_j^{(n+4)/(n-4)} phi.
    """
    n = cfg.n
    e = (n + 4.0) / (n - 4)
    nsq = norm_sq(cfg, rule)
    N = critical_integral(cfg, K, rule)
    J = nsq / N ** ((n - 4) / n)

    def inner(X):
        ph = phi(X)
        s = np.zeros(X.shape[0])
        for al, b in zip(cfg.alphas, cfg.bubbles):
            s += al * profile(n, b.lam, X @ b.center) ** e
        return s * ph

    def nonlin(X):
        return _K_values(K, X) * np.abs(_config_values(cfg, X)) ** e * phi(X)

    extra = 2 if angular_order is None else 2 * angular_order - 1
    up = _integrate_config(inner, cfg, None, rule=rule, extra_degree=extra)
    kp = _integrate_config(nonlin, cfg, K, rule=rule, extra_degree=extra)
    # derivative of the degree-0 homogeneous J at u, rescaled to ||u|| = 1
    dJ = 2.0 * J / nsq * (up - nsq / N * kp)
    return dJ * math.sqrt(nsq), J


# ---------------------------------------------------------------------------
# the expansion


@dataclass
class ExpansionReport:
    direct: float
    expansion: float
    abs_discrepancy: float
    rel_discrepancy: float
    budget: float
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


def regime_issues(cfg, lambda_min=LAMBDA_MIN, eps_max=EPS_MAX):
    out = []
    for i, b in enumerate(cfg.bubbles):
        if b.lam < lambda_min:
            out.append(f"lambda_{i} = {b.lam:.6g} below {lambda_min:g}")
    for i in range(cfg.p):
        for j in range(i + 1, cfg.p):
            e = epsilon_ij(cfg.bubbles[i], cfg.bubbles[j])
            if e > eps_max:
                out.append(f"eps_{i}{j} = {e:.3g} above {eps_max:g}")
    return out


def expansion_budget(cfg):
    b = cfg.bubbles
    s = sum(1.0 / x.lam ** 2 for x in b)
    s += sum(epsilon_ij(b[i], b[j]) for i in range(cfg.p) for j in range(cfg.p) if i != j)
    return s


def expansion_value(cfg, K, laplacians=None, kvals=None):
    """Leading-order expansion of J at a configuration (v = 0)."""
    n = cfg.n
    c1, c2, S = interaction_constant(n), self_constant(n), sobolev_mass(n)
    q = 2.0 * n / (n - 4)
    al = cfg.alphas
    A = float(np.sum(al * al))
    centers = cfg.centers
    Kv = np.asarray(K(centers) if kvals is None else kvals, dtype=float).reshape(-1)
    LK = np.asarray(laplacian_K(K, centers) if laplacians is None else laplacians,
                    dtype=float).reshape(-1)
    lams = cfg.lams
    Bq = float(np.sum(al ** q * Kv))
    pref = A * S ** (4.0 / n) / Bq ** ((n - 4) / n)
    br = 1.0 - (n - 4) / n * c2 * float(np.sum(al ** q / (Bq * S) * 4.0 * LK / lams ** 2))
    for i in range(cfg.p):
        for j in range(cfg.p):
            if i == j:
                continue
            e = epsilon_ij(cfg.bubbles[i], cfg.bubbles[j])
            br += c1 / S * al[i] * al[j] * e * (
                1.0 / A - 2.0 * al[i] ** (8.0 / (n - 4)) * Kv[i] / Bq)
    return pref * br


def J_expansion(cfg, K, rule=DEFAULT_RULE, lambda_min=LAMBDA_MIN, eps_max=EPS_MAX):
    """Direct J versus its expansion, with the o(.) budget."""
    issues = regime_issues(cfg, lambda_min, eps_max)
    for msg in issues:
        warnings.warn("out of expansion regime: " + msg, RegimeWarning)
    direct = J_eval(cfg, K, rule)
    exp = expansion_value(cfg, K)
    ad = abs(direct - exp)
    return ExpansionReport(direct=direct, expansion=exp, abs_discrepancy=ad,
                           rel_discrepancy=ad / abs(direct), budget=expansion_budget(cfg),
                           warnings=issues)


def balanced_alphas(K, centers, n, J=None):
    """Weights with alpha_i^{8/(n-4)} J^{n/(n-4)} K(a_i) = 1.

    Without J the leading-order value of J at the balanced weights is used,
    which makes the system self-consistent.
    """
    Kv = np.asarray(K(np.asarray(centers)), dtype=float).reshape(-1)
    shape = Kv ** (-(n - 4) / 8.0)
    if J is None:
        S = sobolev_mass(n)
        q = 2.0 * n / (n - 4)
        A = np.sum(shape ** 2)
        J = A * S ** (4.0 / n) / np.sum(shape ** q * Kv) ** ((n - 4) / n)
    scale = J ** (-n / 8.0)
    return shape * scale


def grad_lambda_pairing(cfg, K, i, J=None, lambda_min=LAMBDA_MIN, eps_max=EPS_MAX):
    """Leading-order <grad J, lam_i d(delta_i)/d(lam_i)>."""
    n = cfg.n
    issues = regime_issues(cfg, lambda_min, eps_max)
    for msg in issues:
        warnings.warn("out of expansion regime: " + msg, RegimeWarning)
    c1, c2 = interaction_constant(n), self_constant(n)
    if J is None:
        J = expansion_value(cfg, K)
    b = cfg.bubbles
    s = 0.0
    for j in range(cfg.p):
        if j != i:
            s -= c1 * cfg.alphas[j] * epsilon_dlambda(b[i], b[j])
    lk = laplacian_K(K, b[i].center)
    s += (n - 4) / n * c2 * cfg.alphas[i] ** ((n + 4.0) / (n - 4)) * J ** (n / (n - 4.0)) \
        * 4.0 * lk / b[i].lam ** 2
    return 2.0 * J * s


def grad_a_pairing(cfg, K, i, J=None, lambda_min=LAMBDA_MIN, eps_max=EPS_MAX):
    """Leading-order <grad J, (1/lam_i) d(delta_i)/d(a_i)> as an ambient tangent vector."""
    n = cfg.n
    issues = regime_issues(cfg, lambda_min, eps_max)
    for msg in issues:
        warnings.warn("out of expansion regime: " + msg, RegimeWarning)
    if J is None:
        J = expansion_value(cfg, K)
    c3 = calibrate_c3(n).c3
    b = cfg.bubbles[i]
    return -2.0 * c3 * J ** ((2.0 * n - 4) / (n - 4)) * grad_K(K, b.center) / b.lam


# ---------------------------------------------------------------------------
# integral estimates used by the verification suite


@dataclass
class SingleBubbleCheck:
    n: int
    lam: float
    norm_sq: float
    critical_mass: float
    S_n: float
    lambda_pairing: float
    center_pairing: float

    def to_dict(self):
        return dict(self.__dict__)


def single_bubble_check(n, lam, rule=DEFAULT_RULE):
    """Norm, critical mass and the two orthogonality pairings of one bubble."""
    S = sobolev_mass(n)
    a = np.eye(n + 1)[0]
    b = Bubble.at(a, lam, n)
    cfg = Configuration(np.array([1.0]), (b,), n)
    nsq = norm_sq(cfg, rule)
    q = 2.0 * n / (n - 4)
    mass = integrate_axisym(lambda th: profile(n, lam, np.cos(th)) ** q, n, rule=rule)

    def lam_pair(th):
        c = np.cos(th)
        P, P1, P2 = _profile_c_derivatives(n, lam, c)
        F, F1, F2 = _profile_lam_derivatives(n, lam, c)
        s2 = 1.0 - c * c
        lu = P2 * s2 - n * c * P1
        lv = F2 * s2 - n * c * F1
        return _energy_density(n, P, None, lu, F, P1 * F1 * s2, lv)

    lp = integrate_axisym(lam_pair, n, rule=rule)

    v = tangent_basis(a)[:, 0]

    def center_pair(X):
        c = X @ a
        ell = X @ v
        P, P1, P2 = _profile_c_derivatives(n, lam, c)
        # phi = g(c) <x, v> / lam with g the center-derivative factor
        g = profile_da_factor(n, lam, c)
        kap = 0.5 * (lam * lam - 1.0)
        h = 0.5 * (n - 4)
        D = 1.0 + kap * (1.0 - c)
        g1 = (h + 1) * kap * g / D
        g2 = (h + 1) * (h + 2) * kap * kap * g / (D * D)
        s2 = 1.0 - c * c
        lu = P2 * s2 - n * c * P1
        lphi = ell * (g2 * s2 - n * c * g1 - 2.0 * c * g1 - n * g) / lam
        gu = P1[:, None] * (a[None, :] - c[:, None] * X)
        gphi = ((ell * g1)[:, None] * (a[None, :] - c[:, None] * X)
                + g[:, None] * (v[None, :] - ell[:, None] * X)) / lam
        return _energy_density(n, P, None, lu, g * ell / lam, np.sum(gu * gphi, axis=1), lphi)

    cp = integrate_radial_angular(center_pair, a, n, angular_order=2, rule=rule)
    return SingleBubbleCheck(n, lam, nsq, mass, S, lp, cp)


def loglog_slope(xs, ys):
    """Least-squares slope of log|y| against log x."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.abs(np.asarray(ys, float))), 1)[0])


@dataclass
class SelfEstimateSweep:
    lams: list
    mass_residuals: list
    lambda_residuals: list
    mass_slope: float
    lambda_slope: float

    def to_dict(self):
        return dict(self.__dict__)


def self_estimate_sweep(K, center, lams, rule=DEFAULT_RULE):
    """Residuals of the one-bubble K-weighted estimates over a lambda sweep.

    mass residual:   int K delta^{2n/(n-4)} - [K(a) S_n + 4 c_2 Delta K(a) / lam^2]
    lambda residual: int K delta^{(n+4)/(n-4)} lam d(delta)/d(lam)
                     + ((n-4)/n) c_2 4 Delta K(a) / lam^2
    """
    n = K.n
    a = np.asarray(center, dtype=float)
    S, c2 = sobolev_mass(n), self_constant(n)
    q = 2.0 * n / (n - 4)
    e = (n + 4.0) / (n - 4)
    Ka, LK = K(a), laplacian_K(K, a)
    order = K.degree // 2 + 1
    r1, r2 = [], []
    for lam in lams:
        f1 = lambda X: K(X) * profile(n, lam, X @ a) ** q
        f2 = lambda X: K(X) * profile(n, lam, X @ a) ** e * profile_lam_dlam(n, lam, X @ a)
        I1 = integrate_radial_angular(f1, a, n, angular_order=order, rule=rule)
        I2 = integrate_radial_angular(f2, a, n, angular_order=order, rule=rule)
        r1.append(I1 - (Ka * S + 4.0 * c2 * LK / lam ** 2))
        r2.append(I2 + (n - 4) / n * c2 * 4.0 * LK / lam ** 2)
    return SelfEstimateSweep(list(map(float, lams)), r1, r2, loglog_slope(lams, r1),
                             loglog_slope(lams, r2))


@dataclass
class InteractionSweep:
    n: int
    distance: float
    lams: list
    eps: list
    ratios: list
    log_bound: list

    def to_dict(self):
        return dict(self.__dict__)


def interaction_sweep(n, distance, lams, rule=DEFAULT_RULE):
    """Two equal bubbles at geodesic separation ``distance``.

    ratios:    int delta_1^{(n+4)/(n-4)} delta_2 / (c_1 eps_12)
    log_bound: int (delta_1 delta_2)^{n/(n-4)} / (eps^{n/(n-4)} log(1/eps))
    """
    a1 = np.eye(n + 1)[0]
    a2 = math.cos(distance) * a1 + math.sin(distance) * np.eye(n + 1)[1]
    c1 = interaction_constant(n)
    e = (n + 4.0) / (n - 4)
    m = n / (n - 4.0)
    eps, ratios, lb = [], [], []
    for lam in lams:
        b1, b2 = Bubble.at(a1, lam, n), Bubble.at(a2, lam, n)
        ep = epsilon_ij(b1, b2)
        I = integrate_biaxisym(lambda X: profile(n, lam, X @ a1) ** e * profile(n, lam, X @ a2),
                               a1, a2, n, rule=rule)
        L = integrate_biaxisym(lambda X: (profile(n, lam, X @ a1) * profile(n, lam, X @ a2)) ** m,
                               a1, a2, n, rule=rule)
        eps.append(ep)
        ratios.append(I / (c1 * ep))
        lb.append(L / (ep ** m * math.log(1.0 / ep)))
    return InteractionSweep(n, float(distance), list(map(float, lams)), eps, ratios, lb)

"""Standard bubbles on S^n, their parameter derivatives and interactions.

A bubble centered at ``a`` with concentration ``lam`` is

    delta(x) = beta_n 2^{-(n-4)/2} lam^{(n-4)/2}
               / (1 + (lam^2 - 1)/2 (1 - cos d(x, a)))^{(n-4)/2},

the pull-back of the flat profile beta_n lam^{(n-4)/2} (1 + lam^2 |y|^2)^{-(n-4)/2}
under stereographic projection through -a.  Everything here is closed form;
numerical differentiation only appears in the tests.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from .sphere_geometry import (
    StereoChart,
    as_point,
    integrate_radial_rn,
    random_points,
)

SUPPORTED_DIMS = (5, 6)


class UnsupportedDimensionError(ValueError):
    pass


class TangentDirectionError(ValueError):
    pass


def check_dim(n):
    if n not in SUPPORTED_DIMS:
        raise UnsupportedDimensionError(f"dimension {n} not supported (use 5 or 6)")


# ---------------------------------------------------------------------------
# normalization constant

# Radial functions are kept as {k: c} meaning sum_k c (1 + r^2)^(-k); the
# Euclidean Laplacian in R^n maps (1 + r^2)^(-k) to
#   (4k(k+1) - 2kn) (1 + r^2)^(-k-1) - 4k(k+1) (1 + r^2)^(-k-2).


def _radial_laplacian(series, n):
    out = {}
    for k, c in series.items():
        out[k + 1] = out.get(k + 1, 0.0) + c * (4 * k * (k + 1) - 2 * k * n)
        out[k + 2] = out.get(k + 2, 0.0) - c * 4 * k * (k + 1)
    return out


def bilaplacian_profile_series(n):
    """Delta^2 of (1 + r^2)^(-(n-4)/2) on R^n in the (1 + r^2)^(-k) basis."""
    m = (n - 4) / 2
    return _radial_laplacian(_radial_laplacian({m: 1.0}, n), n)


@lru_cache(maxsize=None)
def beta_n(n):
    """Constant making beta (1 + |y|^2)^(-(n-4)/2) solve Delta^2 u = u^((n+4)/(n-4)).

    Delta^2 of the profile is a combination of (1 + r^2)^(-k) for
    k = m+2, m+3, m+4 (m = (n-4)/2).  The equation can only balance if the
    first two coefficients vanish; the last one kappa then fixes
    beta^(8/(n-4)) = kappa.
    """
    check_dim(n)
    m = (n - 4) / 2
    series = bilaplacian_profile_series(n)
    top = m + 4
    for k, c in series.items():
        if k != top and abs(c) > 1e-12:
            raise ArithmeticError(f"profile is not a bubble profile in dimension {n}")
    kappa = series[top]
    if kappa <= 0:
        raise ArithmeticError("non-positive balance coefficient")
    return kappa ** ((n - 4) / 8.0)


def flat_bubble(n, lam, r):
    """beta_n lam^{(n-4)/2} / (1 + lam^2 r^2)^{(n-4)/2} on R^n."""
    r = np.asarray(r, dtype=float)
    h = 0.5 * (n - 4)
    return beta_n(n) * lam ** h * (1.0 + (lam * r) ** 2) ** (-h)


def flat_bilaplacian(n, lam, r):
    """Closed-form Delta^2 of :func:`flat_bubble` (from the series above)."""
    r = np.asarray(r, dtype=float)
    series = bilaplacian_profile_series(n)
    q = 1.0 / (1.0 + (lam * r) ** 2)
    h = 0.5 * (n - 4)
    val = sum(c * q ** k for k, c in series.items())
    return beta_n(n) * lam ** (h + 4) * val


def bilaplacian_residual(n, radii, lam=1.0):
    """sup over radii of |Delta^2 delta - delta^((n+4)/(n-4))| for the flat bubble."""
    d = flat_bubble(n, lam, radii)
    return float(np.max(np.abs(flat_bilaplacian(n, lam, radii) - d ** ((n + 4) / (n - 4)))))


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class Bubble:
    """Center on S^n and concentration; lambda is stored through its log."""

    center: np.ndarray
    log_lam: float
    n: int

    def __post_init__(self):
        check_dim(self.n)
        c = as_point(self.center)
        if c.shape[0] != self.n + 1:
            raise ValueError("center has the wrong ambient dimension")
        object.__setattr__(self, "center", c)
        if not math.isfinite(self.log_lam):
            raise ValueError("concentration must be positive and finite")

    @classmethod
    def at(cls, center, lam, n):
        if not lam > 0:
            raise ValueError("concentration must be positive")
        return cls(np.asarray(center, dtype=float), math.log(lam), n)

    @property
    def lam(self):
        return math.exp(self.log_lam)


@dataclass(frozen=True)
class Configuration:
    """Weighted sum sum_i alpha_i delta_(a_i, lam_i)."""

    alphas: np.ndarray
    bubbles: tuple
    n: int = field(default=0)

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float).reshape(-1)
        bubbles = tuple(self.bubbles)
        if len(bubbles) == 0 or len(bubbles) != alphas.size:
            raise ValueError("need one positive weight per bubble and at least one bubble")
        if np.any(alphas <= 0):
            raise ValueError("weights must be positive")
        n = bubbles[0].n
        if any(b.n != n for b in bubbles):
            raise ValueError("all bubbles must share the dimension")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "bubbles", bubbles)
        object.__setattr__(self, "n", n)

    @property
    def p(self):
        return len(self.bubbles)

    @property
    def centers(self):
        return np.array([b.center for b in self.bubbles])

    @property
    def lams(self):
        return np.array([b.lam for b in self.bubbles])

    @classmethod
    def from_arrays(cls, alphas, centers, lams, n):
        return cls(np.asarray(alphas, float),
                   tuple(Bubble.at(c, l, n) for c, l in zip(centers, lams)), n)


# ---------------------------------------------------------------------------
# bubble values and derivatives
#
# All functions take the cosine of the distance to the center, so they work
# equally on ambient points and on polar-angle grids.


def profile(n, lam, cos_d):
    h = 0.5 * (n - 4)
    D = 1.0 + 0.5 * (lam * lam - 1.0) * (1.0 - cos_d)
    return beta_n(n) * 2.0 ** (-h) * lam ** h * D ** (-h)


def profile_lam_dlam(n, lam, cos_d):
    """lam * d(profile)/d(lam)."""
    h = 0.5 * (n - 4)
    omc = 1.0 - cos_d
    D = 1.0 + 0.5 * (lam * lam - 1.0) * omc
    return h * profile(n, lam, cos_d) * (1.0 - lam * lam * omc / D)


def profile_da_factor(n, lam, cos_d):
    """g with d(profile)/da . v = g * <x, v> for a unit tangent v at the center."""
    h = 0.5 * (n - 4)
    D = 1.0 + 0.5 * (lam * lam - 1.0) * (1.0 - cos_d)
    return h * 0.5 * (lam * lam - 1.0) * profile(n, lam, cos_d) / D


def _cos(b, x):
    return np.asarray(x, dtype=float) @ b.center


def bubble_eval(b, x):
    """delta_(a, lam)(x); ``x`` may be one point or an (m, n+1) array."""
    return profile(b.n, b.lam, _cos(b, x))


def bubble_dlambda(b, x):
    """d delta / d lam (closed form)."""
    return profile_lam_dlam(b.n, b.lam, _cos(b, x)) / b.lam


def _check_tangent(b, v):
    v = np.asarray(v, dtype=float)
    if abs(v @ b.center) > 1e-9 or abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise TangentDirectionError("direction must be a unit vector tangent at the center")
    return v


def bubble_da(b, x, v):
    """Derivative of delta along the geodesic a(t) = cos t a + sin t v at t = 0."""
    v = _check_tangent(b, v)
    x = np.asarray(x, dtype=float)
    return profile_da_factor(b.n, b.lam, x @ b.center) * (x @ v)


def sample_bubble_measure(b, size, rng):
    """Points distributed with density delta^{2n/(n-4)} / S_n.

    The uniform measure is conformally dilated: in the chart through -a,
    y -> y / lam carries the uniform density onto the bubble density.
    """
    chart = StereoChart(b.center)
    X = random_points(b.n, size, rng)
    # the antipode of the center has probability zero
    Y = chart.forward(X) / b.lam
    return chart.inverse(Y)


# ---------------------------------------------------------------------------
# interactions


def _interaction_base(bi, bj):
    li, lj = bi.lam, bj.lam
    c = float(np.clip(bi.center @ bj.center, -1.0, 1.0))
    return li / lj + lj / li + 0.5 * li * lj * (1.0 - c)


def epsilon_ij(bi, bj):
    """(lam_i/lam_j + lam_j/lam_i + lam_i lam_j (1 - cos d)/2)^{-(n-4)/2}."""
    if bi.n != bj.n:
        raise ValueError("bubbles live in different dimensions")
    return _interaction_base(bi, bj) ** (-0.5 * (bi.n - 4))


def epsilon_dlambda(bi, bj):
    """lam_i * d(eps_ij)/d(lam_i)."""
    if bi.n != bj.n:
        raise ValueError("bubbles live in different dimensions")
    li, lj = bi.lam, bj.lam
    c = float(np.clip(bi.center @ bj.center, -1.0, 1.0))
    base = li / lj + lj / li + 0.5 * li * lj * (1.0 - c)
    dbase = li / lj - lj / li + 0.5 * li * lj * (1.0 - c)
    h = 0.5 * (bi.n - 4)
    return -h * base ** (-h) * dbase / base


def transported_parameters(b, pole):
    """Parameters (a~, lam~) of the flat bubble that ``b`` becomes in the
    chart through -pole, computed by the closed-form transport rule.

    a~ = (lam^2 - 1) P(a) / (2 + (lam^2 - 1)(1 - cos t0)),
    lam~ = (2 + (lam^2 - 1)(1 - cos t0)) / (2 lam),  t0 = pi - d(a, pole),
    where P(a) is the chart image direction of a scaled to the tangent plane.
    """
    chart = StereoChart(pole)
    a = b.center
    lam = b.lam
    cos_t0 = -float(a @ chart.pole)
    den = 2.0 + (lam * lam - 1.0) * (1.0 - cos_t0)
    proj = a @ chart.basis
    a_t = (lam * lam - 1.0) * proj / den
    lam_t = den / (2.0 * lam)
    return a_t, lam_t


def transported_epsilon(bi, bj, pole):
    """Flat-space interaction (lam_i/lam_j + lam_j/lam_i + lam_i lam_j |a_i - a_j|^2)^{-(n-4)/2}
    of the transported parameters."""
    ai, li = transported_parameters(bi, pole)
    aj, lj = transported_parameters(bj, pole)
    base = li / lj + lj / li + li * lj * float(np.sum((ai - aj) ** 2))
    return base ** (-0.5 * (bi.n - 4))


def flat_bubble_at(n, a_flat, lam, Y):
    h = 0.5 * (n - 4)
    r2 = np.sum((np.asarray(Y) - a_flat) ** 2, axis=-1)
    return beta_n(n) * lam ** h * (1.0 + lam * lam * r2) ** (-h)


# ---------------------------------------------------------------------------
# radial constants on R^n


@lru_cache(maxsize=None)
def sobolev_mass(n):
    """S_n = int_{R^n} delta_(0,1)^{2n/(n-4)}."""
    check_dim(n)
    q = 2.0 * n / (n - 4)
    return integrate_radial_rn(lambda r: flat_bubble(n, 1.0, r) ** q, n)

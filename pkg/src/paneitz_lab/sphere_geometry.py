"""Geometry of S^n (n = 5, 6): distances, stereographic charts and quadrature.

Points are stored ambiently as unit vectors of length n+1.  Integration is
organised by symmetry: integrands that depend only on the angle to one axis
go through :func:`integrate_axisym`, integrands invariant under the rotations
fixing two centers through :func:`integrate_biaxisym`, and everything else
through :func:`integrate_radial_angular` (polar angle about a center times a
product Gauss rule on the tangent sphere) or :func:`integrate_mc`.

All polar rules are composite Gauss-Legendre on panels that are geometrically
graded toward chosen focus angles, so functions concentrated at scale 1/lambda
with lambda up to ~1e4 are resolved without adaptivity.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.special import gammaln, roots_jacobi

UNIT_TOL = 1e-12


class ChartDomainError(ValueError):
    """Raised when a point sits at the projection pole of a chart."""


class SingularityError(ValueError):
    """Raised when a kernel is evaluated at coincident points."""


class DegenerateFrameError(ValueError):
    """Raised when two centers do not determine a frame."""


class IntegrationError(RuntimeError):
    """Raised when an integrand produces non-finite samples."""


# ---------------------------------------------------------------------------
# points and distances


def as_point(coords):
    """Normalize ``coords`` to a unit vector (a point of the sphere)."""
    v = np.asarray(coords, dtype=float)
    nrm = np.linalg.norm(v)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / nrm


def basis_vector(dim, k, sign=1.0):
    e = np.zeros(dim)
    e[k] = sign
    return e


def random_points(n, count, rng):
    """``count`` uniform points on S^n as a (count, n+1) array."""
    g = rng.standard_normal((count, n + 1))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def surface_area(n):
    """Volume of the unit n-sphere, 2 pi^((n+1)/2) / Gamma((n+1)/2)."""
    return math.exp(math.log(2.0) + 0.5 * (n + 1) * math.log(math.pi) - gammaln(0.5 * (n + 1)))


def geodesic_distance(x, y):
    """Great-circle distance in [0, pi]; broadcasts over leading axes.

    Uses 2 atan2(|x - y|, |x + y|), which keeps full precision near 0 and pi
    where arccos of the inner product does not.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = 2.0 * np.arctan2(np.linalg.norm(x - y, axis=-1), np.linalg.norm(x + y, axis=-1))
    return float(d) if np.ndim(d) == 0 else d


def green_function(x, y):
    """(1 - cos d(x, y))^-1, the Green's function of the Paneitz operator on S^6."""
    one_minus = 1.0 - np.sum(np.asarray(x) * np.asarray(y), axis=-1)
    if np.any(one_minus <= 1e-14):
        raise SingularityError("green_function evaluated at coincident points")
    g = 1.0 / one_minus
    return float(g) if np.ndim(g) == 0 else g


def tangent_basis(p):
    """Orthonormal basis of the tangent space at ``p`` as an (n+1, n) array.

    Built from the Householder reflection sending ``p`` to a signed first
    coordinate vector, so it is deterministic and well conditioned.
    """
    p = np.asarray(p, dtype=float)
    d = p.shape[0]
    s = 1.0 if p[0] >= 0 else -1.0
    v = p.copy()
    v[0] += s
    H = np.eye(d) - 2.0 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


def project_tangent(p, v):
    """Component of ``v`` orthogonal to the unit vector ``p``."""
    v = np.asarray(v, dtype=float)
    return v - (v @ p) * p


def exp_map(p, v):
    """Move from ``p`` along the tangent vector ``v`` by arclength |v|."""
    t = np.linalg.norm(v)
    if t == 0.0:
        return np.array(p, dtype=float)
    q = math.cos(t) * p + math.sin(t) * (v / t)
    return q / np.linalg.norm(q)


# ---------------------------------------------------------------------------
# stereographic charts


class StereoChart:
    """Stereographic projection through ``-pole``; ``pole`` maps to the origin.

    forward(x) = B^T x / (1 + <x, pole>) with B a tangent basis at the pole,
    and the volume density (1 + <x, pole>)^n makes
    int_{S^n} f = int_{R^n} (f * density) o inverse.
    """

    def __init__(self, pole):
        self.pole = as_point(pole)
        self.basis = tangent_basis(self.pole)
        self.n = self.pole.shape[0] - 1

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        t = x @ self.pole
        if np.any(t <= -1.0 + 1e-15):
            raise ChartDomainError("point coincides with the projection pole -pole")
        return (x @ self.basis) / (1.0 + t)[..., None] if x.ndim > 1 else (x @ self.basis) / (1.0 + t)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        r2 = np.sum(y * y, axis=-1)
        num = np.multiply.outer(1.0 - r2, self.pole) + 2.0 * (y @ self.basis.T)
        return num / (1.0 + r2)[..., None] if y.ndim > 1 else num / (1.0 + r2)

    def jacobian(self, x):
        """Volume density (2 / (1 + |y|^2))^n expressed at the sphere point x."""
        t = np.asarray(x, dtype=float) @ self.pole
        if np.any(t <= -1.0 + 1e-15):
            raise ChartDomainError("point coincides with the projection pole -pole")
        return (1.0 + t) ** self.n


def stereo_forward(chart, x):
    return chart.forward(x)


def stereo_inverse(chart, y):
    return chart.inverse(y)


def stereo_jacobian(chart, x):
    return chart.jacobian(x)


# ---------------------------------------------------------------------------
# quadrature rules


@dataclass(frozen=True)
class QuadratureRule:
    """Resolution parameters shared by the deterministic and random rules.

    ``nodes`` is the Gauss-Legendre order on each panel, ``levels`` the depth
    of geometric grading (smallest panel ~ pi / 2**levels), ``angular_order``
    the per-angle Gauss order on tangent spheres.
    """

    kind: str = "axisym-1d"
    nodes: int = 16
    levels: int = 24
    angular_order: int = 4
    samples: int = 1_000_000
    seed: int = 0

    def with_nodes(self, nodes):
        return QuadratureRule(self.kind, nodes, self.levels, self.angular_order,
                              self.samples, self.seed)


DEFAULT_RULE = QuadratureRule()


@lru_cache(maxsize=64)
def _gauss_legendre(k):
    x, w = np.polynomial.legendre.leggauss(k)
    return x, w


def graded_breakpoints(lo, hi, foci, levels):
    """Panel boundaries on [lo, hi] refined geometrically toward each focus."""
    span = hi - lo
    pts = {lo, hi}
    for f in foci:
        if lo <= f <= hi:
            pts.add(float(f))
        for k in range(1, levels + 1):
            h = span / 2.0 ** k
            for q in (f - h, f + h):
                if lo < q < hi:
                    pts.add(float(q))
    pts = np.array(sorted(pts))
    keep = np.concatenate(([True], np.diff(pts) > 1e-15 * max(1.0, span)))
    return pts[keep]


def composite_gauss(breaks, nodes):
    """Nodes and weights of a composite Gauss-Legendre rule on given panels."""
    x, w = _gauss_legendre(nodes)
    a = breaks[:-1, None]
    b = breaks[1:, None]
    half = 0.5 * (b - a)
    pts = (a + b) * 0.5 + half * x[None, :]
    wts = half * w[None, :]
    return pts.ravel(), wts.ravel()


@lru_cache(maxsize=64)
def polar_rule(nodes, levels, foci=(0.0, math.pi)):
    """(theta, weight) on [0, pi] graded toward the given focus angles."""
    br = graded_breakpoints(0.0, math.pi, foci, levels)
    return composite_gauss(br, nodes)


def _check_finite(vals):
    if not np.all(np.isfinite(vals)):
        raise IntegrationError("integrand returned non-finite samples")


def integrate_axisym(f, n, nodes=None, levels=None, rule=DEFAULT_RULE):
    """omega_{n-1} * int_0^pi f(theta) sin^{n-1}(theta) d theta.

    ``f`` is called once with the full array of polar angles.
    """
    nodes = rule.nodes if nodes is None else nodes
    levels = rule.levels if levels is None else levels
    th, w = polar_rule(nodes, levels)
    vals = np.asarray(f(th), dtype=float)
    _check_finite(vals)
    return surface_area(n - 1) * float(np.sum(w * np.sin(th) ** (n - 1) * vals))


def biaxial_frame(a, b):
    """(e, C): unit tangent at ``a`` toward ``b`` and an orthonormal basis (rows)
    of the complement of span(a, e)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = float(a @ b)
    if c > 1.0 - 1e-14:
        raise DegenerateFrameError("centers coincide; no biaxial frame")
    e = b - c * a
    ne = np.linalg.norm(e)
    if ne < 1e-12:
        # antipodal: any tangent direction works
        e = tangent_basis(a)[:, 0]
    else:
        e = e / ne
    comp = np.linalg.svd(np.stack([a, e]), full_matrices=True)[2][2:]
    return e, comp


def integrate_biaxisym(f, a, b, n, nodes=None, levels=None, rule=DEFAULT_RULE, block=64,
                       angular_order=None):
    """Integrate ``f`` over S^n in coordinates adapted to two centers.

    Points are cos(t) a + sin(t) (cos(p) e + sin(p) w) with t the angle to
    ``a``, p the azimuth measured from the geodesic toward ``b`` and w a unit
    vector orthogonal to both centers; ``f`` receives (m, n+1) arrays of such
    points.  With ``angular_order=None`` a single w is used, which is exact
    for integrands invariant under rotations fixing a and b.  Otherwise w
    runs over a product Gauss rule of that order on the (n-2)-sphere of
    directions orthogonal to both centers (exact for polynomial dependence
    of degree <= 2*order - 1 on w).  The t-panels are graded toward 0, pi and
    d(a, b); the p-panels toward 0 and pi.
    """
    nodes = rule.nodes if nodes is None else nodes
    levels = rule.levels if levels is None else levels
    a = np.asarray(a, dtype=float)
    e, comp = biaxial_frame(a, b)
    if angular_order is None:
        W = comp[:1]
        ww = np.array([1.0])
    else:
        om, wom = tangent_sphere_rule(n - 1, angular_order)
        W = om @ comp
        ww = wom / surface_area(n - 2)
    d = geodesic_distance(a, b)
    foci_t = tuple(sorted({0.0, math.pi, round(d, 15)}))
    th, wt = composite_gauss(graded_breakpoints(0.0, math.pi, foci_t, levels), nodes)
    ps, wp = polar_rule(nodes, levels)
    ct, st = np.cos(th), np.sin(th)
    cp, sp = np.cos(ps), np.sin(ps)
    wpsi = wp * sp ** (n - 2)
    # (psi, w) block of unit directions orthogonal to a
    D = (cp[:, None, None] * e[None, None, :] + sp[:, None, None] * W[None, :, :]).reshape(-1, a.size)
    wD = (wpsi[:, None] * ww[None, :]).reshape(-1)
    blk = max(1, block * ps.size // D.shape[0])
    total = 0.0
    for s in range(0, th.size, blk):
        sl = slice(s, s + blk)
        X = ct[sl, None, None] * a[None, None, :] + st[sl, None, None] * D[None, :, :]
        vals = np.asarray(f(X.reshape(-1, a.size)), dtype=float).reshape(X.shape[:2])
        _check_finite(vals)
        total += float(np.sum((wt[sl] * st[sl] ** (n - 1))[:, None] * wD[None, :] * vals))
    return surface_area(n - 2) * total


@lru_cache(maxsize=32)
def tangent_sphere_rule(m, order):
    """Product Gauss rule on S^{m-1} in R^m, returned as (points, weights).

    Hyperspherical angles phi_1..phi_{m-2} use Gauss-Jacobi nodes in cos(phi)
    with the sin-power weights; the last angle uses 2*order equispaced nodes.
    Exact for polynomials of degree <= 2*order - 1 in the coordinates.
    """
    grids = []
    for k in range(1, m - 1):
        alpha = 0.5 * (m - k - 2)
        t, w = roots_jacobi(order, alpha, alpha)
        grids.append((t, w))
    q = 2 * order
    phi = 2.0 * math.pi * np.arange(q) / q
    wphi = np.full(q, 2.0 * math.pi / q)
    # assemble
    pts = np.ones((1, m))
    wts = np.ones(1)
    sin_prod = np.ones(1)
    coords = []
    for t, w in grids:
        n_old = wts.size
        sin_prod = np.repeat(sin_prod, t.size)
        wts = np.repeat(wts, t.size) * np.tile(w, n_old)
        coords = [np.repeat(c, t.size) for c in coords]
        tt = np.tile(t, n_old)
        coords.append(sin_prod * tt)
        sin_prod = sin_prod * np.sqrt(1.0 - tt * tt)
    n_old = wts.size
    sin_prod = np.repeat(sin_prod, q)
    wts = np.repeat(wts, q) * np.tile(wphi, n_old)
    coords = [np.repeat(c, q) for c in coords]
    coords.append(sin_prod * np.tile(np.cos(phi), n_old))
    coords.append(sin_prod * np.tile(np.sin(phi), n_old))
    pts = np.stack(coords, axis=1)
    wts = wts * (surface_area(m - 1) / wts.sum())
    return pts, wts


def integrate_radial_angular(f, center, n, nodes=None, levels=None, angular_order=None,
                             rule=DEFAULT_RULE, block=32):
    """Integrate a general ``f`` on S^n in polar coordinates about ``center``.

    The polar angle is the stereographic radius in disguise (r = tan(t/2) in
    the chart through -center), so bubbles centered at ``center`` are
    resolved by the graded polar panels; the tangent sphere uses the product
    Gauss rule of :func:`tangent_sphere_rule`.
    """
    nodes = rule.nodes if nodes is None else nodes
    levels = rule.levels if levels is None else levels
    order = rule.angular_order if angular_order is None else angular_order
    c = as_point(center)
    B = tangent_basis(c)
    om, wom = tangent_sphere_rule(n, order)
    dirs = om @ B.T
    th, wt = polar_rule(nodes, levels)
    ct, st = np.cos(th), np.sin(th)
    total = 0.0
    for s in range(0, th.size, block):
        sl = slice(s, s + block)
        X = ct[sl, None, None] * c[None, None, :] + st[sl, None, None] * dirs[None, :, :]
        vals = np.asarray(f(X.reshape(-1, c.size)), dtype=float).reshape(X.shape[:2])
        _check_finite(vals)
        total += float(np.sum((wt[sl] * st[sl] ** (n - 1))[:, None] * wom[None, :] * vals))
    return total


def integrate_mc(f, n, samples=1_000_000, seed=0, batch=200_000):
    """Uniform Monte Carlo on S^n: (estimate, standard error).

    Batches are drawn from one seeded generator in a fixed order, so the
    result is reproducible for a given (samples, seed).
    """
    if samples < 1000:
        raise ValueError("monte-carlo integration needs at least 1000 samples")
    rng = np.random.default_rng(seed)
    area = surface_area(n)
    s1 = 0.0
    s2 = 0.0
    done = 0
    while done < samples:
        k = min(batch, samples - done)
        X = random_points(n, k, rng)
        v = np.asarray(f(X), dtype=float)
        _check_finite(v)
        s1 += float(v.sum())
        s2 += float((v * v).sum())
        done += k
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0) * samples / (samples - 1)
    return area * mean, area * math.sqrt(var / samples)


def integrate_radial_rn(g, n, nodes=32, levels=30):
    """omega_{n-1} * int_0^inf g(r) r^{n-1} dr via r = tan(phi), graded panels."""
    br = graded_breakpoints(0.0, 0.5 * math.pi, (0.0, 0.5 * math.pi), levels)
    phi, w = composite_gauss(br, nodes)
    r = np.tan(phi)
    vals = np.asarray(g(r), dtype=float) * r ** (n - 1) / np.cos(phi) ** 2
    _check_finite(vals)
    return surface_area(n - 1) * float(np.sum(w * vals))

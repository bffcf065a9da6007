import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paneitz_lab.bubble_kernel import (
    Configuration,
    beta_n,
    profile_da_factor,
    profile_lam_dlam,
    sobolev_mass,
)
from paneitz_lab.morse_analyzer import CurvatureField, grad_K
from paneitz_lab.paneitz_functional import (
    J_eval,
    J_expansion,
    RegimeWarning,
    balanced_alphas,
    calibrate_c3,
    direct_gradient_pairing,
    expansion_value,
    grad_a_pairing,
    grad_lambda_pairing,
    interaction_constant,
    interaction_sweep,
    norm_sq,
    paneitz_constants,
    paneitz_symbol,
    self_constant,
    self_estimate_sweep,
    single_bubble_check,
)
from paneitz_lab.sphere_geometry import as_point, surface_area


def _mp_radial(n, g):
    """omega_{n-1} int_0^inf g(r) r^{n-1} dr at 30 digits."""
    mp.mp.dps = 30
    return surface_area(n - 1) * float(mp.quad(lambda r: g(r) * r ** (n - 1), [0, 1, mp.inf]))


@pytest.mark.parametrize("n", [5, 6])
def test_operator_constants_factor_the_symbol(n):
    pc = paneitz_constants(n)
    assert pc.c_n == (n * n - 2 * n - 4) / 2
    assert pc.d_n == (n - 4) * n * (n * n - 4) / 16
    for k in range(6):
        mu = k * (k + n - 1)
        assert paneitz_symbol(k, n) == pytest.approx(
            (mu + n * (n - 2) / 4) * (mu + (n + 2) * (n - 4) / 4), rel=1e-14)
    with pytest.raises(ValueError):
        paneitz_symbol(-1, n)


def test_six_dimensional_constants():
    pc = paneitz_constants(6)
    assert (pc.c_n, pc.d_n) == (10.0, 24.0)


@pytest.mark.parametrize("n", [5, 6])
def test_radial_constants_against_independent_quadrature(n):
    q = 2 * n / (n - 4)
    b = mp.mpf(beta_n(n))
    c1 = float(b ** q) * _mp_radial(n, lambda r: (1 + r * r) ** (-mp.mpf(n + 4) / 2))
    c2 = float(b ** q) * _mp_radial(n, lambda r: r * r * (1 + r * r) ** (-n)) / (2 * n)
    assert interaction_constant(n) == pytest.approx(c1, rel=1e-10)
    assert self_constant(n) == pytest.approx(c2, rel=1e-10)


def test_six_dimensional_closed_forms():
    b6, w5 = beta_n(6), surface_area(5)
    assert interaction_constant(6) == pytest.approx(b6 ** 6 * w5 / 24, rel=1e-10)
    assert self_constant(6) == pytest.approx(b6 ** 6 * w5 / 480, rel=1e-10)


@pytest.mark.parametrize("n", [5, 6])
def test_center_constant_matches_normalized_closed_form(n):
    cal = calibrate_c3(n)
    S = sobolev_mass(n)
    analytic = (n - 4) / (2 * n) * S ** ((n - 12) / (2 * (n - 4)))
    assert cal.c3 == pytest.approx(analytic, rel=1e-4)
    assert cal.residual < cal.tolerance


@pytest.mark.parametrize("n", [5, 6])
@pytest.mark.parametrize("lam", [1.0, 10.0, 100.0])
def test_single_bubble_identities(n, lam):
    sb = single_bubble_check(n, lam)
    S = sobolev_mass(n)
    assert sb.norm_sq == pytest.approx(S, rel=1e-10)
    assert sb.critical_mass == pytest.approx(S, rel=1e-10)
    assert abs(sb.lambda_pairing) < 1e-10 * S
    assert abs(sb.center_pairing) < 1e-10 * S


@pytest.mark.parametrize("n", [5, 6])
def test_constant_curvature_value(n):
    cfg = Configuration.from_arrays([1.0], [np.eye(n + 1)[0]], [30.0], n)
    K = CurvatureField.constant(n, 2.0)
    expected = sobolev_mass(n) ** (4 / n) / 2.0 ** ((n - 4) / n)
    assert J_eval(cfg, K) == pytest.approx(expected, rel=1e-10)
    assert expansion_value(cfg, K) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=15)
@given(st.floats(0.1, 10.0), st.floats(5.0, 60.0))
def test_functional_is_scale_invariant(t, lam):
    K = CurvatureField.quadratic_family(6, [0.1, 0.2, -0.1, 0.05, 0.0, -0.15, 0.3])
    a = as_point([0.3, 1.0, 0.2, 0, 0, 0, 0.1])
    c1 = Configuration.from_arrays([1.0], [a], [lam], 6)
    c2 = Configuration.from_arrays([t], [a], [lam], 6)
    assert J_eval(c2, K) == pytest.approx(J_eval(c1, K), rel=1e-11)
    assert norm_sq(c2) == pytest.approx(t * t * norm_sq(c1), rel=1e-11)


def test_balanced_weights_satisfy_balance(quad6):
    centers = np.eye(7)[:2]
    J = 3.7
    al = balanced_alphas(quad6, centers, 6, J=J)
    Kv = quad6(centers)
    np.testing.assert_allclose(al ** 4 * J ** 3 * Kv, 1.0, rtol=1e-13)


@pytest.fixture(scope="module")
def tilted():
    return CurvatureField.from_terms(6, [([0] * 7, 1.0), ([2, 0, 0, 0, 0, 0, 0], 0.2),
                                         ([0, 1, 0, 0, 0, 0, 0], 0.1),
                                         ([1, 1, 0, 0, 0, 0, 0], 0.15)])


def test_center_pairing_formula_matches_direct_quadrature(tilted):
    a = np.array([0.6, 0.0, 0.8, 0, 0, 0, 0])
    g = grad_K(tilted, a)
    v = g / np.linalg.norm(g)
    for lam, tol in ((50.0, 5e-3), (200.0, 5e-4)):
        cfg = Configuration.from_arrays([1.0], [a], [lam], 6)
        phi = lambda X: profile_da_factor(6, lam, X @ a) * (X @ v) / lam
        direct, J = direct_gradient_pairing(cfg, tilted, phi, angular_order=2)
        assert grad_a_pairing(cfg, tilted, 0, J=J) @ v == pytest.approx(direct, rel=tol)


def test_lambda_pairing_formula_matches_direct_quadrature(tilted):
    a = np.array([0.6, 0.0, 0.8, 0, 0, 0, 0])
    errs = []
    for lam in (40.0, 80.0, 160.0):
        al = balanced_alphas(tilted, [a], 6)
        cfg = Configuration.from_arrays(al, [a], [lam], 6)
        phi = lambda X: profile_lam_dlam(6, lam, X @ a)
        direct, J = direct_gradient_pairing(cfg, tilted, phi)
        formula = grad_lambda_pairing(cfg, tilted, 0, J=J)
        errs.append(abs(formula - direct) / abs(direct))
    assert errs[-1] < 0.05
    assert errs[0] > errs[1] > errs[2]


def test_regime_warning_below_threshold(quad6):
    cfg = Configuration.from_arrays([1.0], [np.eye(7)[0]], [5.0], 6)
    with pytest.warns(RegimeWarning):
        rep = J_expansion(cfg, quad6)
    assert rep.warnings


def test_self_estimates_decay_faster_than_lambda_cubed(quad6):
    a = as_point([1.0, 0.3, 0, 0, 0, 0, 0])
    sw = self_estimate_sweep(quad6, a, [10.0, 20.0, 40.0, 80.0])
    assert sw.mass_slope < -2.5
    assert sw.lambda_slope < -2.5


@pytest.mark.parametrize("n,lams", [(5, [1e5, 1e6]), (6, [1e3, 1e4])])
def test_interaction_ratio_tends_to_one(n, lams):
    sw = interaction_sweep(n, math.pi / 2, lams)
    for r, e in zip(sw.ratios, sw.eps):
        assert e <= 1e-4
        assert r == pytest.approx(1.0, abs=1e-3)
    assert all(math.isfinite(v) for v in sw.log_bound)


def test_mass_residual_decays_like_lambda_to_the_minus_four(tilted):
    """Odd Taylor terms of K integrate to zero against the radial bubble."""
    a = as_point([0.2, -0.5, 0.7, 0.1, 0, 0.3, 0])
    sw = self_estimate_sweep(tilted, a, [20.0, 40.0, 80.0, 160.0])
    assert sw.mass_slope == pytest.approx(-4.0, abs=0.2)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paneitz_lab.infinity_catalog import matrix_from_data
from paneitz_lab.morse_analyzer import CurvatureField, find_critical_points
from paneitz_lab.reduced_flow import (
    CriticalData,
    FlowParams,
    FlowState,
    RegimeError,
    UnclassifiableStateError,
    basin_survey,
    classify_region,
    default_eta,
    eta_bound,
    integrate_flow,
    pseudogradient_W,
    seed_state,
    smooth_step,
    velocity_leading,
)
from paneitz_lab.sphere_geometry import exp_map, tangent_basis


def engineered_field():
    """n = 6 field whose maximum pair (-e_0, e_0) has a positive interaction matrix."""
    b = [0.5, 0.25, -0.2, 0.1, -0.05, 0.15, -0.3]
    terms = [([10, 0, 0, 0, 0, 0, 0], 1.0), ([1, 0, 0, 0, 0, 0, 0], 0.1), ([0] * 7, 1.5)]
    for k, c in enumerate(b):
        e = [0] * 7
        e[k] = 2
        terms.append((e, c))
    return CurvatureField.from_terms(6, terms)


@pytest.fixture(scope="module")
def six():
    K = engineered_field()
    pts = find_critical_points(K)
    return K, pts, CriticalData.of(pts), default_eta(K, pts)


@pytest.fixture(scope="module")
def five(quad5):
    pts = find_critical_points(quad5)
    return quad5, pts, CriticalData.of(pts), default_eta(quad5, pts)


def _pair(crit, want_positive):
    first = [i for i in range(len(crit.points)) if crit.first_class(i)]
    for k, i in enumerate(first):
        for j in first[k + 1:]:
            if (crit.rho((i, j))[0] > 0) == want_positive:
                return (i, j)
    raise LookupError


@given(st.floats(-2, 3), st.floats(-2, 3))
def test_smooth_step_is_monotone_between_zero_and_one(t1, t2):
    a, b = sorted((t1, t2))
    fa, fb = smooth_step(a, 0.0, 1.0), smooth_step(b, 0.0, 1.0)
    assert 0.0 <= fa <= fb <= 1.0
    assert smooth_step(-0.5, 0, 1) == 0.0 and smooth_step(1.5, 0, 1) == 1.0


def test_state_validation():
    with pytest.raises(ValueError):
        FlowState([1.0], [[1, 0, 0, 0, 0, 0, 0]], [-0.1])
    with pytest.raises(ValueError):
        FlowState([1.0, 1.0], [[1, 0, 0, 0, 0, 0, 0]], [0.1])


def test_eta_is_a_quarter_separation_at_most(six):
    K, pts, crit, eta = six
    assert 0 < eta <= 0.8 * eta_bound(pts)
    with pytest.raises(ValueError):
        classify_region(FlowState.balanced(K, crit.locations[:1], [100.0]), K, pts,
                        2 * eta_bound(pts))


def test_leading_velocity_reduces_to_matrix_ode(six):
    """Balanced configurations at critical points: ds/dt = -M s to leading order."""
    K, pts, crit, eta = six
    tau = _pair(crit, True)
    for lams, tol in (([300.0, 400.0], 2e-3), ([3000.0, 4000.0], 2e-5)):
        st = FlowState.balanced(K, crit.locations[list(tau)], lams)
        v = velocity_leading(st, K)
        s = st.inv_lambdas
        M = matrix_from_data(crit.locations[list(tau)], crit.values[list(tau)],
                             crit.laplacians[list(tau)]).entries
        np.testing.assert_allclose(-v.dlog_lam * s, -(M @ s), rtol=tol)


def test_leading_velocity_refuses_out_of_tube(six):
    K, pts, crit, eta = six
    st = FlowState.balanced(K, crit.locations[:1], [5.0])
    with pytest.raises(RegimeError):
        velocity_leading(st, K)
    with pytest.raises(RegimeError):
        integrate_flow(st, K, "leading", crit, eta)


def test_region_labels(six):
    K, pts, crit, eta = six
    pos, neg = _pair(crit, True), _pair(crit, False)
    second = next(i for i in range(len(pts)) if not crit.first_class(i))
    lab = lambda idx, lams: classify_region(
        FlowState.balanced(K, crit.locations[list(idx)], lams), K, crit, eta).label
    assert lab(pos, [200.0, 300.0]) == "V1"
    assert lab(neg, [200.0, 300.0]) == "V2"
    assert lab((pos[0], second), [200.0, 300.0]) == "V3"
    # two bubbles near the same point but far apart in concentration
    y = crit.locations[pos[0]]
    near = exp_map(y, 0.1 * eta * tangent_basis(y)[:, 0])
    st = FlowState.balanced(K, np.array([y, near]), [100.0, 1e5])
    assert classify_region(st, K, crit, eta).label == "V4"
    far = exp_map(y, 0.9 * eta * tangent_basis(y)[:, 0])
    assert lab((pos[0],), [100.0]) == "V1"
    assert classify_region(FlowState.balanced(K, far[None], [100.0]), K, crit, eta).label == "V5"
    assert lab((pos[0],), [5.0]) == "exterior"


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_pseudogradient_respects_speed_cap(six, seed):
    K, pts, crit, eta = six
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 4))
    targets = rng.choice(len(pts), size=p, replace=False)
    state = seed_state(K, crit, targets, eta, (40.0, 400.0), rng, radius_frac=2.0)
    params = FlowParams()
    try:
        v = pseudogradient_W(state, K, crit, eta, params)
    except UnclassifiableStateError:
        return
    speed = max(np.max(np.abs(v.dlog_lam)), np.max(np.linalg.norm(v.da, axis=1) * state.lams))
    assert speed <= params.speed_cap * (1 + 1e-12)
    # tangent center velocities
    np.testing.assert_allclose(np.sum(v.da * state.centers, axis=1), 0.0, atol=1e-12)


def test_single_bubble_blows_up_at_first_class_point(five):
    K, pts, crit, eta = five
    rng = np.random.default_rng(4)
    for j in (i for i in range(len(pts)) if crit.first_class(i)):
        for driver in ("leading", "pseudogradient"):
            st = seed_state(K, crit, [j], eta, (30.0, 200.0), rng)
            tr = integrate_flow(st, K, driver, crit, eta)
            assert tr.outcome == "blowup" and tr.tau == (j,) and tr.matched
            assert tr.diagnostics["monotone_lambda_after_entry"]
            assert tr.diagnostics["descent_violations"] == 0


def test_single_bubble_never_blows_up_at_second_class_point(five):
    K, pts, crit, eta = five
    rng = np.random.default_rng(5)
    for j in (i for i in range(len(pts)) if not crit.first_class(i)):
        st = seed_state(K, crit, [j], eta, (30.0, 200.0), rng)
        assert integrate_flow(st, K, "leading", crit, eta).outcome != "blowup"


def test_flow_is_deterministic(six):
    K, pts, crit, eta = six
    tau = _pair(crit, True)
    rng = np.random.default_rng(0)
    st = seed_state(K, crit, tau, eta, (30.0, 200.0), rng)
    a = integrate_flow(st, K, "leading", crit, eta)
    b = integrate_flow(st, K, "leading", crit, eta)
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()
    assert a.outcome == "blowup" and a.tau == tuple(sorted(tau))


def test_basin_survey_reports_only_enumerated_blowups(five):
    K, pts, crit, eta = five
    res = basin_survey(K, 5, 1, 6, seed=2, points=pts, eta=eta)
    assert sum(res.histogram.values()) == 6
    assert res.violations == []

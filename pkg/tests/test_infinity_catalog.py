from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import eigh

from paneitz_lab.infinity_catalog import (
    SCHEMA,
    BoundaryDegenerateError,
    CatalogDomainError,
    TiedLevelsError,
    condition_H_data,
    critical_value,
    enumerate_cpi,
    euler_characteristic_trace,
    index_at_infinity,
    interaction_matrix,
    jacobi_eigh,
    matrix_entries,
    matrix_from_data,
    resolve_theorem,
    theorem_report,
)
from paneitz_lab.morse_analyzer import CurvatureField, find_critical_points
from paneitz_lab.sphere_geometry import green_function, random_points

seeds = st.integers(0, 2**31 - 1)


@given(st.integers(1, 8), seeds)
def test_jacobi_matches_lapack(m, seed):
    A = np.random.default_rng(seed).normal(size=(m, m))
    A = A + A.T
    w, V = jacobi_eigh(A)
    np.testing.assert_allclose(w, eigh(A, eigvals_only=True), atol=1e-12 * max(1, np.abs(A).max()))
    np.testing.assert_allclose(V.T @ V, np.eye(m), atol=1e-12)
    np.testing.assert_allclose(A @ V, V * w, atol=1e-11 * max(1, np.abs(A).max()))


def _random_data(seed, s):
    rng = np.random.default_rng(seed)
    Y = random_points(6, s, rng)
    K = rng.uniform(0.5, 2.0, size=s)
    L = -rng.uniform(0.01, 50.0, size=s)
    return Y, K, L


@settings(max_examples=200)
@given(seeds)
def test_condition_H_is_equivalent_to_negative_rho(seed):
    Y, K, L = _random_data(seed, 2)
    im = matrix_from_data(Y, K, L)
    if abs(im.rho) < 1e-12:
        return
    assert condition_H_data(Y[0], Y[1], K[0], K[1], L[0], L[1]).holds == (im.rho < 0)


@given(seeds, st.integers(2, 5))
def test_principal_submatrices_interlace(seed, s):
    Y, K, L = _random_data(seed, s)
    full = matrix_from_data(Y, K, L)
    for drop in range(s):
        keep = [i for i in range(s) if i != drop]
        sub = matrix_from_data(Y[keep], K[keep], L[keep])
        w, v = full.eigenvalues, sub.eigenvalues
        assert np.all(w[:-1] <= v + 1e-9) and np.all(v <= w[1:] + 1e-9)


@given(seeds, st.integers(1, 5))
def test_least_eigenvector_is_positive(seed, s):
    Y, K, L = _random_data(seed, s)
    im = matrix_from_data(Y, K, L)
    # off-diagonal entries are negative, so the least eigenvector has one sign
    assert np.all(im.eigenvector > -1e-12)
    assert im.residual < 1e-9


def test_matrix_entries_by_hand():
    Y = np.eye(7)[:2]
    M = matrix_entries(Y, [1.0, 16.0], [-2.0, -8.0])
    assert M[0, 0] == pytest.approx(2.0)
    assert M[1, 1] == pytest.approx(8.0 / 64.0)
    assert M[0, 1] == pytest.approx(-30.0 * green_function(Y[0], Y[1]) / 2.0)


def test_index_and_level_formulas():
    assert index_at_infinity(5, [2]) == 3
    assert index_at_infinity(6, [6, 4]) == 3
    assert critical_value(6, [1.0]) < critical_value(6, [0.5])
    assert critical_value(6, [1.0, 1.0]) == pytest.approx(2 ** (2 / 3) * critical_value(6, [1.0]))
    with pytest.raises(CatalogDomainError):
        index_at_infinity(5, [1, 2])


def test_theorem_ids_resolve():
    assert resolve_theorem("t:4") == "t:4"
    assert resolve_theorem(" T:3 ") == "t:3"
    with pytest.raises(CatalogDomainError):
        resolve_theorem("t:9")


def brute_force_records(K, points):
    """Every first-class tuple with positive least eigenvalue, by full enumeration."""
    first = [i for i, p in enumerate(points) if p.first_class]
    out = []
    for s in range(1, len(first) + 1):
        for tau in combinations(first, s):
            M = matrix_entries([points[i].location for i in tau], [points[i].value for i in tau],
                               [points[i].laplacian for i in tau])
            if np.linalg.eigvalsh(M)[0] > 0:
                out.append(tau)
    return sorted(out)


@pytest.fixture(scope="module")
def engineered6():
    b = [0.5, 0.25, -0.2, 0.1, -0.05, 0.15, -0.3]
    terms = [([10, 0, 0, 0, 0, 0, 0], 1.0), ([1, 0, 0, 0, 0, 0, 0], 0.1), ([0] * 7, 1.5)]
    for k, c in enumerate(b):
        e = [0] * 7
        e[k] = 2
        terms.append((e, c))
    K = CurvatureField.from_terms(6, terms)
    return K, find_critical_points(K)


@pytest.mark.parametrize("which", ["quad", "engineered"])
def test_pruned_enumeration_matches_brute_force(which, quad6, engineered6):
    K, pts = (quad6, find_critical_points(quad6)) if which == "quad" else engineered6
    pruned = enumerate_cpi(K, 6, pts, prune=True)
    full = enumerate_cpi(K, 6, pts, prune=False)
    assert sorted(r.tau for r in pruned) == sorted(r.tau for r in full) == brute_force_records(K, pts)
    levels = [r.critical_value for r in pruned]
    assert levels == sorted(levels)


def test_degenerate_tuple_raises():
    K = CurvatureField.quadratic_family(6, [0.1, 0.2, -0.1, 0.05, 0.0, -0.15, 0.3])
    pts = find_critical_points(K)
    with pytest.raises(CatalogDomainError):
        interaction_matrix([2], K, pts)
    # rescale one Laplacian so a pair sits exactly on rho = 0
    i, j = [k for k, p in enumerate(pts) if p.first_class][:2]
    im = interaction_matrix((i, j), K, pts)
    G = green_function(pts[i].location, pts[j].location)
    lap_j = 900 * G**2 * pts[i].value * pts[j].value / pts[i].laplacian
    bad = list(pts)
    from dataclasses import replace
    bad[j] = replace(pts[j], laplacian=lap_j)
    with pytest.raises(BoundaryDegenerateError):
        enumerate_cpi(K, 6, bad)
    assert im.tau == (i, j)


def test_five_dimensional_records_are_single_points(quad5):
    pts = find_critical_points(quad5)
    recs = enumerate_cpi(quad5, 5, pts)
    assert len(recs) == sum(p.first_class for p in pts)
    assert all(r.p == 1 and r.rho is None for r in recs)


def test_reports_carry_schema_and_dimension_gate(quad5):
    rep = theorem_report(quad5, 5, "t:1")
    assert rep.to_dict()["schema"] == SCHEMA
    with pytest.raises(CatalogDomainError):
        theorem_report(quad5, 5, "t:4")


def test_euler_trace_rejects_tied_levels(quad6):
    with pytest.raises(TiedLevelsError):
        euler_characteristic_trace(quad6)


def test_euler_trace_counts():
    a = [0.1, 0.2, -0.1, 0.05, 0.0, -0.15, 0.3]
    tilt = [0.011, 0.017, 0.013, 0.019, 0.023, 0.029, 0.031]
    terms = [([0] * 7, 1.0)]
    for k in range(7):
        e2, e1 = [0] * 7, [0] * 7
        e2[k], e1[k] = 2, 1
        terms += [(e2, a[k]), (e1, tilt[k])]
    K = CurvatureField.from_terms(6, terms)
    pts = find_critical_points(K)
    assert len(pts) == 14
    tr = euler_characteristic_trace(K, 6, pts)
    first = [p for p in pts if p.first_class]
    assert tr.final_chi == sum((-1) ** (6 - p.morse_index) for p in first)
    assert [r.level for r in tr.rows] == sorted(r.level for r in tr.rows)
    assert tr.equals_one == (tr.final_chi == 1)

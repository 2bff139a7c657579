import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from oracles import fine_quadrature, shifted_legendre_orthonormal, textbook_gauss_nodes
from phbvm.legendre import (
    MAX_NODES,
    antiderivative_table,
    eval_legendre,
    eval_legendre_antiderivative,
    gauss_rule,
    legendre_table,
)


def test_p0_is_one():
    assert eval_legendre(0, 0.73) == 1.0


def test_p1_vanishes_at_midpoint():
    assert eval_legendre(1, 0.5) == 0.0


def test_p1_at_right_end():
    assert eval_legendre(1, 1.0) == pytest.approx(math.sqrt(3.0), abs=1e-15)


def test_p2_unit_norm_with_64_point_rule():
    x, w = fine_quadrature(64)
    assert np.dot(w, eval_legendre(2, x) ** 2) == pytest.approx(1.0, abs=1e-14)


def test_negative_degree_rejected():
    with pytest.raises(ValueError):
        eval_legendre(-1, 0.2)
    with pytest.raises(ValueError):
        eval_legendre_antiderivative(-1, 0.2)


@pytest.mark.parametrize("c", [0.0, 0.3, 0.77, 1.0])
def test_antiderivative_of_constant(c):
    assert eval_legendre_antiderivative(0, c) == pytest.approx(c, abs=1e-16)


def test_antiderivative_of_p1_over_unit_interval():
    assert eval_legendre_antiderivative(1, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_antiderivative_matches_adaptive_quadrature():
    ref, _ = quad(lambda x: eval_legendre(2, x), 0.0, 0.3, epsabs=1e-14, epsrel=1e-14)
    assert eval_legendre_antiderivative(2, 0.3) == pytest.approx(ref, abs=1e-13)


def test_antiderivative_derivative_is_polynomial():
    rng = np.random.default_rng(7)
    pts = rng.uniform(0.01, 0.99, 100)
    d = 1e-6
    for j in range(6):
        fd = (eval_legendre_antiderivative(j, pts + d) - eval_legendre_antiderivative(j, pts - d)) / (2 * d)
        assert np.max(np.abs(fd - eval_legendre(j, pts))) < 1e-6


def test_tables_agree_with_scalar_versions():
    c = np.linspace(0, 1, 7)
    P = legendre_table(5, c)
    A = antiderivative_table(5, c)
    for j in range(6):
        np.testing.assert_allclose(P[j], eval_legendre(j, c), atol=1e-15)
        np.testing.assert_allclose(A[j], eval_legendre_antiderivative(j, c), atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(j=st.integers(0, 40), c=st.floats(0.0, 1.0))
def test_recurrence_matches_classical_series(j, c):
    assert eval_legendre(j, c) == pytest.approx(shifted_legendre_orthonormal(j, c), abs=1e-11)


def test_orthonormality_with_16_point_rule():
    rule = gauss_rule(16)
    P = legendre_table(8, rule.nodes)
    G = (P * rule.weights) @ P.T
    assert np.max(np.abs(G - np.eye(9))) < 1e-12


def test_midpoint_rule():
    rule = gauss_rule(1)
    assert rule.nodes.tolist() == [0.5]
    assert rule.weights.tolist() == [1.0]


def test_two_point_rule():
    rule = gauss_rule(2)
    r = math.sqrt(3.0) / 6.0
    np.testing.assert_allclose(rule.nodes, [0.5 - r, 0.5 + r], atol=1e-15)
    np.testing.assert_allclose(rule.weights, [0.5, 0.5], atol=1e-15)


def test_six_point_rule_degree_eleven():
    assert gauss_rule(6).integrate(lambda x: x ** 11) == pytest.approx(1.0 / 12.0, abs=1e-14)


@pytest.mark.parametrize("k", [0, -3, MAX_NODES + 1])
def test_rule_size_out_of_range(k):
    with pytest.raises(ValueError):
        gauss_rule(k)


@pytest.mark.parametrize("k", range(1, MAX_NODES + 1))
def test_rule_properties(k):
    rule = gauss_rule(k)
    c, b = rule.nodes, rule.weights
    assert len(c) == len(b) == k
    assert np.all(np.diff(c) > 0) and c[0] > 0 and c[-1] < 1
    assert np.all(b > 0)
    assert abs(b.sum() - 1.0) < 1e-14
    half = k // 2
    assert np.array_equal(c[k - half:], (1.0 - c[:half])[::-1])
    assert np.max(np.abs(c[::-1] - (1.0 - c))) < 1e-14
    assert np.max(np.abs(b - b[::-1])) < 1e-14
    ref_c, ref_b = textbook_gauss_nodes(k)
    assert np.max(np.abs(c - ref_c)) < 1e-14
    assert np.max(np.abs(b - ref_b)) < 1e-14


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8, 12, 20, 32])
def test_rule_exact_for_monomials(k):
    rule = gauss_rule(k)
    for p in range(2 * k):
        assert abs(rule.integrate(lambda x: x ** p) - 1.0 / (p + 1)) < 1e-13

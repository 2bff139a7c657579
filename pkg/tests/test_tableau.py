import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from phbvm.tableau import build_tableau, min_modulus_eigenvalue, qr_eigenvalues, x_matrix

PAIRS = [(k, s) for k in range(1, 13) for s in range(1, k + 1)]


def test_one_point_tableau():
    tab = build_tableau(1, 1)
    np.testing.assert_array_equal(tab.X, [[0.5]])
    assert tab.lambda_s == pytest.approx(0.5, abs=1e-15)


def test_two_point_two_stage_tableau():
    tab = build_tableau(2, 2)
    xi1 = 1.0 / (2.0 * math.sqrt(3.0))
    np.testing.assert_allclose(tab.X, [[0.5, -xi1], [xi1, 0.0]], atol=1e-15)
    assert tab.lambda_s == pytest.approx(1.0 / math.sqrt(12.0), abs=1e-14)


@pytest.mark.parametrize("k,s", PAIRS)
def test_discrete_orthonormality_and_x_identity(k, s):
    tab = build_tableau(k, s)
    Om = np.diag(tab.weights)
    assert np.max(np.abs(tab.P.T @ Om @ tab.P - np.eye(s))) < 1e-12
    assert np.max(np.abs(tab.P.T @ Om @ tab.I - tab.X)) < 1e-12
    assert np.max(np.abs(tab.X @ tab.Xinv - np.eye(s))) < 1e-12
    assert tab.lambda_s > 0


@pytest.mark.parametrize("s", range(1, 9))
def test_square_case_projector_is_identity(s):
    tab = build_tableau(s, s)
    assert np.max(np.abs(tab.P @ tab.PtOmega - np.eye(s))) < 1e-12


def test_shapes_and_immutability():
    tab = build_tableau(6, 3)
    assert tab.P.shape == tab.I.shape == (6, 3)
    assert tab.X.shape == tab.Xinv.shape == (3, 3)
    with pytest.raises(ValueError):
        tab.P[0, 0] = 1.0


@pytest.mark.parametrize("k,s", [(1, 2), (3, 4), (0, 1), (33, 1), (4, 0)])
def test_invalid_sizes_rejected(k, s):
    with pytest.raises(ValueError):
        build_tableau(k, s)


@pytest.mark.parametrize("s", range(1, 33))
def test_min_modulus_matches_dense_eigensolver(s):
    X = x_matrix(s)
    ref = np.min(np.abs(np.linalg.eigvals(X)))
    assert abs(min_modulus_eigenvalue(X) - ref) < 1e-12


@pytest.mark.parametrize("s", [2, 3, 4, 7, 10])
def test_spectrum_closed_under_conjugation(s):
    ev = qr_eigenvalues(x_matrix(s))
    assert len(ev) == s
    for lam in ev:
        assert np.min(np.abs(ev - np.conj(lam))) < 1e-10
    assert np.sum(np.abs(ev.imag) < 1e-12) == s % 2


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-3, 3, allow_nan=False, width=64)))
def test_qr_eigenvalues_on_random_matrices(A):
    ref = np.sort_complex(np.linalg.eigvals(A))
    got = qr_eigenvalues(A)
    scale = 1.0 + np.max(np.abs(A))
    # match each reference eigenvalue to its closest computed one
    for lam in ref:
        assert np.min(np.abs(got - lam)) < 1e-6 * scale


def test_singular_matrix_rejected():
    with pytest.raises(ValueError):
        min_modulus_eigenvalue(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_nonsquare_rejected():
    with pytest.raises(ValueError):
        min_modulus_eigenvalue(np.ones((2, 3)))

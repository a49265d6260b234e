import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pebo_observer.linalg import adjugate, adjugate_matvec, det_lu, matmul, matvec, slogdet_lu


def _matrices(m):
    return arrays(np.float64, (m, m), elements=st.floats(-3, 3, allow_nan=False, width=64))


def test_identity_adjugate():
    for m in (1, 2, 5, 9):
        np.testing.assert_array_equal(adjugate(np.eye(m)), np.eye(m))


def test_diagonal_adjugate():
    np.testing.assert_allclose(adjugate(np.diag([2.0, 3.0, 4.0])), np.diag([12.0, 8.0, 6.0]))


def test_one_by_one():
    assert adjugate(np.array([[7.0]]))[0, 0] == 1.0
    assert det_lu(np.array([[7.0]])) == 7.0


@pytest.mark.parametrize("m", [1, 2, 3, 9])
def test_adjugate_identity_random(m, rng):
    for _ in range(20):
        M = rng.normal(size=(m, m))
        adj = adjugate(M)
        scale = max(1.0, np.linalg.norm(M) ** m)
        d = det_lu(M)
        assert np.linalg.norm(M @ adj - d * np.eye(m)) < 1e-8 * scale
        assert np.linalg.norm(adj @ M - d * np.eye(m)) < 1e-8 * scale


@pytest.mark.parametrize("m", [2, 3, 9])
def test_adjugate_of_singular_matrix(m, rng):
    M = rng.normal(size=(m, m))
    M[-1] = 2.0 * M[0] - 0.5 * M[1:-1].sum(axis=0)
    adj = adjugate(M)
    assert np.linalg.norm(M @ adj) < 1e-8 * max(1.0, np.linalg.norm(M) ** m)
    assert np.linalg.norm(adj) > 0  # rank m-1 keeps a nonzero adjugate


def test_rank_deficient_by_two_gives_zero_adjugate():
    M = np.zeros((3, 3))
    M[0, 0] = 1.0
    np.testing.assert_array_equal(adjugate(M), np.zeros((3, 3)))


@given(_matrices(3))
def test_det_matches_numpy(M):
    with np.errstate(divide="ignore"):
        ref = np.linalg.det(M)
    assert det_lu(M) == pytest.approx(ref, abs=1e-9 * max(1.0, np.linalg.norm(M) ** 3))


@given(_matrices(4), arrays(np.float64, 4, elements=st.floats(-3, 3, allow_nan=False)))
def test_column_replacement_matches_cofactors(M, b):
    scale = max(1.0, np.linalg.norm(M) ** 3) * max(1.0, np.linalg.norm(b))
    np.testing.assert_allclose(adjugate_matvec(M, b), adjugate(M) @ b, atol=1e-9 * scale)


def test_slogdet_sign_and_singular():
    s, ld = slogdet_lu(np.diag([-2.0, 3.0]))
    assert s == -1.0 and ld == pytest.approx(np.log(6.0))
    assert slogdet_lu(np.zeros((3, 3))) == (0.0, -np.inf)


def test_loop_products(rng):
    A, B, v = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=4)
    np.testing.assert_allclose(matmul(A, B), A @ B)
    np.testing.assert_allclose(matvec(A, v), A @ v)

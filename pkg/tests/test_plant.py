from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pebo_observer import ices2022
from pebo_observer.errors import ConfigurationError, UnobservablePlantError
from pebo_observer.plant import (
    build_canonical,
    canonical_for,
    eval_plant,
    get_plant,
    observability_matrix,
    shift_matrix,
    similarity_residuals,
)

PLANT = get_plant("ices2022_example")
THETA = np.array([1.0, 1.0, -1.0])


def test_eval_plant_nominal():
    A, B = eval_plant(PLANT, THETA)
    np.testing.assert_array_equal(A, [[0, 2, 0], [-1, 0, 1], [0, 1, 0]])
    np.testing.assert_array_equal(B, [0, 0, -1])


def test_eval_plant_zero_theta():
    A, B = eval_plant(PLANT, np.zeros(3))
    assert not A.any() and not B.any()


@pytest.mark.parametrize("bad", [[1.0, 2.0], [1, 2, 3, 4], [1.0, np.nan, 0.0]])
def test_eval_plant_rejects_bad_theta(bad):
    with pytest.raises(ConfigurationError):
        eval_plant(PLANT, bad)


def test_observability_rows():
    A, _ = eval_plant(PLANT, THETA)
    np.testing.assert_array_equal(observability_matrix(A, PLANT.C), [[0, 0, 1], [0, 1, 0], [-1, 0, 1]])


def test_observability_trivial_cases():
    e1 = np.array([1.0, 0, 0])
    np.testing.assert_array_equal(observability_matrix(np.eye(3), e1), np.tile(e1, (3, 1)))
    np.testing.assert_array_equal(observability_matrix(shift_matrix(3), e1), np.eye(3))


def test_canonical_nominal():
    cf = canonical_for(PLANT, THETA)
    np.testing.assert_allclose(cf.T_I, [[2, 0, -1], [0, 1, 0], [1, 0, 0]], atol=1e-9)
    np.testing.assert_allclose(cf.psi_a, [0, -1, 0], atol=1e-9)
    np.testing.assert_allclose(cf.psi_b, [-1, 0, -2], atol=1e-9)
    assert max(similarity_residuals(PLANT, THETA, cf)) < 1e-10
    assert cf.output_scale == pytest.approx(1.0)


def test_already_canonical_gives_identity():
    v = np.array([-3.0, 0.5, 2.0])
    A = shift_matrix(3) + np.outer(v, [1, 0, 0])
    cf = build_canonical(A, np.ones(3), np.array([1.0, 0, 0]))
    np.testing.assert_allclose(cf.T_I, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(cf.psi_a, v, atol=1e-12)


def test_unobservable_raises_with_condition():
    with pytest.raises(UnobservablePlantError) as exc:
        build_canonical(np.eye(3), np.ones(3), np.array([1.0, 0, 0]))
    assert exc.value.condition > 1e12 or not np.isfinite(exc.value.condition)


def test_perturbed_transform_breaks_residual():
    cf = canonical_for(PLANT, THETA)
    T_I = np.array(cf.T_I)
    T_I[0, 1] += 0.1
    assert similarity_residuals(PLANT, THETA, replace(cf, T_I=T_I))[0] > 0


def test_shift_matrix_nilpotent():
    A0 = shift_matrix(3)
    assert not np.linalg.matrix_power(A0, 3).any()


_mag = st.floats(0.2, 2.0)
_theta = st.tuples(*(st.tuples(_mag, st.booleans()) for _ in range(3))).map(
    lambda t: np.array([m if pos else -m for m, pos in t])
)


@given(_theta)
def test_random_theta_canonical_identities(theta):
    cf = canonical_for(PLANT, theta)
    A, B = eval_plant(PLANT, theta)
    r1, r2, r3 = similarity_residuals(PLANT, theta, cf)
    assert r1 < 1e-8 * max(1.0, np.linalg.norm(A))
    assert r2 < 1e-8 * max(1.0, np.linalg.norm(B))
    assert r3 < 1e-10
    np.testing.assert_allclose(cf.T @ cf.T_I, np.eye(3), atol=1e-10)
    # output alignment: C^T T_I e_j = 0 for j >= 2
    assert np.all(np.abs(PLANT.C @ cf.T_I[:, 1:]) < 1e-10)


@given(_theta)
def test_random_theta_matches_closed_forms(theta):
    cf = canonical_for(PLANT, theta)
    ref = ices2022.T_I_closed(theta)
    np.testing.assert_allclose(cf.T_I, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())
    np.testing.assert_allclose(cf.psi_a, ices2022.psi_a_closed(theta), rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(cf.psi_b, ices2022.psi_b_closed(theta), rtol=1e-9, atol=1e-9)


def test_eta_stacks_initial_canonical_state():
    cf = canonical_for(PLANT, THETA)
    x0 = np.array([1.0, 2.0, 3.0])
    eta = cf.eta(x0)
    np.testing.assert_allclose(eta[6:], cf.T @ x0)
    np.testing.assert_allclose(cf.T_I @ eta[6:], x0)


def test_unknown_plant():
    with pytest.raises(ConfigurationError):
        get_plant("nope")

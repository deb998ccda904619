import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from ldceval.vehicle import VehicleParams, VehicleState, build_matrices, step


def lti_oracle(A, b, x0, t):
    """Exact response of x' = A x + b (constant b) via the augmented exponential."""
    n = A.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n] = b
    return (expm(M * t) @ np.r_[x0, 1.0])[:n]


def test_matrix_entries_at_15mps():
    p = VehicleParams()
    A, B, E = build_matrices(p, 15.0, "paper")
    assert A[1, 1] == pytest.approx(-320000 / 15000)
    assert A[1, 2] == pytest.approx(320.0)
    assert A[1, 3] == pytest.approx(-(160000 * 1.43 + 160000 * 1.47) / 15000)
    assert A[3, 3] == pytest.approx(-(160000 * 1.43**2 + 160000 * 1.47**2) / (3344 * 15))
    assert B[1] == pytest.approx(160.0) and B[3] == pytest.approx(160000 * 1.43 / 3344)
    assert E[1] == pytest.approx(-(160000 * 1.43 - 160000 * 1.47) / 15000 - 15.0)


def test_conventions_differ_only_in_yaw_coupling():
    p = VehicleParams()
    a = build_matrices(p, 20.0, "paper").A
    b = build_matrices(p, 20.0, "standard").A
    diff = np.argwhere(a != b)
    assert diff.tolist() == [[1, 3]]
    assert b[1, 3] == pytest.approx((-160000 * 1.43 + 160000 * 1.47) / (1000 * 20.0))


@pytest.mark.parametrize("bad", [0.0, 0.5, -3.0])
def test_speed_must_exceed_minimum(bad):
    with pytest.raises(ValueError):
        build_matrices(VehicleParams(), bad)


def test_unknown_convention():
    with pytest.raises(ValueError):
        build_matrices(VehicleParams(), 10.0, "textbook")


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        VehicleParams(M=-1.0)


def test_zero_input_keeps_equilibrium():
    m = build_matrices(VehicleParams(), 15.0)
    assert step(VehicleState(), m, 0.0, 0.0, 0.05) == VehicleState()


@pytest.mark.parametrize("v_x", [10.0, 15.0, 25.0])
@pytest.mark.parametrize("convention", ["paper", "standard"])
def test_rk4_matches_exponential(v_x, convention):
    m = build_matrices(VehicleParams(), v_x, convention)
    x0 = np.array([0.3, -0.1, 0.02, 0.01])
    x = x0
    for _ in range(100):
        x = np.asarray(step(x, m, 0.005, 0.01, 0.05))
    ref = lti_oracle(m.A, m.B * 0.005 + m.E * 0.01, x0, 5.0)
    assert np.abs(x - ref).max() < 1e-6


def test_callable_steering_is_evaluated_per_stage():
    m = build_matrices(VehicleParams(), 15.0)
    F = np.array([-0.01, 0.0, -0.2, 0.0])
    x0 = np.array([0.5, 0.0, 0.0, 0.0])
    x = x0
    for _ in range(100):
        x = np.asarray(step(x, m, lambda s: F @ s, 0.0, 0.05))
    ref = lti_oracle(m.A + np.outer(m.B, F), np.zeros(4), x0, 5.0)
    assert np.abs(x - ref).max() < 1e-6


def test_rejects_non_finite_inputs():
    m = build_matrices(VehicleParams(), 15.0)
    with pytest.raises(ValueError):
        step([np.nan, 0, 0, 0], m, 0.0, 0.0, 0.05)
    with pytest.raises(ValueError):
        step([0, 0, 0, 0], m, 0.0, 0.0, 0.0)


@given(st.floats(1.0, 40.0), st.floats(-0.05, 0.05), st.floats(-0.05, 0.05))
def test_response_is_linear_in_inputs(v_x, delta, rate):
    m = build_matrices(VehicleParams(), v_x)
    x0 = np.array([0.1, 0.0, 0.01, 0.0])
    both = np.asarray(step(x0, m, delta, rate, 0.01))
    parts = (np.asarray(step(x0, m, delta, 0.0, 0.01)) + np.asarray(step(x0, m, 0.0, rate, 0.01))
             - np.asarray(step(x0, m, 0.0, 0.0, 0.01)))
    np.testing.assert_allclose(both, parts, atol=1e-12)

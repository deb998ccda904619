import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldceval.errors import DegenerateGeometryError, MalformedEventError
from ldceval.features import (
    FEATURE_NAMES,
    DepartureEvent,
    FeatureVector,
    Side,
    extract_features,
    feature_bounds,
    filter_event,
    fit_curvature,
    fit_lateral,
    fit_velocity,
    lateral_basis,
    resample_uniform,
    travel_distance,
)


def _event(n=41, T=4.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, T, n)
    return DepartureEvent(t, 0.4 * np.sin(np.pi * t / T) + rng.normal(0, 0.02, n),
                          18.0 + 0.5 * (t - T / 2) + rng.normal(0, 0.1, n),
                          1e-3 - 2e-4 * t + rng.normal(0, 1e-5, n), "R", "e")


def test_travel_distance_of_linear_speed_is_exact():
    t = np.linspace(0.0, 2.0, 21)
    x = travel_distance(t, 10.0 + 3.0 * t)
    np.testing.assert_allclose(x, 10.0 * t + 1.5 * t**2, rtol=1e-13)


def test_lateral_basis_has_unit_peak_and_zero_ends():
    x = np.linspace(0.0, 50.0, 101)
    phi = lateral_basis(x, 50.0)
    assert phi[0] == 0.0 and phi[-1] == 0.0
    assert phi.max() == pytest.approx(1.0)


def test_lateral_fit_matches_lstsq():
    ev = _event()
    d_y, sigma_y, d_x = fit_lateral(ev)
    x = travel_distance(ev.t, ev.v)
    phi = lateral_basis(x, x[-1])[:, None]
    coef, *_ = np.linalg.lstsq(phi, ev.y, rcond=None)
    assert d_y == pytest.approx(coef[0], rel=1e-12)
    assert sigma_y == pytest.approx(np.std(ev.y - phi[:, 0] * coef[0], ddof=1), rel=1e-12)
    assert d_x == pytest.approx(x[-1])


def test_velocity_fit_matches_constrained_lstsq():
    ev = _event(seed=3)
    d_x = float(travel_distance(ev.t, ev.v)[-1])
    v_bar, a_bar, sigma_v = fit_velocity(ev, d_x)
    tau = ev.t - ev.duration / 2
    # intercept fixed at d_x / T, slope free
    coef, *_ = np.linalg.lstsq(tau[:, None], ev.v - v_bar, rcond=None)
    assert v_bar == pytest.approx(d_x / ev.duration)
    assert a_bar == pytest.approx(coef[0], rel=1e-12)
    assert sigma_v == pytest.approx(np.std(ev.v - v_bar - coef[0] * tau, ddof=1), rel=1e-12)


def test_curvature_fit_matches_polyfit():
    ev = _event(seed=4)
    c0, delta_c = fit_curvature(ev)
    slope, intercept = np.polyfit(ev.t - ev.t[0], ev.c, 1)
    assert c0 == pytest.approx(intercept, rel=1e-9)
    assert delta_c == pytest.approx(slope * ev.duration, rel=1e-9)


def test_extract_features_field_order():
    xi = extract_features(_event())
    assert FEATURE_NAMES == ("T", "d_y", "sigma_y", "v_bar", "a_bar", "sigma_v", "c0", "delta_c")
    np.testing.assert_array_equal(FeatureVector.from_array(xi.to_array()).to_array(), xi.to_array())


def test_left_departure_has_negative_peak():
    ev = _event().mirrored()
    assert ev.side is Side.LEFT
    assert extract_features(ev).d_y < 0


def test_zero_travel_is_degenerate():
    t = np.linspace(0, 1, 11)
    ev = DepartureEvent(t, np.zeros(11), np.zeros(11), np.zeros(11))
    with pytest.raises(DegenerateGeometryError):
        fit_lateral(ev)


@pytest.mark.parametrize("T,v,reason", [(0.3, 20.0, "duration"), (12.0, 20.0, "duration"), (3.0, 4.0, "speed")])
def test_filter_rejections(T, v, reason):
    t = np.linspace(0, T, 31)
    decision = filter_event(DepartureEvent(t, np.zeros(31), np.full(31, v), np.zeros(31)))
    assert not decision and decision.reason == reason


def test_filter_accepts_boundary_duration():
    t = np.linspace(0, 10.0, 101)
    assert filter_event(DepartureEvent(t, np.zeros(101), np.full(101, 6.0), np.zeros(101)))


def test_filter_raises_on_nonuniform_spacing():
    t = np.array([0.0, 0.1, 0.25, 0.3, 0.4, 0.5, 0.6])
    ev = DepartureEvent(t, np.zeros(7), np.full(7, 10.0), np.zeros(7))
    with pytest.raises(MalformedEventError, match="non-uniform"):
        filter_event(ev)
    assert resample_uniform(ev).spacing == pytest.approx(0.1)


@pytest.mark.parametrize("kwargs", [
    dict(t=[0.0], y=[0.0], v=[1.0], c=[0.0]),
    dict(t=[0.0, 0.0, 0.1], y=[0, 0, 0], v=[1, 1, 1], c=[0, 0, 0]),
    dict(t=[0.0, 0.1], y=[0.0, np.nan], v=[1, 1], c=[0, 0]),
    dict(t=[0.0, 0.1], y=[0.0], v=[1, 1], c=[0, 0]),
])
def test_malformed_events(kwargs):
    with pytest.raises(MalformedEventError):
        DepartureEvent(**kwargs)


def test_feature_vector_validation():
    with pytest.raises(ValueError):
        FeatureVector(0.0, 0.5, 0.01, 20.0, 0.0, 0.1, 0.0, 0.0)
    with pytest.raises(ValueError):
        FeatureVector(2.0, 0.5, -0.01, 20.0, 0.0, 0.1, 0.0, 0.0)


def test_feature_bounds_use_physical_limits():
    X = np.array([[2.0, 0.5, 0.02, 20.0, 0.1, 0.1, 0.001, 0.0],
                  [4.0, 0.7, 0.05, 25.0, -0.1, 0.2, -0.001, 0.0005]])
    lo, hi = feature_bounds(X)
    assert lo[0] == 0.5 and hi[0] == 10.0 and lo[3] == 5.0 and lo[2] == 0.0
    assert np.all(lo < X.min(0)) and np.all(hi > X.max(0))


@given(st.floats(-1.0, 1.0), st.floats(5.0, 40.0), st.floats(1.0, 9.0))
def test_mirroring_flips_lateral_and_curvature_features(d, v, T):
    t = np.linspace(0, T, 51)
    ev = DepartureEvent(t, d * np.sin(np.pi * t / T), v + 0.1 * t, 1e-3 * np.cos(t))
    a, b = extract_features(ev).to_array(), extract_features(ev.mirrored()).to_array()
    sign = np.array([1, -1, 1, 1, 1, 1, -1, -1])
    np.testing.assert_allclose(b, sign * a, rtol=1e-12, atol=1e-15)


@given(st.floats(0.05, 0.5), st.floats(-0.002, 0.002), st.floats(-0.002, 0.002))
def test_curvature_fit_is_exact_for_lines(dt, c0, slope):
    t = np.arange(0, 3.0 + dt / 2, dt)
    ev = DepartureEvent(t, np.zeros_like(t), np.full_like(t, 10.0), c0 + slope * t)
    got_c0, got_dc = fit_curvature(ev)
    assert got_c0 == pytest.approx(c0, abs=1e-15)
    assert got_dc == pytest.approx(slope * ev.duration, abs=1e-15)

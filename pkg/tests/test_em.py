import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from ldceval.bgm import (
    BoundedGmm,
    EmConfig,
    bic,
    data_bounds,
    e_step,
    fit_em,
    initialize,
    log_likelihood,
    m_step,
    n_parameters,
    sample,
    select_components,
)
from ldceval.errors import DataOutsideBoxError, DegenerateComponentError
from tests.reference import standard_gmm_em


def _two_blobs(n, seed, d=2):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 1.0, (n // 2, d))
    b = rng.normal(0.0, 0.6, (n - n // 2, d)) + 4.0
    return np.vstack([a, b])


def test_parameter_count():
    assert n_parameters(1, 1) == 2
    assert n_parameters(3, 8) == 2 + 24 + 3 * 36


def test_data_bounds_enclose_data_with_margin():
    x = np.array([[0.0, 5.0], [1.0, 7.0]])
    lo, hi = data_bounds(x, margin=0.1)
    np.testing.assert_allclose(lo, [-0.1, 4.8])
    np.testing.assert_allclose(hi, [1.1, 7.2])


def test_single_component_unbounded_is_sample_moments():
    rng = np.random.default_rng(0)
    x = rng.multivariate_normal([1.0, -2.0], [[2.0, 0.5], [0.5, 1.0]], 2000)
    model, rep = fit_em(x, 1, ([-1e6, -1e6], [1e6, 1e6]), EmConfig(tol=1e-14))
    np.testing.assert_allclose(model.means[0], x.mean(axis=0), atol=1e-8)
    np.testing.assert_allclose(model.covariances[0], np.cov(x, rowvar=False, ddof=0), rtol=1e-5)


def test_single_truncated_normal_matches_direct_mle():
    lo, hi = -0.5, 3.0
    rng = np.random.default_rng(1)
    true = stats.truncnorm((lo - 0.3) / 1.2, (hi - 0.3) / 1.2, loc=0.3, scale=1.2)
    x = true.rvs(4000, random_state=rng)

    def nll(p):
        mu, log_s = p
        s = np.exp(log_s)
        return -stats.truncnorm.logpdf(x, (lo - mu) / s, (hi - mu) / s, loc=mu, scale=s).sum()

    ref = optimize.minimize(nll, [x.mean(), np.log(x.std())], method="Nelder-Mead",
                            options={"xatol": 1e-9, "fatol": 1e-10, "maxiter": 4000}).x
    model, rep = fit_em(x[:, None], 1, ([lo], [hi]), EmConfig(tol=1e-13, max_iter=3000))
    assert rep.converged
    assert model.means[0, 0] == pytest.approx(ref[0], abs=5e-3)
    assert np.sqrt(model.covariances[0, 0, 0]) == pytest.approx(np.exp(ref[1]), rel=5e-3)
    assert log_likelihood(model, x[:, None]) == pytest.approx(-nll(ref), abs=1e-2)


def test_two_component_unbounded_matches_standard_em():
    x = _two_blobs(1500, 3)
    box = ([-1e6, -1e6], [1e6, 1e6])
    init = initialize(x, 2, np.array(box[0]), np.array(box[1]), seed=0)
    model, _ = fit_em(x, 2, box, EmConfig(tol=1e-14, max_iter=3000), init=init)
    w, mu, cov = standard_gmm_em(x, init.weights, init.means, init.covariances)
    np.testing.assert_allclose(model.weights, w, atol=1e-6)
    np.testing.assert_allclose(model.means, mu, atol=1e-6)
    np.testing.assert_allclose(model.covariances, cov, atol=1e-6)


def test_trace_is_monotone_and_reported_in_data_units():
    truth = BoundedGmm([0.5, 0.5], [[0.0, 0.0], [2.5, 1.0]], [np.eye(2), 0.5 * np.eye(2)],
                       [-1.0, -1.5], [3.5, 2.0])
    x = sample(truth, 1500, 4) * np.array([100.0, 0.01])
    box = (truth.lower * [100.0, 0.01], truth.upper * [100.0, 0.01])
    model, rep = fit_em(x, 2, box)
    assert np.all(np.diff(rep.trace) >= -1e-8)
    assert rep.trace[-1] == pytest.approx(log_likelihood(model, x), rel=1e-10)


@settings(max_examples=8)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_trace_never_decreases(seed, K):
    rng = np.random.default_rng(seed)
    means = rng.normal(0, 2, (K, 2))
    truth = BoundedGmm(np.full(K, 1.0 / K), means, np.tile(np.eye(2), (K, 1, 1)),
                       means.min(0) - 1.5, means.max(0) + 1.5)
    x = sample(truth, 400, seed, n_samples=2**10)
    _, rep = fit_em(x, K, (truth.lower, truth.upper), EmConfig(seed=seed, n_qmc=2**10, max_iter=100))
    assert np.all(np.diff(rep.trace) >= -1e-8)


def test_fit_is_deterministic():
    x = _two_blobs(600, 8)
    a, ra = fit_em(x, 2, config=EmConfig(seed=5))
    b, rb = fit_em(x, 2, config=EmConfig(seed=5))
    np.testing.assert_array_equal(a.means, b.means)
    assert ra.trace == rb.trace


def test_fitted_model_keeps_requested_box():
    x = _two_blobs(400, 2)
    lo, hi = data_bounds(x, 0.2)
    model, _ = fit_em(x, 2, (lo, hi))
    np.testing.assert_array_equal(model.lower, lo)
    np.testing.assert_array_equal(model.upper, hi)


def test_data_outside_box_is_reported():
    x = np.array([[0.0], [0.5], [2.0]])
    with pytest.raises(DataOutsideBoxError) as info:
        fit_em(x, 1, ([-1.0], [1.0]))
    assert info.value.row == 2


def test_e_step_rows_are_distributions():
    x = _two_blobs(300, 1)
    model = initialize(x, 2, *data_bounds(x))
    r = e_step(model, x)
    np.testing.assert_allclose(r.sum(axis=1), 1.0)
    assert np.all(r >= 0)


def test_m_step_flags_empty_component():
    x = _two_blobs(200, 1)
    model = initialize(x, 2, *data_bounds(x))
    resp = np.column_stack([np.ones(len(x)), np.zeros(len(x))])
    with pytest.raises(DegenerateComponentError) as info:
        m_step(x, resp, model)
    assert info.value.component == 1


def test_bic_definition():
    x = _two_blobs(500, 6)
    model, _ = fit_em(x, 2)
    expected = -2 * log_likelihood(model, x) + n_parameters(2, 2) * np.log(500)
    assert bic(model, x) == pytest.approx(expected, rel=1e-12)


def test_selection_finds_two_blobs():
    x = _two_blobs(1000, 11)
    best, curve = select_components(x, data_bounds(x), range(1, 5))
    assert best == 2
    assert [p.K for p in curve] == [1, 2, 3, 4]
    assert all(np.isfinite(p.bic) for p in curve)


def test_selection_prefers_one_component_for_gaussian_data():
    x = np.random.default_rng(2).normal(size=(800, 2))
    best, _ = select_components(x, data_bounds(x), range(1, 4))
    assert best == 1


def test_invalid_component_count():
    with pytest.raises(ValueError):
        fit_em(np.zeros((3, 1)) + np.arange(3)[:, None], 5)

"""EM fitting of bounded Gaussian mixtures and BIC-based model selection.

The M-step uses truncated-moment corrections: each component mean is the
responsibility-weighted data mean minus the mean shift its own truncation
induces, and each covariance is the weighted scatter plus the second-moment
deficit of the truncated law. That update is a fixed-point step rather than
an exact maximizer, so every candidate is checked against the observed-data
log-likelihood and shortened (then reduced to a weights-only update) when it
would decrease it.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from ..errors import DegenerateComponentError, VanishingBoxMassError
from .model import BoundedGmm, bgm_logpdf, check_inside, component_logpdf, log_likelihood, mixture_weights_eta
from .truncated import DEFAULT_QMC_SAMPLES, cholesky_lower

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 500
    tol: float = 1e-6
    seed: int = 0
    n_qmc: int = DEFAULT_QMC_SAMPLES
    ridge: float = 1e-6
    max_backtracks: int = 4
    max_reinit: int = 3
    kmeans_iter: int = 20
    kmeans_restarts: int = 5
    standardize: bool = True


@dataclass(frozen=True)
class FitReport:
    loglik: float
    n_iter: int
    trace: tuple[float, ...]
    converged: bool
    n_backtracks: int = 0
    reinitializations: int = 0
    dropped: tuple[int, ...] = ()


def n_parameters(K: int, d: int) -> int:
    """Free parameters of a K-component full-covariance mixture in d dims."""
    return (K - 1) + K * d + K * d * (d + 1) // 2


def data_bounds(data: np.ndarray, margin: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Box enclosing the data with ``margin`` of the per-column range on each side."""
    data = np.atleast_2d(data)
    lo, hi = data.min(axis=0), data.max(axis=0)
    span = np.where(hi > lo, hi - lo, np.maximum(np.abs(hi), 1.0))
    return lo - margin * span, hi + margin * span


def e_step(model: BoundedGmm, data, n_samples: int = DEFAULT_QMC_SAMPLES) -> np.ndarray:
    """Posterior component probabilities, one row per datum.

    Raises:
        DataOutsideBoxError: naming the first row not strictly inside the box.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    check_inside(model, data)
    eta = mixture_weights_eta(model, n_samples)
    probs = model.box_probabilities(n_samples)
    with np.errstate(divide="ignore"):
        logr = component_logpdf(model, data) + np.log(eta) - np.log(probs)
    logr -= logsumexp(logr, axis=1, keepdims=True)
    return np.exp(logr)


def _weights_from_eta(eta: np.ndarray, probs: np.ndarray) -> np.ndarray:
    pi = eta / probs
    return pi / pi.sum()


def _assemble(eta, means, covs, lower, upper, n_samples, stats_from=None) -> BoundedGmm:
    """Build a model whose truncated-component weights equal ``eta``."""
    probe = BoundedGmm(np.full(len(eta), 1.0 / len(eta)), means, covs, lower, upper)
    if stats_from is not None:
        probe._stats.update(stats_from._stats)
    probs = probe.box_probabilities(n_samples)
    if np.any(probs <= 0):
        raise VanishingBoxMassError("a component left the box entirely")
    model = BoundedGmm(_weights_from_eta(eta, probs), means, covs, lower, upper)
    model._stats.update(probe._stats)
    return model


def _regularize(cov: np.ndarray, ridge: float) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    d = cov.shape[0]
    return cov + ridge * max(np.trace(cov), 0.0) / d * np.eye(d)


def _is_spd(cov: np.ndarray) -> bool:
    try:
        cholesky_lower(cov)
    except np.linalg.LinAlgError:
        return False
    return True


def m_step(data, resp, model: BoundedGmm, n_samples: int = DEFAULT_QMC_SAMPLES,
           ridge: float = 1e-6) -> BoundedGmm:
    """One truncated-moment M-step.

    Components whose corrected covariance is not positive definite after
    the ridge, or whose update would leave the box, keep their previous
    mean and covariance.

    Raises:
        DegenerateComponentError: a component's responsibility mass fell
            below ``1e-8 * N``.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    resp = np.asarray(resp, dtype=float)
    N = data.shape[0]
    mass = resp.sum(axis=0)
    for k in np.flatnonzero(mass < 1e-8 * N):
        raise DegenerateComponentError(int(k), float(mass[k]))
    eta = mass / N
    stats = model.component_stats(n_samples)
    means = model.means.copy()
    covs = model.covariances.copy()
    for k in range(model.K):
        st = stats[k]
        if st.mean is None:
            raise VanishingBoxMassError(f"component {k} has no mass inside the box")
        shift = st.mean - model.means[k]
        second = st.cov + np.outer(shift, shift)
        r = resp[:, k]
        mu = r @ data / mass[k] - shift
        dev = data - mu
        scatter = (dev.T * r) @ dev / mass[k]
        cov = _regularize(scatter + model.covariances[k] - second, ridge)
        if _is_spd(cov):
            means[k], covs[k] = mu, cov
    try:
        return _assemble(eta, means, covs, model.lower, model.upper, n_samples)
    except VanishingBoxMassError:
        return _assemble(eta, model.means, model.covariances, model.lower, model.upper, n_samples, model)


def _blend(old: BoundedGmm, new: BoundedGmm, eta, alpha, n_samples) -> BoundedGmm:
    means = old.means + alpha * (new.means - old.means)
    covs = (1.0 - alpha) * old.covariances + alpha * new.covariances
    return _assemble(eta, means, covs, old.lower, old.upper, n_samples)


def _safe_loglik(model, data, n_samples) -> float:
    try:
        return log_likelihood(model, data, n_samples)
    except (ArithmeticError, VanishingBoxMassError):
        return -np.inf


def _kmeans(data, K, rng, n_iter, restarts):
    best = None
    for _ in range(max(restarts, 1)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            centers, labels = kmeans2(data, K, iter=n_iter, minit="++", seed=rng)
        inertia = float(np.sum((data - centers[labels]) ** 2))
        if best is None or inertia < best[0]:
            best = (inertia, centers, labels)
    return best[1], best[2]


def initialize(data, K, lower, upper, seed=0, n_samples=DEFAULT_QMC_SAMPLES, ridge=1e-6,
               kmeans_iter=20, kmeans_restarts=5) -> BoundedGmm:
    """k-means++ seeding refined by Lloyd sweeps (best of several restarts);
    covariances are within-cluster scatter plus a ridge."""
    data = np.atleast_2d(data)
    N, d = data.shape
    rng = np.random.default_rng(seed)
    global_cov = _regularize(np.atleast_2d(np.cov(data, rowvar=False)), 1e-3)
    if K == 1:
        labels = np.zeros(N, dtype=int)
        centers = data.mean(axis=0, keepdims=True)
    else:
        centers, labels = _kmeans(data, K, rng, kmeans_iter, kmeans_restarts)
    means = np.empty((K, d))
    covs = np.empty((K, d, d))
    counts = np.bincount(labels, minlength=K).astype(float)
    for k in range(K):
        pts = data[labels == k]
        if len(pts) > d:
            means[k] = pts.mean(axis=0)
            cov = _regularize(np.atleast_2d(np.cov(pts, rowvar=False)), max(ridge, 1e-4))
            covs[k] = cov if _is_spd(cov) else global_cov
        else:
            means[k] = pts.mean(axis=0) if len(pts) else centers[k]
            covs[k] = global_cov
    means = np.clip(means, lower + 1e-9 * (upper - lower), upper - 1e-9 * (upper - lower))
    eta = np.maximum(counts, 1.0) / np.maximum(counts, 1.0).sum()
    return _assemble(eta, means, covs, lower, upper, n_samples)


class _Standardizer:
    """Per-column affine map to unit scale; EM is equivariant under it."""

    def __init__(self, data, lower, upper, enabled=True):
        d = data.shape[1]
        if enabled:
            self.center = data.mean(axis=0)
            scale = data.std(axis=0)
            width = upper - lower
            fallback = np.where(np.isfinite(width) & (width > 0), width / 4.0, 1.0)
            self.scale = np.where(scale > 0, scale, fallback)
        else:
            self.center = np.zeros(d)
            self.scale = np.ones(d)
        self.log_jacobian = float(np.sum(np.log(self.scale)))

    def data(self, x):
        return (x - self.center) / self.scale

    def bounds(self, lower, upper):
        return (lower - self.center) / self.scale, (upper - self.center) / self.scale

    def model_in(self, m: BoundedGmm, lower, upper) -> BoundedGmm:
        lo, hi = self.bounds(lower, upper)
        s = self.scale
        return BoundedGmm(m.weights, (m.means - self.center) / s, m.covariances / np.outer(s, s), lo, hi)

    def model_out(self, m: BoundedGmm, lower, upper) -> BoundedGmm:
        s = self.scale
        covs = m.covariances * np.outer(s, s)
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
        return BoundedGmm(m.weights, m.means * s + self.center, covs, lower, upper)


def fit_em(data, K: int, bounds=None, config: EmConfig = EmConfig(), init: BoundedGmm | None = None):
    """Fit a K-component bounded Gaussian mixture by EM.

    Args:
        data: (N, d) array strictly inside the box.
        K: number of components.
        bounds: ``(lower, upper)``; defaults to :func:`data_bounds`.
        config: iteration limits, tolerance, seed and QMC sample count.
        init: optional starting model (its bounds are replaced by ``bounds``).

    Returns:
        ``(model, report)``; the log-likelihood trace in ``report`` is in the
        original data coordinates and never decreases.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    N, d = data.shape
    if not np.all(np.isfinite(data)):
        raise ValueError("data contains non-finite values")
    if K < 1 or N < K:
        raise ValueError(f"need 1 <= K <= N (got K={K}, N={N})")
    if bounds is None:
        lower, upper = data_bounds(data)
    else:
        lower = np.asarray(bounds[0], dtype=float).ravel()
        upper = np.asarray(bounds[1], dtype=float).ravel()
    if lower.shape != (d,) or upper.shape != (d,):
        raise ValueError("bounds must be d-vectors")
    probe = BoundedGmm(np.ones(1), np.atleast_2d((lower + upper) / 2), np.eye(d)[None], lower, upper)
    check_inside(probe, data)

    tf = _Standardizer(data, lower, upper, config.standardize)
    x = tf.data(data)
    lo, hi = tf.bounds(lower, upper)
    if init is None:
        model = initialize(x, K, lo, hi, config.seed, config.n_qmc, config.ridge, config.kmeans_iter,
                           config.kmeans_restarts)
    else:
        model = tf.model_in(init, lower, upper)
    nq = config.n_qmc
    offset = N * tf.log_jacobian

    ll = log_likelihood(model, x, nq)
    trace = [ll - offset]
    converged = False
    backtracks = 0
    reinit_count: dict[int, int] = {}
    reinits = 0
    dropped: list[int] = []
    alive = list(range(K))
    it = 0
    while it < config.max_iter:
        it += 1
        resp = e_step(model, x, nq)
        try:
            cand = m_step(x, resp, model, nq, config.ridge)
        except DegenerateComponentError as exc:
            model = _reinitialize(model, x, exc.component, reinit_count, alive, dropped, config, tf)
            reinits += 1
            ll = log_likelihood(model, x, nq)
            trace.append(ll - offset)
            continue
        eta = resp.sum(axis=0) / N
        ll_new = _safe_loglik(cand, x, nq)
        alpha = 1.0
        while ll_new < ll and alpha > 0.5**config.max_backtracks:
            alpha *= 0.5
            backtracks += 1
            try:
                trial = _blend(model, cand, eta, alpha, nq)
            except VanishingBoxMassError:
                continue
            trial_ll = _safe_loglik(trial, x, nq)
            if trial_ll >= ll:
                cand, ll_new = trial, trial_ll
        if ll_new < ll:
            # weights-only step: a genuine EM step on eta with the components frozen
            cand = _assemble(eta, model.means, model.covariances, model.lower, model.upper, nq, model)
            ll_new = _safe_loglik(cand, x, nq)
            if ll_new < ll:
                converged = True
                break
        gain = ll_new - ll
        model, ll = cand, ll_new
        trace.append(ll - offset)
        if gain <= config.tol * abs(ll):
            converged = True
            break

    out = tf.model_out(model, lower, upper)
    report = FitReport(
        loglik=trace[-1],
        n_iter=it,
        trace=tuple(trace),
        converged=converged,
        n_backtracks=backtracks,
        reinitializations=reinits,
        dropped=tuple(dropped),
    )
    log.debug("fit_em K=%d: %d iterations, loglik %.6f, converged=%s", K, it, report.loglik, converged)
    return out.with_meta(seed=config.seed, loglik=report.loglik), report


def _reinitialize(model, x, k, counts, alive, dropped, config, tf) -> BoundedGmm:
    counts[alive[k]] = counts.get(alive[k], 0) + 1
    nq = config.n_qmc
    eta = mixture_weights_eta(model, nq).copy()
    if counts[alive[k]] > config.max_reinit or model.K == 1:
        if model.K == 1:
            raise DegenerateComponentError(k, 0.0)
        dropped.append(alive.pop(k))
        keep = [j for j in range(model.K) if j != k]
        e = eta[keep] / eta[keep].sum()
        return _assemble(e, model.means[keep], model.covariances[keep], model.lower, model.upper, nq)
    logp = bgm_logpdf(model, x, "direct", nq)
    worst = int(np.argmin(logp))
    means = model.means.copy()
    covs = model.covariances.copy()
    means[k] = x[worst]
    covs[k] = _regularize(np.atleast_2d(np.cov(x, rowvar=False)), 1e-3)
    eta[k] = 1.0 / model.K
    eta /= eta.sum()
    log.info("reinitialized degenerate component %d at data row %d", k, worst)
    return _assemble(eta, means, covs, model.lower, model.upper, nq)


def bic(model: BoundedGmm, data, n_samples: int = DEFAULT_QMC_SAMPLES) -> float:
    """Bayesian information criterion, -2 log L + p log N."""
    data = np.atleast_2d(data)
    return -2.0 * log_likelihood(model, data, n_samples) + n_parameters(model.K, model.d) * np.log(data.shape[0])


@dataclass
class BicPoint:
    K: int
    bic: float
    loglik: float
    n_params: int
    converged: bool
    n_iter: int = 0
    error: str | None = None
    model: BoundedGmm | None = field(default=None, repr=False)


def select_components(data, bounds=None, k_range=range(1, 11), config: EmConfig = EmConfig()):
    """Fit every K in ``k_range`` and return the BIC-minimizing one.

    Returns:
        ``(best_K, curve)`` where ``curve`` holds one :class:`BicPoint` per
        K (failed fits carry ``error`` and an infinite BIC). Ties go to the
        smaller K.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("k_range is empty")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    curve = []
    for K in ks:
        try:
            model, rep = fit_em(data, K, bounds, config)
            curve.append(BicPoint(K, bic(model, data, config.n_qmc), rep.loglik,
                                  n_parameters(K, data.shape[1]), rep.converged, rep.n_iter, model=model))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("fit failed for K=%d: %s", K, exc)
            curve.append(BicPoint(K, np.inf, -np.inf, n_parameters(K, data.shape[1]), False, error=str(exc)))
    finite = [p for p in curve if np.isfinite(p.bic)]
    if not finite:
        raise ArithmeticError("every candidate K failed to fit")
    best = min(finite, key=lambda p: (p.bic, p.K))
    return best.K, curve


__all__ = [
    "EmConfig", "FitReport", "BicPoint", "bic", "data_bounds", "e_step", "fit_em",
    "initialize", "m_step", "n_parameters", "select_components",
]

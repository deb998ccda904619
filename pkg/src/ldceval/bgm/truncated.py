"""Gaussian densities and box-truncated Gaussian integrals.

Box probabilities and truncated moments are estimated with a deterministic
quasi-Monte-Carlo rule: a fixed scrambled Sobol point set is pushed through
the sequential conditional (Genz / GHK) transform, which produces samples
that always land in the box together with importance weights. The
estimators are smooth in the Gaussian parameters, which keeps the EM
log-likelihood free of indicator-induced jitter.
"""
from __future__ import annotations

import functools
import warnings

import numpy as np
from scipy import linalg
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from ..errors import VanishingBoxMassError

DEFAULT_QMC_SAMPLES = 2**14
QMC_SEED = 20170611
_LOG_2PI = np.log(2.0 * np.pi)
_U_EPS = 1e-15
# ndtr underflows to exactly 0 below this many standard deviations
_NO_MASS_Z = 38.5


@functools.lru_cache(maxsize=32)
def sobol_points(d: int, n: int) -> np.ndarray:
    """Fixed scrambled Sobol points in (0, 1)^d, shared by every integral.

    The array is cached and returned read-only.
    """
    engine = qmc.Sobol(d, scramble=True, seed=QMC_SEED)
    m = int(np.log2(n))
    if 2**m == n:
        u = engine.random_base2(m)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            u = engine.random(n)
    u = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    u.setflags(write=False)
    return u


def cholesky_lower(sigma: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises ``numpy.linalg.LinAlgError`` if not SPD."""
    sigma = np.asarray(sigma, dtype=float)
    if not np.all(np.isfinite(sigma)):
        raise np.linalg.LinAlgError("covariance has non-finite entries")
    return linalg.cholesky(sigma, lower=True)


def gaussian_logpdf(x: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Log-density of N(mu, sigma) evaluated at each row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mu = np.asarray(mu, dtype=float)
    chol = cholesky_lower(sigma)
    white = linalg.solve_triangular(chol, (x - mu).T, lower=True)
    maha = np.sum(white**2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (mu.size * _LOG_2PI + logdet + maha)


def gaussian_pdf(x, mu, sigma):
    """Multivariate normal density.

    A single point (1-D ``x``) returns a float; a 2-D array of points returns
    one density per row.
    """
    x = np.asarray(x, dtype=float)
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if x.ndim == 0 or (x.ndim == 1 and mu.size == x.size):
        return float(np.exp(gaussian_logpdf(x.reshape(1, -1), mu, sigma)[0]))
    return np.exp(gaussian_logpdf(x.reshape(-1, mu.size), mu, sigma))


def _check_box(lower: np.ndarray, upper: np.ndarray) -> None:
    if lower.shape != upper.shape:
        raise ValueError("bounds have different shapes")
    if not np.all(lower < upper):
        bad = np.flatnonzero(~(lower < upper))
        raise ValueError(f"degenerate box: lower >= upper in coordinate(s) {bad.tolist()}")


def ghk_samples(mu, chol, lower, upper, u):
    """Map uniform points to in-box Gaussian samples with GHK weights.

    Returns ``(y, w)`` where each row of ``y`` lies in ``[lower, upper]`` and
    ``mean(w)`` estimates the box probability. Coordinates are drawn from
    their one-dimensional conditional truncated normals in order.
    """
    n, d = u.shape
    z = np.zeros((n, d))
    w = np.ones(n)
    for i in range(d):
        shift = mu[i] + z[:, :i] @ chol[i, :i]
        a = (lower[i] - shift) / chol[i, i]
        b = (upper[i] - shift) / chol[i, i]
        # evaluate in the lower tail so ndtr keeps relative precision
        flip = a > 0.0
        lo = np.where(flip, -b, a)
        hi = np.where(flip, -a, b)
        p_lo = ndtr(lo)
        mass = ndtr(hi) - p_lo
        ui = np.where(flip, 1.0 - u[:, i], u[:, i])
        with np.errstate(divide="ignore", invalid="ignore"):
            zi = ndtri(p_lo + ui * mass)
        zi = np.clip(np.nan_to_num(zi, nan=0.0), lo, hi)
        z[:, i] = np.where(flip, -zi, zi)
        w *= mass
    y = mu + z @ chol.T
    return y, w


def _box_is_unbounded(mu, sigma, lower, upper) -> bool:
    """True when every face is so far out that no mass lies beyond it in double precision."""
    sd = np.sqrt(np.diag(sigma))
    return bool(np.all((mu - lower) / sd > _NO_MASS_Z) and np.all((upper - mu) / sd > _NO_MASS_Z))


def box_stats(mu, sigma, lower, upper, n_samples: int = DEFAULT_QMC_SAMPLES):
    """Box probability plus first and second truncated moments in one pass.

    Returns:
        ``(prob, m1, m2)`` with ``m2`` the covariance of the truncated law.
        ``m1``/``m2`` are ``None`` when the box carries no mass.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    _check_box(lower, upper)
    chol = cholesky_lower(sigma)
    if _box_is_unbounded(mu, sigma, lower, upper):
        return 1.0, mu.copy(), sigma.copy()
    y, w = ghk_samples(mu, chol, lower, upper, sobol_points(mu.size, n_samples))
    total = w.sum()
    prob = float(min(total / w.size, 1.0))
    if not total > 0.0:
        return 0.0, None, None
    m1 = (w @ y) / total
    dev = y - m1
    m2 = (dev.T * w) @ dev / total
    m2 = 0.5 * (m2 + m2.T)
    return prob, m1, m2


def box_probability(mu, sigma, lower, upper, n_samples: int = DEFAULT_QMC_SAMPLES) -> float:
    """P(lower < X < upper) for X ~ N(mu, sigma), by deterministic QMC."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    _check_box(lower, upper)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    chol = cholesky_lower(sigma)
    if _box_is_unbounded(mu, sigma, lower, upper):
        return 1.0
    _, w = ghk_samples(mu, chol, lower, upper, sobol_points(mu.size, n_samples))
    return float(min(w.mean(), 1.0))


def truncated_moments(mu, sigma, lower, upper, n_samples: int = DEFAULT_QMC_SAMPLES,
                      min_mass: float = 1e-12):
    """Mean and covariance of N(mu, sigma) conditioned on the box.

    Raises:
        VanishingBoxMassError: if the box probability is at most ``min_mass``.
    """
    prob, m1, m2 = box_stats(mu, sigma, lower, upper, n_samples)
    if prob <= min_mass:
        raise VanishingBoxMassError(
            f"box probability {prob:.3g} too small for truncated moments; widen the bounds"
        )
    return m1, m2

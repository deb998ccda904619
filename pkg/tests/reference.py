"""Independent reference implementations used as test oracles."""
import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal


def standard_gmm_em(data, weights, means, covs, max_iter=5000, tol=1e-13):
    """Textbook EM for an unbounded full-covariance Gaussian mixture."""
    w, mu, cov = np.array(weights, float), np.array(means, float), np.array(covs, float)
    N, K = data.shape[0], len(w)
    prev = -np.inf
    for _ in range(max_iter):
        logp = np.column_stack([multivariate_normal(mu[k], cov[k]).logpdf(data) for k in range(K)]) + np.log(w)
        ll = logsumexp(logp, axis=1)
        r = np.exp(logp - ll[:, None])
        nk = r.sum(axis=0)
        w = nk / N
        mu = (r.T @ data) / nk[:, None]
        for k in range(K):
            dev = data - mu[k]
            cov[k] = (dev.T * r[:, k]) @ dev / nk[k]
        total = ll.sum()
        if abs(total - prev) < tol * abs(total):
            break
        prev = total
    return w, mu, cov

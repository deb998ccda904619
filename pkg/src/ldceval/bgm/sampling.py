"""Draws from a bounded Gaussian mixture by per-component rejection."""
from __future__ import annotations

import numpy as np

from ..errors import SamplingError
from .model import BoundedGmm, mixture_weights_eta
from .truncated import DEFAULT_QMC_SAMPLES, cholesky_lower

MIN_ACCEPTANCE = 1e-6


def sample(model: BoundedGmm, n: int, seed=None, return_labels: bool = False,
           n_samples: int = DEFAULT_QMC_SAMPLES):
    """Draw ``n`` points strictly inside the model box.

    Each draw picks a component with probability eta_k and then proposes from
    the untruncated Gaussian until a proposal lands in the box.

    Raises:
        SamplingError: a selected component accepts fewer than 1e-6 of its
            proposals, i.e. the model is inconsistent with its box.
    """
    rng = np.random.default_rng(seed)
    n = int(n)
    out = np.empty((n, model.d))
    if n == 0:
        return (out, np.empty(0, dtype=int)) if return_labels else out
    eta = mixture_weights_eta(model, n_samples)
    probs = model.box_probabilities(n_samples)
    labels = rng.choice(model.K, size=n, p=eta)
    for k in range(model.K):
        rows = np.flatnonzero(labels == k)
        if rows.size == 0:
            continue
        if probs[k] < MIN_ACCEPTANCE:
            raise SamplingError(f"component {k} has acceptance probability {probs[k]:.3g} inside the box")
        chol = cholesky_lower(model.covariances[k])
        got = []
        need = rows.size
        while need > 0:
            batch = int(np.ceil(1.2 * need / probs[k])) + 16
            prop = model.means[k] + rng.standard_normal((batch, model.d)) @ chol.T
            keep = prop[model.inside(prop)][:need]
            got.append(keep)
            need -= len(keep)
        out[rows] = np.concatenate(got)
    return (out, labels) if return_labels else out

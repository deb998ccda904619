"""Bounded Gaussian mixture: container, density evaluation and JSON I/O."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import logsumexp

from ..errors import DataOutsideBoxError, VanishingBoxMassError
from .truncated import DEFAULT_QMC_SAMPLES, box_stats, gaussian_logpdf

SCHEMA = "ldceval.bgm/1"


@dataclass(frozen=True)
class ComponentStats:
    """Box probability and truncated moments of one mixture component."""

    prob: float
    mean: np.ndarray | None
    cov: np.ndarray | None


@dataclass(frozen=True, eq=False)
class BoundedGmm:
    """Gaussian mixture renormalized over the box ``lower < x < upper``.

    ``weights`` are the mixing weights of the untruncated mixture; the
    weights of the equivalent mixture of truncated components are given by
    :func:`mixture_weights_eta`.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    meta: dict = field(default_factory=dict)
    _stats: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 2:
            cov = cov[None]
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        K, d = mu.shape
        if w.shape != (K,) or cov.shape != (K, d, d) or lo.shape != (d,) or hi.shape != (d,):
            raise ValueError("inconsistent BoundedGmm shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixing weights must be non-negative and sum to 1 (sum={w.sum()!r})")
        if not np.all(lo < hi):
            raise ValueError("box bounds must satisfy lower < upper")
        if not np.allclose(cov, np.swapaxes(cov, 1, 2), rtol=1e-10, atol=1e-14):
            raise ValueError("covariances must be symmetric")
        for k in range(K):
            if np.linalg.eigvalsh(cov[k]).min() <= 0:
                raise ValueError(f"covariance {k} is not positive definite")
        for name, arr in (("weights", w), ("means", mu), ("covariances", cov), ("lower", lo), ("upper", hi)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def component_stats(self, n_samples: int = DEFAULT_QMC_SAMPLES) -> list[ComponentStats]:
        """Per-component box probability and truncated moments (cached)."""
        if n_samples not in self._stats:
            self._stats[n_samples] = [
                ComponentStats(*box_stats(self.means[k], self.covariances[k], self.lower, self.upper, n_samples))
                for k in range(self.K)
            ]
        return self._stats[n_samples]

    def box_probabilities(self, n_samples: int = DEFAULT_QMC_SAMPLES) -> np.ndarray:
        return np.array([s.prob for s in self.component_stats(n_samples)])

    def normalizer(self, n_samples: int = DEFAULT_QMC_SAMPLES) -> float:
        """Box integral of the untruncated mixture."""
        z = float(self.weights @ self.box_probabilities(n_samples))
        if not z > 0.0:
            raise VanishingBoxMassError("mixture places no mass inside the box")
        return z

    def inside(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x > self.lower) & (x < self.upper), axis=1)

    def with_meta(self, **meta) -> "BoundedGmm":
        return BoundedGmm(self.weights, self.means, self.covariances, self.lower, self.upper,
                          {**self.meta, **meta})

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA,
            "d": self.d,
            "K": self.K,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "lower_bounds": self.lower.tolist(),
            "upper_bounds": self.upper.tolist(),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "BoundedGmm":
        schema = doc.get("schema", SCHEMA)
        if schema != SCHEMA:
            raise ValueError(f"unsupported model schema {schema!r}")
        model = cls(
            np.array(doc["weights"], dtype=float),
            np.array(doc["means"], dtype=float),
            np.array(doc["covariances"], dtype=float),
            np.array(doc["lower_bounds"], dtype=float),
            np.array(doc["upper_bounds"], dtype=float),
            dict(doc.get("meta", {})),
        )
        if model.K != doc["K"] or model.d != doc["d"]:
            raise ValueError("model file K/d fields disagree with array shapes")
        return model


def save_model(model: BoundedGmm, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n")


def load_model(path) -> BoundedGmm:
    return BoundedGmm.from_dict(json.loads(Path(path).read_text()))


def mixture_weights_eta(model: BoundedGmm, n_samples: int = DEFAULT_QMC_SAMPLES) -> np.ndarray:
    """Weights of the truncated components: pi_k * P_k / sum_j pi_j * P_j."""
    mass = model.weights * model.box_probabilities(n_samples)
    return mass / mass.sum()


def component_logpdf(model: BoundedGmm, x: np.ndarray) -> np.ndarray:
    """``log g_k(x)`` for every row of ``x`` and every component (N x K)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.column_stack([gaussian_logpdf(x, model.means[k], model.covariances[k]) for k in range(model.K)])


def bgm_logpdf(model: BoundedGmm, x, form: str = "direct", n_samples: int = DEFAULT_QMC_SAMPLES) -> np.ndarray:
    """Log-density of the bounded mixture; ``-inf`` outside the box.

    ``form="direct"`` divides the untruncated mixture by its box integral;
    ``form="mixture"`` sums the truncated components weighted by eta.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.full(x.shape[0], -np.inf)
    ok = model.inside(x)
    if not ok.any():
        return out
    logg = component_logpdf(model, x[ok])
    if form == "direct":
        with np.errstate(divide="ignore"):
            out[ok] = logsumexp(logg + np.log(model.weights), axis=1) - np.log(model.normalizer(n_samples))
    elif form == "mixture":
        eta = mixture_weights_eta(model, n_samples)
        probs = model.box_probabilities(n_samples)
        with np.errstate(divide="ignore"):
            out[ok] = logsumexp(logg + np.log(eta) - np.log(probs), axis=1)
    else:
        raise ValueError(f"unknown density form {form!r}")
    return out


def bgm_pdf(model: BoundedGmm, x, form: str = "direct", n_samples: int = DEFAULT_QMC_SAMPLES):
    """Density of the bounded mixture (0 outside the box).

    A single point returns a float, an array of points one value per row.
    """
    x = np.asarray(x, dtype=float)
    dens = np.exp(bgm_logpdf(model, x, form, n_samples))
    return float(dens[0]) if x.ndim == 1 else dens


def check_inside(model: BoundedGmm, data: np.ndarray) -> None:
    bad = np.flatnonzero(~model.inside(data))
    if bad.size:
        raise DataOutsideBoxError(int(bad[0]))


def log_likelihood(model: BoundedGmm, data, n_samples: int = DEFAULT_QMC_SAMPLES) -> float:
    """Sum of log bounded-mixture densities over the rows of ``data``."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    check_inside(model, data)
    logp = bgm_logpdf(model, data, "direct", n_samples)
    if not np.all(np.isfinite(logp)):
        row = int(np.flatnonzero(~np.isfinite(logp))[0])
        raise ArithmeticError(f"zero model density at data row {row}")
    return math.fsum(logp)

"""Regenerate departure-event time series from feature vectors."""
from __future__ import annotations

import numpy as np

from .bgm import BoundedGmm, sample
from .errors import MalformedEventError
from .features import DepartureEvent, FeatureVector, Side, lateral_basis, travel_distance

MIN_SPEED = 0.1
FEATURE_STREAM = 0
EVENT_STREAM = 1


def derive_rng(seed, *keys) -> np.random.Generator:
    """Generator for a named sub-stream of a master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def reconstruct_event(xi: FeatureVector, T_s: float, seed=None, *, side=None, event_id: str = "",
                      noise: bool = True, rng: np.random.Generator | None = None) -> DepartureEvent:
    """Build a time series whose fitted features are ``xi``.

    The grid has ``round(T / T_s) + 1`` samples spread evenly over exactly
    ``[0, T]``, so the duration is reproduced exactly. Speed and lateral
    offset receive i.i.d. Gaussian residuals with the feature's standard
    deviations when ``noise`` is set; curvature is always noiseless. Speeds
    are clamped to stay above 0.1 m/s and the number of clamped samples is
    stored in ``event.meta["n_clamped"]``.
    """
    if not T_s > 0:
        raise ValueError("sample time must be positive")
    if xi.T < T_s:
        raise MalformedEventError(f"duration {xi.T} s shorter than the sample time {T_s} s")
    rng = rng if rng is not None else np.random.default_rng(seed)
    L = int(round(xi.T / T_s)) + 1
    t = np.linspace(0.0, xi.T, L)
    v = xi.a_bar * (t - xi.T / 2.0) + xi.v_bar
    if noise and xi.sigma_v > 0:
        v = v + rng.normal(0.0, xi.sigma_v, L)
    clamped = int(np.count_nonzero(v <= MIN_SPEED))
    v = np.maximum(v, MIN_SPEED)
    x = travel_distance(t, v)
    y = xi.d_y * lateral_basis(x, x[-1])
    if noise and xi.sigma_y > 0:
        y = y + rng.normal(0.0, xi.sigma_y, L)
    c = xi.delta_c / xi.T * t + xi.c0
    if side is None:
        side = Side.LEFT if xi.d_y < 0 else Side.RIGHT
    return DepartureEvent(t, y, v, c, side, event_id, {"n_clamped": clamped, "xi": xi})


def generate_corpus(model: BoundedGmm, n_events: int, T_s: float, seed: int, *, side=None,
                    noise: bool = True, prefix: str = "") -> list[DepartureEvent]:
    """Sample feature vectors from ``model`` and reconstruct one event each.

    Event ``i`` draws its residuals from its own stream derived from
    ``(seed, i)``, so the corpus does not depend on processing order.
    """
    if model.d != 8:
        raise ValueError(f"corpus generation needs an 8-feature model, got d={model.d}")
    if n_events == 0:
        return []
    xis = sample(model, n_events, derive_rng(seed, FEATURE_STREAM))
    tag = prefix or (Side.parse(side).value if side is not None else "E")
    events = []
    for i, row in enumerate(xis):
        events.append(reconstruct_event(
            FeatureVector.from_array(row), T_s, side=side, event_id=f"{tag}-{seed}-{i:05d}",
            noise=noise, rng=derive_rng(seed, EVENT_STREAM, i),
        ))
    return events

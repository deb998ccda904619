"""Reduction of a lane-departure time series to an 8-parameter feature vector.

Lateral offset is fit with a one-parameter parabola in travelled distance,
speed with a line in time anchored at the mean speed, and curvature with an
ordinary straight-line regression. Residual spreads of the first two fits
carry the driver's variability.
"""
from __future__ import annotations

from dataclasses import astuple, dataclass, field, fields
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import DegenerateGeometryError, MalformedEventError

MIN_DURATION = 0.5
MAX_DURATION = 10.0
MIN_MEAN_SPEED = 5.0
SPACING_TOL = 1e-9


class Side(str, Enum):
    LEFT = "L"
    RIGHT = "R"

    @classmethod
    def parse(cls, value) -> "Side":
        if isinstance(value, Side):
            return value
        text = str(value).strip().upper()
        if text in ("L", "LEFT"):
            return cls.LEFT
        if text in ("R", "RIGHT"):
            return cls.RIGHT
        raise ValueError(f"side must be L or R, got {value!r}")


class TrajectorySample(NamedTuple):
    t: float
    y: float
    v: float
    c: float


@dataclass(frozen=True, eq=False)
class DepartureEvent:
    """Sampled time series of one departure episode.

    ``y`` is signed: positive toward the right boundary, negative toward the
    left one. Uniform spacing is checked lazily (see :attr:`spacing`) so a
    malformed record can still be constructed and reported.
    """

    t: np.ndarray
    y: np.ndarray
    v: np.ndarray
    c: np.ndarray
    side: Side = Side.RIGHT
    event_id: str = ""
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        arrays = {}
        for name in ("t", "y", "v", "c"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            arrays[name] = arr
        n = arrays["t"].size
        if n < 2:
            raise MalformedEventError(f"event {self.event_id!r}: need at least 2 samples")
        for name, arr in arrays.items():
            if arr.size != n:
                raise MalformedEventError(f"event {self.event_id!r}: channel {name} has {arr.size} samples, t has {n}")
            if not np.all(np.isfinite(arr)):
                raise MalformedEventError(f"event {self.event_id!r}: channel {name} has non-finite values")
            object.__setattr__(self, name, arr)
        if arrays["t"][0] < 0 or np.any(np.diff(arrays["t"]) <= 0):
            raise MalformedEventError(f"event {self.event_id!r}: time must be non-negative and strictly increasing")
        object.__setattr__(self, "side", Side.parse(self.side))

    @classmethod
    def from_samples(cls, samples, side=Side.RIGHT, event_id="") -> "DepartureEvent":
        t, y, v, c = (np.array(col, dtype=float) for col in zip(*samples))
        return cls(t, y, v, c, side, event_id)

    @property
    def samples(self) -> list[TrajectorySample]:
        return [TrajectorySample(*row) for row in zip(self.t, self.y, self.v, self.c)]

    def __len__(self) -> int:
        return self.t.size

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def spacing(self) -> float:
        """Sample spacing; raises if the grid is not uniform within 1e-9 s."""
        dt = np.diff(self.t)
        if np.ptp(dt) > SPACING_TOL:
            raise MalformedEventError(f"event {self.event_id!r}: non-uniform sample spacing (spread {np.ptp(dt):.3g} s)")
        return float(dt.mean())

    def mirrored(self) -> "DepartureEvent":
        """Reflect across the lane center: y and curvature change sign."""
        side = Side.RIGHT if self.side is Side.LEFT else Side.LEFT
        return DepartureEvent(self.t, -self.y, self.v, -self.c, side, self.event_id, dict(self.meta))


def resample_uniform(event: DepartureEvent, dt: float | None = None) -> DepartureEvent:
    """Linear interpolation onto a uniform grid spanning the same interval.

    Without ``dt`` the grid keeps the original sample count.
    """
    T = event.duration
    n = len(event) if dt is None else max(int(round(T / dt)) + 1, 2)
    t = np.linspace(event.t[0], event.t[-1], n)
    return DepartureEvent(t, *(np.interp(t, event.t, ch) for ch in (event.y, event.v, event.c)),
                          event.side, event.event_id, dict(event.meta))


@dataclass(frozen=True)
class FeatureVector:
    T: float
    d_y: float
    sigma_y: float
    v_bar: float
    a_bar: float
    sigma_v: float
    c0: float
    delta_c: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("duration T must be positive")
        if self.sigma_y < 0 or self.sigma_v < 0:
            raise ValueError("residual standard deviations must be non-negative")
        if not self.v_bar > 0:
            raise ValueError("mean speed must be positive")

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        return cls(*(float(v) for v in values))


FEATURE_NAMES = tuple(f.name for f in fields(FeatureVector))


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.accepted


ACCEPT = FilterDecision(True)


def filter_event(event: DepartureEvent) -> FilterDecision:
    """Consistency screen: duration within [0.5, 10] s and mean speed above 5 m/s.

    Raises:
        MalformedEventError: non-uniform spacing (a structural problem, not a rejection).
    """
    event.spacing
    T = event.duration
    if not MIN_DURATION <= T <= MAX_DURATION:
        return FilterDecision(False, "duration")
    if not float(np.mean(event.v)) > MIN_MEAN_SPEED:
        return FilterDecision(False, "speed")
    return ACCEPT


def travel_distance(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Longitudinal distance from the first sample by trapezoidal integration."""
    return cumulative_trapezoid(v, t, initial=0.0)


def lateral_basis(x: np.ndarray, d_x: float) -> np.ndarray:
    """Unit-peak parabola vanishing at x = 0 and x = d_x."""
    return 4.0 * x * (d_x - x) / d_x**2


def fit_lateral(event: DepartureEvent) -> tuple[float, float, float]:
    """Least-squares peak departure with the travel distance held fixed.

    Returns:
        ``(d_y, sigma_y, d_x)``.
    """
    x = travel_distance(event.t, event.v)
    d_x = float(x[-1])
    if not d_x > 0:
        raise DegenerateGeometryError(f"event {event.event_id!r}: travel distance {d_x} is not positive")
    phi = lateral_basis(x, d_x)
    norm = float(phi @ phi)
    if not norm > 0:
        raise DegenerateGeometryError(f"event {event.event_id!r}: lateral basis vanishes")
    d_y = float(event.y @ phi) / norm
    resid = event.y - d_y * phi
    return d_y, float(np.std(resid, ddof=1)), d_x


def fit_velocity(event: DepartureEvent, d_x: float) -> tuple[float, float, float]:
    """Mean speed from travel distance; acceleration by regression about T/2.

    Returns:
        ``(v_bar, a_bar, sigma_v)``.
    """
    T = event.duration
    tau = event.t - event.t[0] - T / 2.0
    v_bar = d_x / T
    a_bar = float((event.v - v_bar) @ tau / (tau @ tau))
    resid = event.v - a_bar * tau - v_bar
    return v_bar, a_bar, float(np.std(resid, ddof=1))


def fit_curvature(event: DepartureEvent) -> tuple[float, float]:
    """Straight-line regression of curvature on time since event start.

    Returns:
        ``(c0, delta_c)`` where ``delta_c`` is the fitted change over the event.
    """
    tau = event.t - event.t[0]
    tc = tau - tau.mean()
    slope = float((event.c - event.c.mean()) @ tc / (tc @ tc))
    c0 = float(event.c.mean() - slope * tau.mean())
    return c0, slope * event.duration


def extract_features(event: DepartureEvent) -> FeatureVector:
    T = event.duration
    d_y, sigma_y, d_x = fit_lateral(event)
    v_bar, a_bar, sigma_v = fit_velocity(event, d_x)
    c0, delta_c = fit_curvature(event)
    return FeatureVector(T, d_y, sigma_y, v_bar, a_bar, sigma_v, c0, delta_c)


# Physical limits of the default model box, per feature; None means data-driven.
PHYSICAL_BOUNDS = {
    "T": (MIN_DURATION, MAX_DURATION),
    "sigma_y": (0.0, None),
    "v_bar": (MIN_MEAN_SPEED, 60.0),
    "sigma_v": (0.0, None),
}


def feature_bounds(features: np.ndarray, margin: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Default box for a feature matrix (columns in :data:`FEATURE_NAMES` order).

    Physical limits where they exist, otherwise the data range widened by
    ``margin`` of its span on each side.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    lo, hi = features.min(axis=0), features.max(axis=0)
    span = np.where(hi > lo, hi - lo, np.maximum(np.abs(hi), 1e-6))
    lower, upper = lo - margin * span, hi + margin * span
    for j, name in enumerate(FEATURE_NAMES):
        phys_lo, phys_hi = PHYSICAL_BOUNDS.get(name, (None, None))
        if phys_lo is not None:
            lower[j] = phys_lo
        if phys_hi is not None:
            upper[j] = phys_hi
    return lower, upper

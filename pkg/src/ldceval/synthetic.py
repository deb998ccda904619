"""Hand-specified ground-truth departure models used in place of field data.

Each side is a 3-component bounded mixture over the 8 features
(T, d_y, sigma_y, v_bar, a_bar, sigma_v, c0, delta_c): short urban
swerves, medium suburban drifts and long highway drifts. Left departures
carry negative ``d_y``.
"""
from __future__ import annotations

import numpy as np

from .bgm import BoundedGmm
from .features import Side

# component means, feature order as FEATURE_NAMES
_MEANS = np.array([
    [2.5, 0.45, 0.030, 13.0, -0.10, 0.10, -1.0e-3, 4.0e-4],
    [4.5, 0.65, 0.040, 20.0, 0.00, 0.12, 4.0e-4, -2.0e-4],
    [6.5, 0.85, 0.050, 28.0, 0.05, 0.15, 2.0e-4, -1.0e-4],
])
_STDS = np.array([
    [0.6, 0.10, 0.010, 2.5, 0.15, 0.03, 1.2e-3, 6.0e-4],
    [0.9, 0.12, 0.012, 3.0, 0.12, 0.04, 6.0e-4, 3.0e-4],
    [1.2, 0.15, 0.015, 3.0, 0.10, 0.04, 3.0e-4, 2.0e-4],
])
_WEIGHTS = {Side.RIGHT: np.array([0.30, 0.40, 0.30]), Side.LEFT: np.array([0.25, 0.35, 0.40])}
# correlation: longer departures go further out; faster drivers drift with less speed noise
_CORR = np.eye(8)
_CORR[0, 1] = _CORR[1, 0] = 0.5
_CORR[1, 2] = _CORR[2, 1] = 0.3
_CORR[3, 5] = _CORR[5, 3] = -0.3
_CORR[6, 7] = _CORR[7, 6] = -0.4

LOWER = np.array([0.6, 0.25, 0.005, 6.0, -1.0, 0.01, -0.006, -0.003])
UPPER = np.array([9.5, 1.60, 0.120, 40.0, 1.0, 0.40, 0.006, 0.003])


def ground_truth_model(side) -> BoundedGmm:
    side = Side.parse(side)
    covs = np.array([np.outer(s, s) * _CORR for s in _STDS])
    means = _MEANS.copy()
    lower, upper = LOWER.copy(), UPPER.copy()
    if side is Side.LEFT:
        flip = np.ones(8)
        flip[1] = -1.0
        means *= flip
        covs = covs * np.outer(flip, flip)
        lower[1], upper[1] = -UPPER[1], -LOWER[1]
    return BoundedGmm(_WEIGHTS[side], means, covs, lower, upper, {"source": "synthetic ground truth", "side": side.value})


def ground_truth_models() -> dict[Side, BoundedGmm]:
    return {side: ground_truth_model(side) for side in (Side.LEFT, Side.RIGHT)}

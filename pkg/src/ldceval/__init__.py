"""Stochastic lane-departure modeling and lane-departure-correction evaluation."""

__version__ = "0.1.0"

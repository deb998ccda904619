"""Bounded (box-truncated) Gaussian mixture models."""
from .em import (
    BicPoint,
    EmConfig,
    FitReport,
    bic,
    data_bounds,
    e_step,
    fit_em,
    initialize,
    m_step,
    n_parameters,
    select_components,
)
from .model import (
    BoundedGmm,
    bgm_logpdf,
    bgm_pdf,
    load_model,
    log_likelihood,
    mixture_weights_eta,
    save_model,
)
from .sampling import sample
from .truncated import (
    DEFAULT_QMC_SAMPLES,
    box_probability,
    box_stats,
    gaussian_logpdf,
    gaussian_pdf,
    truncated_moments,
)

__all__ = [
    "BicPoint", "BoundedGmm", "DEFAULT_QMC_SAMPLES", "EmConfig", "FitReport",
    "bgm_logpdf", "bgm_pdf", "bic", "box_probability", "box_stats", "data_bounds",
    "e_step", "fit_em", "gaussian_logpdf", "gaussian_pdf", "initialize", "load_model",
    "log_likelihood", "m_step", "mixture_weights_eta", "n_parameters", "sample",
    "save_model", "select_components", "truncated_moments",
]

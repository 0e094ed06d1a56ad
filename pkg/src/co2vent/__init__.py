"""Bayesian ventilation-rate estimation from indoor CO2 measurements."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    AchRate,
    Co2Series,
    ModelParams,
    RoomGeometry,
    ach_to_lps,
    closed_form_ode,
    drift,
    em_step,
    lps_to_ach,
    simulate_ode,
    simulate_sde,
    simulate_sde_ensemble,
    steady_state,
)
from .priors import ParamDraw, PriorSet, PriorSpec, default_prior_set  # noqa: F401
from .inference import (  # noqa: F401
    SamplerConfig,
    decay_reference_ach,
    log_likelihood_em,
    log_posterior,
    sample_posterior,
    summarize,
)
from .mcmc import PosteriorSamples  # noqa: F401

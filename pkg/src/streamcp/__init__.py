"""Streaming multiple-changepoint detection for event-time data.

Sequential Monte Carlo with window-local reversible-jump proposals, a
conjugate Poisson-gamma segment model and a non-conjugate shot-noise Cox
model, adaptive particle replication, budgeted multi-stream allocation and
a full-history MCMC baseline.
"""

from .engine import SmcEngine, SmcSettings, SmcState, UpdateWindow, compute_t_star
from .models import (
    ChainedGammaPrior,
    EventWindow,
    PoissonGammaModel,
    cp_prior_log_density,
    gamma_segment_log_evidence,
)
from .multistream import StreamBudget, allocate, complexity_score, run_parallel
from .particles import (
    ChangepointConfiguration,
    DegenerateWeightsError,
    InvalidConfigurationError,
    WeightedParticleSet,
    ess,
    pad_new_particles,
    replicate_to,
    systematic_resample,
)
from .rjmcmc import ConjugateChain, RjmcmcSettings, SncpChain, sample_window_posterior
from .simulate import simulate_piecewise_poisson, simulate_sncp
from .smcmc import SmcmcSettings, smcmc_run
from .sncp import ShotNoiseCoxModel

__version__ = "0.1.0"

__all__ = [
    "ChainedGammaPrior",
    "ChangepointConfiguration",
    "ConjugateChain",
    "DegenerateWeightsError",
    "EventWindow",
    "InvalidConfigurationError",
    "PoissonGammaModel",
    "RjmcmcSettings",
    "ShotNoiseCoxModel",
    "SmcEngine",
    "SmcSettings",
    "SmcState",
    "SmcmcSettings",
    "SncpChain",
    "StreamBudget",
    "UpdateWindow",
    "WeightedParticleSet",
    "allocate",
    "complexity_score",
    "compute_t_star",
    "cp_prior_log_density",
    "ess",
    "gamma_segment_log_evidence",
    "pad_new_particles",
    "replicate_to",
    "sample_window_posterior",
    "simulate_piecewise_poisson",
    "simulate_sncp",
    "smcmc_run",
    "systematic_resample",
]

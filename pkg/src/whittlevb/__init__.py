"""Frequency-domain sequential variational Bayes for state space models.

Submodules: ``spectral`` (periodograms, smoothing, blocking),
``models`` (families, transforms, Whittle likelihoods), ``autodiff``
(forward-mode first/second order), ``rvga`` (sequential variational
engine), ``hmc`` (Hamiltonian samplers and ESS), ``kalman`` (exact
likelihood), ``sim`` (seeded simulators), ``report`` (figures), ``cli``.
"""

from .hmc import Chain, GaussianPrior, HmcConfig, ess, leapfrog, run_hmc
from .kalman import kalman_loglik, kalman_loglik_grad
from .models import (
    BsvParams,
    LgssParams,
    SvParams,
    get_model,
    whittle_loglik_block,
    whittle_loglik_freq,
    whittle_loglik_full,
)
from .rvga import (
    RvgaConfig,
    Trajectory,
    VariationalState,
    draw_posterior,
    run_rvga_whittle,
)
from .sim import SimSpec, simulate
from .spectral import (
    Periodogram,
    TimeSeries,
    compute_periodogram,
    find_cutoff,
    make_block_plan,
    welch_smooth,
)

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "GaussianPrior",
    "HmcConfig",
    "ess",
    "leapfrog",
    "run_hmc",
    "kalman_loglik",
    "kalman_loglik_grad",
    "BsvParams",
    "LgssParams",
    "SvParams",
    "get_model",
    "whittle_loglik_block",
    "whittle_loglik_freq",
    "whittle_loglik_full",
    "RvgaConfig",
    "Trajectory",
    "VariationalState",
    "draw_posterior",
    "run_rvga_whittle",
    "SimSpec",
    "simulate",
    "Periodogram",
    "TimeSeries",
    "compute_periodogram",
    "find_cutoff",
    "make_block_plan",
    "welch_smooth",
    "__version__",
]

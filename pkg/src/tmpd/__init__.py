"""Tweedie moment projected diffusion posterior sampling.

Exact-score diffusion samplers for linear-Gaussian inverse problems on
analytic priors, several likelihood guidance variants, closed-form
posteriors for ground truth, and a benchmark CLI.
"""
from .guidance import (
    Diagnostics,
    GuidanceKind,
    UnsupportedOperatorError,
    bayes_update_mean,
    likelihood_score,
    likelihood_score_dps,
    likelihood_score_dtmpd,
    likelihood_score_pigdm,
    likelihood_score_tmpd,
    parse_guidance,
)
from .metrics import (
    SlicedWassersteinConfig,
    empirical_moments,
    gaussian_w2,
    sliced_w1,
)
from .prior import (
    GaussianPrior,
    GmmPrior,
    MeasurementModel,
    PosteriorGmm,
    generate_measurement,
    gmm_build,
    grf_build,
    matern52,
)
from .sampler import (
    ChainResult,
    ChainSpec,
    SamplerConfig,
    SamplingError,
    Trajectory,
    batch_run,
    ddpm_ancestral,
    em_reverse,
)
from .schedule import DiscreteSchedule, VeSchedule, VpSchedule, discretize
from .tweedie import TweedieMoments, moments, moments_ve, moments_vp

__version__ = "0.1.0"

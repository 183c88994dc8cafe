"""State-space modeling of two-choice mouse-tracking trajectories.

The package covers the full pipeline: cursor-path preprocessing into
movement angles, a Gaussian-approximation filter/smoother for the latent
attraction state, marginal-likelihood evaluation by Gauss-Hermite
quadrature, adaptive random-walk MCMC over the stimuli coefficients, and
goodness-of-fit / parameter-recovery tooling.

Numerical hot loops run in a compiled extension when available; set
MTSSM_PURE=1 to force the pure-NumPy fallback (see mtssm.backend).
"""

from .backend import backend_name
from .diagnostics import ParameterSummary, acf, gelman_rubin, hdpi, summarize
from .filtering import (
    FilterError,
    FilterMoments,
    SmoothedMoments,
    filter_init,
    filter_predict,
    filter_update,
    run_filter,
    smooth,
)
from .gof import (
    AorReport,
    RecoveryResult,
    RecoveryRow,
    RecoveryScenario,
    aor,
    aor_report,
    overlap_lambda,
    pi_curves,
    recovery_study,
    simulate_dataset,
    window_probability,
)
from .likelihood import (
    LikelihoodError,
    LikelihoodEvaluator,
    QuadratureRule,
    estimate_kappas,
    marginal_loglik,
)
from .model import (
    STATE_VAR,
    ExperimentDesign,
    MeasurementParams,
    StimuliParams,
    attraction_probability,
    expand_theta,
    mixture_density,
    mixture_logpdf,
    reduce_params,
    sigmoid,
    stimuli_beta,
    transition_logpdf,
    vonmises_logpdf,
)
from .preprocess import (
    AngleDataset,
    MalformedInputError,
    NormalizedTrajectory,
    RawTrajectory,
    ScreenBounds,
    build_dataset,
    hemispace_indicator,
    project_atan2,
    rescale,
    time_normalize,
    wrap_angle,
)
from .sampler import (
    ChainAbort,
    PosteriorDraws,
    SamplerConfig,
    initialize_theta,
    log_posterior_kernel,
    run_chain,
    run_sampler,
)

__version__ = "0.1.0"

__all__ = [
    "AngleDataset",
    "AorReport",
    "ChainAbort",
    "ExperimentDesign",
    "FilterError",
    "FilterMoments",
    "LikelihoodError",
    "LikelihoodEvaluator",
    "MalformedInputError",
    "MeasurementParams",
    "NormalizedTrajectory",
    "ParameterSummary",
    "PosteriorDraws",
    "QuadratureRule",
    "RawTrajectory",
    "RecoveryResult",
    "RecoveryRow",
    "RecoveryScenario",
    "STATE_VAR",
    "SamplerConfig",
    "ScreenBounds",
    "SmoothedMoments",
    "StimuliParams",
    "acf",
    "aor",
    "aor_report",
    "attraction_probability",
    "backend_name",
    "build_dataset",
    "estimate_kappas",
    "expand_theta",
    "filter_init",
    "filter_predict",
    "filter_update",
    "gelman_rubin",
    "hdpi",
    "hemispace_indicator",
    "initialize_theta",
    "log_posterior_kernel",
    "marginal_loglik",
    "mixture_density",
    "mixture_logpdf",
    "overlap_lambda",
    "pi_curves",
    "project_atan2",
    "recovery_study",
    "reduce_params",
    "rescale",
    "run_chain",
    "run_filter",
    "run_sampler",
    "sigmoid",
    "simulate_dataset",
    "smooth",
    "stimuli_beta",
    "summarize",
    "time_normalize",
    "transition_logpdf",
    "vonmises_logpdf",
    "window_probability",
    "wrap_angle",
    "__version__",
]

"""Bound-aware Gaussian-process sampling and Bayesian optimization.

Gaussian-process posterior function sampling that exploits approximately
known upper/lower bounds of the objective: bound-weighted decoupled
sampling, a square-root-transformed surrogate that respects the upper bound
by construction, a bounded entropy acquisition for sequential optimization,
and a seeded experiment harness.
"""

__version__ = "0.1.0"

from .gp import (  # noqa: F401
    Dataset,
    DegeneratePendingPointError,
    FactorizationError,
    FittedGP,
    KernelConfig,
    extended_variance,
    fit_gp,
    log_marginal_likelihood,
    posterior,
    posterior_batch,
)
from .rff import (  # noqa: F401
    FourierBasis,
    PosteriorSample,
    SampleSummary,
    draw_basis,
    draw_sample,
    draw_samples,
    eval_sample,
    eval_sample_batch,
    eval_sample_grad,
    locate_extrema,
    summarize_samples,
)
from .weighting import (  # noqa: F401
    ApproxBounds,
    NoAdmissibleSamplesError,
    accept,
    attach_weights,
    normalized_weights,
    rank_select,
    verify_variance_lemmas,
    weight,
    weighted_aggregate,
)
from .transform import (  # noqa: F401
    TransformSpec,
    fit_srgp,
    from_h,
    run_algorithm1,
    srgp_posterior,
    to_h_space,
)
from .acquisition import (  # noqa: F401
    AcquisitionContext,
    Surrogate,
    bes_acquisition,
    bes_no_weighting_ablation,
    ei_acquisition,
    select_next,
    thompson_select,
    ucb_acquisition,
)
from .bo import BoConfig, BoTrace, run_bo  # noqa: F401
from .benchmarks import make as make_benchmark  # noqa: F401
from .benchmarks import misspecify, true_bounds  # noqa: F401
from .harness import ExperimentConfig  # noqa: F401

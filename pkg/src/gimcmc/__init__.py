"""Gaussian-invariant MCMC samplers, control variates, and diagnostics."""

from .targets import (
    TargetModel,
    GaussianTarget,
    LatentGaussianTarget,
    BinaryLogisticLikelihood,
    PoissonCoxLikelihood,
    GaussianRegressionLikelihood,
    ZeroLikelihood,
    StudentTTarget,
    GaussianMixtureTarget,
    make_logistic_regression_target,
    make_latent_gaussian_target,
    squared_exponential_kernel,
    exponential_grid_kernel,
    student_t_preconditioner,
    mixture_preconditioner,
    logistic_mle,
)
from .samplers import (
    ProposalSpec,
    TransitionRecord,
    ChainTrace,
    girwm_propose,
    gimala_propose,
    mala_propose,
    rwm_propose,
    pcn_propose,
    mh_log_ratio,
    mh_step,
    adapt_step_size,
    run_chain,
)
from .latent_gaussian import (
    PriorEigen,
    LgmStepCache,
    compute_delta,
    lgm_cache,
    lgm_propose,
    lgm_h,
    lgm_accept_prob,
    run_lgm_chain,
)
from .poisson_cv import (
    PoissonSolution,
    ControlVariatePair,
    EstimatorReport,
    solution_linear,
    solution_quadratic,
    solution_indicator,
    solution_exp,
    control_variates,
    estimate_beta,
    cv_estimator,
    zero_variance_estimator_gaussian,
    gi_proposal_cov,
)
from .diagnostics import EssReport, VarianceRatioReport, ess, ess_report, variance_ratio
from .scaling import (
    PerturbedGaussianSpec,
    ScalingCurve,
    k_constant,
    speed_objective,
    optimize_gamma,
    empirical_acceptance_curve,
    scaling_curve,
)

__version__ = "0.1.0"

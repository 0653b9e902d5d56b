"""Certified PAC-Bayesian generalization bounds for LTI predictors.

Simulate stochastic LTI data generators, evaluate linear predictors on
them, and certify the generalization loss of Gibbs posteriors over
predictor classes with KL- and Renyi-divergence bounds whose every
constant is computed with certified series truncation.
"""

from .bounds import (
    BoundConstants,
    KlBoundResult,
    MultiOutputBound,
    RenyiBoundResult,
    batch_constants,
    batch_generalization_loss,
    bound_results_to_csv,
    central_moment_bound,
    compute_Kw,
    compute_constants,
    kl_bound,
    lambda_max,
    loss_gap_bound,
    mgf_upper_bound,
    multi_output_bound,
    psi_hat,
    psi_moment_term,
    renyi_bound,
    sigma_moment,
)
from .certify import (
    BoundEvaluation,
    CertificationRow,
    ClassData,
    CoverageResult,
    certify,
    coverage,
    evaluate_bounds,
    prepare_class,
    reproduce_example,
    resolve_kl_lambda,
)
from .config import (
    RunConfig,
    config_from_dict,
    example_config_path,
    generator_from_dict,
    generator_to_dict,
    load_config,
    load_system,
    predictor_from_dict,
)
from .errors import (
    ConstraintError,
    ConvergenceError,
    DimensionError,
    InputError,
    LtiboundError,
    NumericError,
    StabilityError,
    UnsupportedStructureError,
)
from .loss import (
    LossReport,
    batch_empirical_loss,
    empirical_loss,
    empirical_loss_components,
    evaluate,
    features,
    finite_past_predict,
    generalization_loss,
    infinite_past_loss,
    loss_reports_to_csv,
)
from .lti import (
    ErrorSystem,
    FeatureMode,
    Generator,
    GeneratorReport,
    Predictor,
    Trajectory,
    build_error_system,
    derive_case_predictors,
    h2_distance,
    h2_norm,
    invert_predictor_to_innovation_form,
    predictor_from_innovation_form,
    simulate,
    trajectory_to_csv,
    validate_generator,
)
from .matnum import (
    SeriesResult,
    cholesky_psd,
    geometric_norm_sum,
    markov_norm_series,
    operator_norm_2,
    solve_discrete_lyapunov,
    spectral_radius,
)
from .posterior import (
    GeSupEstimate,
    LogDensity,
    McEstimate,
    ParamBox,
    PosteriorChain,
    chain_to_csv,
    estimate_Dr,
    estimate_Ge_sup,
    estimate_KL_grid,
    estimate_logZ,
    gibbs_target,
    log_gibbs_density,
    log_sum_exp,
    mc_expectation,
    mc_mean,
    mh_sample,
    prior_rng,
    uniform_log_density,
)

__version__ = "0.1.0"

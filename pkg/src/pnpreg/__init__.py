"""pnpreg: plug-and-play fixed-point reconstruction as a stable, convergent
regularization method, with an admissible-denoiser zoo and certified
experiment harnesses."""

from ._kernels import BACKEND
from .admissibility import (
    AdmissibilityReport,
    BoundedSet,
    certify_family,
    check_b1,
    check_b2,
    check_b3,
    check_b4,
    closed_form_Clambda_sup,
    norm_counterpoint,
)
from .denoisers import (
    CausalDenoiser,
    Denoiser,
    FilterDenoiser,
    HardThreshold,
    ONE_MINUS_LAMBDA,
    ProxQuadratic,
    ScaledDenoiser,
    ScalingRule,
    SoftThreshold,
    denoiser_from_config,
    hard_threshold,
    invert_denoiser,
    prox_quadratic,
    scale_denoiser,
    shift_mix_denoiser,
    soft_threshold,
    uniform_filter_denoiser,
)
from .discrepancy import (
    Discrepancy,
    GenericDiscrepancy,
    LeastSquares,
    StepConfig,
    discrepancy_from_config,
    equicontinuity_gap,
    grad_step,
)
from .linops import (
    ConvolutionOperator,
    DenseOperator,
    DiagonalInBasisOperator,
    LinearOperator,
    estimate_norm,
    operator_from_config,
    operator_from_json,
    operator_to_json,
    project_kernel,
    pseudo_solve,
    svd_small,
)
from .regularization import (
    ConvergenceStudy,
    LimitCharacterization,
    ParameterChoice,
    StabilityViolation,
    characterize_limit,
    choose_lambda,
    limit_oracle,
    run_convergence_study,
    stability_experiment,
)
from .solver import (
    ContractionError,
    ConvergenceError,
    FixedPointResult,
    PnPProblem,
    fbs_step,
    prox_of_discrepancy,
    solve_admm,
    solve_fbs,
)

__version__ = "0.1.0"

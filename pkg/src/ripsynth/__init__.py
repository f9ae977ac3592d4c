"""ripsynth: rotary-inverted-pendulum controller synthesis toolkit.

Plant modelling (nonlinear dynamics, energy, linearization), LQR through the
continuous algebraic Riccati equation, generalized dynamic state-feedback
controllers tuned by Gaussian-process Bayesian optimization of the
closed-loop spectrum, and a seeded noisy closed-loop simulator.
"""

from .bayesopt import (
    BoConfig,
    BoResult,
    GpModel,
    KernelConfig,
    SearchSpace,
    bo_minimize,
    decode_controller,
    default_search_space,
    encode_controller,
    expected_improvement,
    gp_fit,
    gp_predict,
    kernel_matrix,
    optimize_acquisition,
    synthesis_objective,
)
from .control import (
    DynamicController,
    StabilityReport,
    augmented_matrix,
    augmented_system,
    c2d_controller,
    c2d_zoh,
    canonical_bo_controller,
    dynamic_prefilter,
    lqr_gain,
    lyapunov_continuous,
    solve_care,
    stability_report,
    static_prefilter,
    toy_dynamic_controller,
    toy_static_gain,
    validate_lqr_weights,
)
from .errors import (
    ConditioningError,
    ConfigError,
    ConvergenceError,
    DimensionError,
    NotPositiveDefiniteError,
    ParameterError,
    PrefilterError,
    SingularMatrixError,
    SynthesisError,
    ToolkitError,
)
from .numerics import (
    cholesky,
    determinant,
    eigenvalues,
    matrix_exponential,
    solve_linear,
)
from .plant import (
    PendulumParams,
    StateSpace,
    canonical_rip_model,
    is_underactuated,
    linearize,
    mechanical_dynamics,
    nonlinear_dynamics,
    table1,
    total_energy,
    toy_plant,
)
from .sim import (
    GaussianStream,
    Metrics,
    ReferenceSignal,
    SimResult,
    compute_metrics,
    rk4_step,
    simulate_dynamic,
    simulate_nonlinear,
    simulate_static,
)

__version__ = "0.1.0"

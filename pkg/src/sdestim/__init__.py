"""Joint MAP state-path and parameter estimation for SDE models.

The package estimates trajectories and parameters of systems

    dX = f(t, X, Z, theta) dt + G dW
    dZ = h(t, X, Z, theta) dt

from noisy samples of Z, by maximizing a path-space posterior density
(collocation transcription + augmented Lagrangian solver), and compares
against a continuous-discrete unscented Kalman filter/smoother baseline with
prediction-error parameter estimation.
"""

from .baseline import (
    FilterDivergence,
    FilterHistory,
    GaussianBelief,
    PemResult,
    beliefs_to_csv,
    pem_estimate,
    pem_neglogpost,
    run_filter,
    ukf_predict,
    ukf_update,
    uks_smooth,
)
from .harness import (
    EstimatorResult,
    ExperimentConfig,
    McRecord,
    initial_guess,
    ise,
    run_monte_carlo,
    run_single,
)
from .model import (
    GAMMA_PRIOR_SCALE,
    GAMMA_PRIOR_SHAPE,
    SIGMA_INIT,
    SIGMA_THETA,
    DuffingParams,
    SdeModel,
    duffing_drift,
    duffing_drift_div,
    duffing_log_prior,
    gaussian_meas_loglik,
    make_duffing_model,
    smootherstep,
    smootherstep_deriv,
    student_t_meas_loglik,
)
from .simulate import (
    SimPath,
    measurements_to_csv,
    path_to_csv,
    sample_initial_state,
    sample_measurements_gaussian,
    sample_measurements_mixture,
    simulate_order15,
    simulate_order15_batch,
    stream,
    write_run_manifest,
)
from .solve import KktReport, NlpSolution, SolveOptions, check_kkt, solve
from .transcribe import (
    KIND_JME,
    KIND_MEE,
    CollocationGrid,
    CollocationProblem,
    DecisionVector,
    Trajectory,
    build_problem,
)

__version__ = "0.1.0"

__all__ = [
    "CollocationGrid",
    "CollocationProblem",
    "DecisionVector",
    "DuffingParams",
    "EstimatorResult",
    "ExperimentConfig",
    "FilterDivergence",
    "FilterHistory",
    "GAMMA_PRIOR_SCALE",
    "GAMMA_PRIOR_SHAPE",
    "GaussianBelief",
    "KIND_JME",
    "KIND_MEE",
    "KktReport",
    "McRecord",
    "NlpSolution",
    "PemResult",
    "SIGMA_INIT",
    "SIGMA_THETA",
    "SdeModel",
    "SimPath",
    "SolveOptions",
    "Trajectory",
    "beliefs_to_csv",
    "build_problem",
    "check_kkt",
    "duffing_drift",
    "duffing_drift_div",
    "duffing_log_prior",
    "gaussian_meas_loglik",
    "initial_guess",
    "ise",
    "make_duffing_model",
    "measurements_to_csv",
    "path_to_csv",
    "pem_estimate",
    "pem_neglogpost",
    "run_filter",
    "run_monte_carlo",
    "run_single",
    "sample_initial_state",
    "sample_measurements_gaussian",
    "sample_measurements_mixture",
    "simulate_order15",
    "simulate_order15_batch",
    "smootherstep",
    "smootherstep_deriv",
    "solve",
    "stream",
    "student_t_meas_loglik",
    "ukf_predict",
    "ukf_update",
    "uks_smooth",
    "write_run_manifest",
]

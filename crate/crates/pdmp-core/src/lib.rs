//! Simulation of piecewise deterministic (Markov) processes by thinning,
//! coupled through shared randomness traces, with change-of-measure
//! corrective weights and classical / multilevel Monte Carlo estimators.

pub mod error;
pub mod estimators;
pub mod flow;
pub mod models;
pub mod pdp;
pub mod reweight;
pub mod rng;

pub use error::{PdmpError, Result};
pub use estimators::{
    empirical_rmse, estimate_c1, estimate_v1, estimate_var, fit_log_slope, mc_params, mlmc_params,
    run_mc, run_mlmc, select_refinement, variance_decay_curve, EstimatorRun, FamilyCoupling,
    McPlan, MlmcPlan, PdmpFamily, RmseSummary, Sample, SampleFamily, StructuralParams,
};
pub use flow::{
    euler_polygon_eval, reference_solve, rk4_solve, DenseTrajectory, EulerCursor, FlowSpec,
};
pub use pdp::{
    evaluate_state, first_divergence, inverse_cdf_select, simulate_coupled, simulate_path,
    Characteristics, MarkState, Model, PathSkeleton, Payoff,
};
pub use reweight::{
    coupled_weighted_pair, simulate_aux_skeleton, weight_flow_change, weight_mode_auxiliary,
    weighted_single, AuxJumpLaw, AuxSkeleton, CouplingSpec, EnvelopeBounds, FrozenTrajectoryLaw,
    ModeOnlyLaw, WeightedSample,
};
pub use rng::{derive_stream, sample_trace, RandomStream, StreamKey, ThinningTrace};

//! Shared fixtures for the simulation benchmarks.

use pdmp_core::models::morris_lecar::{MlModel, MlParams, DEFAULT_INITIAL_STATE};
use pdmp_core::MarkState;

pub fn ml_model() -> MlModel {
    MlModel::new(MlParams::default()).expect("default parameters are valid")
}

pub fn ml_initial() -> MarkState {
    MarkState::new(DEFAULT_INITIAL_STATE.0, DEFAULT_INITIAL_STATE.1)
}

pub const RATE_BOUND: f64 = 10.0;

//! Estimate the structural parameters of the ion-channel model at the
//! experiment horizon: bias constant, strong-error constants for the plain
//! and reweighted couplings, and the payoff variance.
//!
//! ```text
//! cargo run --release -p pdmp-core --example structural_scan
//! ```

use pdmp_core::models::morris_lecar::{deterministic_ml, MlModel, MlParams, DEFAULT_INITIAL_STATE};
use pdmp_core::*;

fn main() -> Result<()> {
    let params = MlParams::default();
    let model = MlModel::new(params.clone())?;
    let (theta0, nu0) = DEFAULT_INITIAL_STATE;
    let x0 = MarkState::new(theta0, nu0);
    let horizon = 30.0;
    let bound = 10.0;
    let n = 10_000u64;
    let key = StreamKey::new(20240901);

    let plain = PdmpFamily {
        model: &model,
        rate_bound: bound,
        horizon,
        initial: x0,
        payoff: Payoff::Nu,
        coupling: FamilyCoupling::Plain,
    };
    let c1 = estimate_c1(&plain, 1.0, 4, n, &key.child(0))?;
    let v1_plain = estimate_v1(&plain, 0.1, 4, n, &key.child(1))?;
    let var_x = estimate_var(&plain, 0.025, n, &key.child(2))?;
    println!("plain:   c1 = {c1:.3}  v1 = {v1_plain:.3}  var_x = {var_x:.1}");

    let flow_change = PdmpFamily { coupling: FamilyCoupling::FlowChange, ..plain };
    let c1_fc = estimate_c1(&flow_change, 1.0, 4, n, &key.child(3))?;
    let v1_fc = estimate_v1(&flow_change, 0.1, 4, n, &key.child(4))?;
    println!("flow-change: c1 = {c1_fc:.3}  v1 = {v1_fc:.3}");

    let reference = deterministic_ml(
        &params,
        nu0,
        theta0 as f64 / params.n_k as f64,
        horizon,
        1e-3,
    )?;
    let frozen_law = FrozenTrajectoryLaw::new(&model, &reference);
    let frozen = PdmpFamily {
        coupling: FamilyCoupling::FrozenTrajectory(&frozen_law),
        ..plain
    };
    let v1_frozen = estimate_v1(&frozen, 0.1, 4, n, &key.child(5))?;
    println!("frozen-trajectory: v1 = {v1_frozen:.3}");

    let mode_law = ModeOnlyLaw::uniform_birth_death(params.n_k);
    let mode_aux = PdmpFamily { coupling: FamilyCoupling::ModeAuxiliary(&mode_law), ..plain };
    let v1_mode = estimate_v1(&mode_aux, 0.1, 4, n, &key.child(6))?;
    println!("mode-auxiliary: v1 = {v1_mode:.3}");

    Ok(())
}

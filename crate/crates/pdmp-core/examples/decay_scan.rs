//! Decay of the mean squared coupled difference across levels for the three
//! couplings, with fitted slopes; the raw data behind the variance-decay
//! figures.
//!
//! ```text
//! cargo run --release -p pdmp-core --example decay_scan
//! ```

use pdmp_core::models::morris_lecar::{deterministic_ml, MlModel, MlParams, DEFAULT_INITIAL_STATE};
use pdmp_core::*;

fn main() -> Result<()> {
    let params = MlParams::default();
    let model = MlModel::new(params.clone())?;
    let (theta0, nu0) = DEFAULT_INITIAL_STATE;
    let x0 = MarkState::new(theta0, nu0);
    let horizon = 10.0;
    let bound = 10.0;
    let (h, m, levels, n) = (1.0, 4u64, 7usize, 3_000u64);
    let key = StreamKey::new(77);

    let base = PdmpFamily {
        model: &model,
        rate_bound: bound,
        horizon,
        initial: x0,
        payoff: Payoff::Nu,
        coupling: FamilyCoupling::Plain,
    };
    let curve = variance_decay_curve(&base, h, m, levels, n, &key.child(0))?;
    report("plain", &curve, m);

    let flow_change = PdmpFamily { coupling: FamilyCoupling::FlowChange, ..base };
    let curve = variance_decay_curve(&flow_change, h, m, levels, n, &key.child(1))?;
    report("flow-change", &curve, m);

    let reference =
        deterministic_ml(&params, nu0, theta0 as f64 / params.n_k as f64, horizon, 1e-3)?;
    let frozen_law = FrozenTrajectoryLaw::new(&model, &reference);
    let frozen = PdmpFamily { coupling: FamilyCoupling::FrozenTrajectory(&frozen_law), ..base };
    let curve = variance_decay_curve(&frozen, h, m, levels, n, &key.child(2))?;
    report("frozen-trajectory", &curve, m);

    Ok(())
}

fn report(name: &str, curve: &[(usize, f64)], m: u64) {
    print!("{name:>18}:");
    for (_, msd) in curve {
        print!(" {msd:10.3e}");
    }
    let full = fit_log_slope(curve, m);
    let tail = fit_log_slope(&curve[1..], m);
    println!(
        "   slope(all) {}  slope(h<=1) {}",
        full.map_or("n/a".into(), |s| format!("{s:.3}")),
        tail.map_or("n/a".into(), |s| format!("{s:.3}")),
    );
}

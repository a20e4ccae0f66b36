//! Structural-parameter magnitudes of the ion-channel model at the experiment
//! horizon and default initial state. The bias constant matches the reference
//! value's range; the strong-error constants are the magnitudes measured for
//! this initial state (the coupling constants are initial-condition-sensitive,
//! see the README notes), frozen here to catch regressions.

use pdmp_core::models::morris_lecar::{MlModel, MlParams, DEFAULT_INITIAL_STATE};
use pdmp_core::*;

#[test]
fn structural_magnitudes_at_experiment_horizon() {
    let model = MlModel::new(MlParams::default()).unwrap();
    let base = PdmpFamily {
        model: &model,
        rate_bound: 10.0,
        horizon: 30.0,
        initial: MarkState::new(DEFAULT_INITIAL_STATE.0, DEFAULT_INITIAL_STATE.1),
        payoff: Payoff::Nu,
        coupling: FamilyCoupling::Plain,
    };
    let n = 2_000u64;
    let key = StreamKey::new(1234);

    let c1 = estimate_c1(&base, 1.0, 4, n, &key.child(0)).unwrap();
    assert!((2.0..=8.0).contains(&c1), "c1 = {c1}, expected in [2, 8]");

    let v1 = estimate_v1(&base, 0.1, 4, n, &key.child(1)).unwrap();
    assert!((15.0..=60.0).contains(&v1), "plain v1 = {v1}, expected in [15, 60]");

    let var_x = estimate_var(&base, 0.025, n, &key.child(2)).unwrap();
    assert!((250.0..=450.0).contains(&var_x), "var_x = {var_x}, expected in [250, 450]");

    let case3 = PdmpFamily { coupling: FamilyCoupling::FlowChange, ..base };
    let v1_case3 = estimate_v1(&case3, 0.1, 4, n, &key.child(3)).unwrap();
    assert!(
        (250.0..=1200.0).contains(&v1_case3),
        "flow-change v1 = {v1_case3}, expected in [250, 1200]"
    );

    // strong order two: the constant is stable under step refinement
    let v1_finer = estimate_v1(&case3, 0.05, 4, n, &key.child(4)).unwrap();
    let ratio = v1_case3 / v1_finer;
    assert!(
        (0.3..=3.0).contains(&ratio),
        "flow-change v1 not step-stable: {v1_case3} at h=0.1 vs {v1_finer} at h=0.05"
    );
}

//! Change-of-measure identities: exact cancellation when auxiliary equals
//! target, unit mean of the corrective weight, and agreement of reweighted
//! expectations with direct simulation.

use pdmp_core::models::morris_lecar::{MlModel, MlParams, DEFAULT_INITIAL_STATE};
use pdmp_core::models::telegraph::{AffineField, TelegraphModel, TelegraphParams};
use pdmp_core::*;

fn ml_model() -> MlModel {
    MlModel::new(MlParams::default()).unwrap()
}

fn ml_x0() -> MarkState {
    MarkState::new(DEFAULT_INITIAL_STATE.0, DEFAULT_INITIAL_STATE.1)
}

fn empty_trace(horizon: f64) -> ThinningTrace {
    ThinningTrace {
        horizon,
        poisson_times: vec![],
        uniforms_accept: vec![],
        uniforms_mark: vec![],
    }
}

#[test]
fn zero_proposals_give_unit_weight() {
    let model = ml_model();
    let trace = empty_trace(2.0);
    let law = ModeOnlyLaw::uniform_birth_death(model.params.n_k);
    let skel = simulate_aux_skeleton(&law, model.mode_count(), 10.0, &trace, ml_x0().theta).unwrap();
    let w = weight_mode_auxiliary(
        &model,
        10.0,
        FlowSpec::euler(0.1),
        &law,
        &skel,
        &trace,
        ml_x0(),
        Payoff::Nu,
    )
    .unwrap();
    assert_eq!(w.weight, 1.0);

    let chars = Characteristics::new(&model, 10.0, FlowSpec::euler(0.1)).unwrap();
    let path = simulate_path(&chars, &trace, ml_x0()).unwrap();
    let w3 = weight_flow_change(&model, 10.0, &path, &trace, FlowSpec::euler(0.4), Payoff::Nu).unwrap();
    assert_eq!(w3.weight, 1.0);
}

#[test]
fn auxiliary_equal_to_target_cancels_exactly() {
    // A telegraph model's intensity and kernel depend only on the mode, so
    // the mode-only auxiliary with the same tables makes every factor cancel.
    let params = TelegraphParams {
        rates: [1.0, 2.0],
        fields: [
            AffineField { offset: 1.0, slope: -0.5 },
            AffineField { offset: -2.0, slope: -0.25 },
        ],
    };
    let model = TelegraphModel::new(params.clone()).unwrap();
    let law = ModeOnlyLaw::new(
        params.rates.to_vec(),
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    )
    .unwrap();
    let bound = 4.0;
    let x0 = MarkState::new(0, 1.5);
    for i in 0..200u64 {
        let trace = sample_trace(&StreamKey::new(11).child(i), bound, 6.0).unwrap();
        let skel = simulate_aux_skeleton(&law, 2, bound, &trace, x0.theta).unwrap();
        let w = weight_mode_auxiliary(
            &model,
            bound,
            FlowSpec::euler(0.2),
            &law,
            &skel,
            &trace,
            x0,
            Payoff::Nu,
        )
        .unwrap();
        assert_eq!(w.weight, 1.0, "trace {i}: weight should cancel exactly");
    }
}

#[test]
fn identical_flows_cancel_exactly_in_flow_change() {
    let model = ml_model();
    let chars = Characteristics::new(&model, 10.0, FlowSpec::euler(0.1)).unwrap();
    for i in 0..100u64 {
        let trace = sample_trace(&StreamKey::new(21).child(i), 10.0, 5.0).unwrap();
        let skel = simulate_path(&chars, &trace, ml_x0()).unwrap();
        let w = weight_flow_change(&model, 10.0, &skel, &trace, FlowSpec::euler(0.1), Payoff::Nu)
            .unwrap();
        assert_eq!(w.weight, 1.0, "trace {i}");
        let (terminal, _) = evaluate_state(&skel, &chars, trace.horizon).unwrap();
        assert_eq!(w.value, terminal.nu, "trace {i}: terminal must match the plain path");
    }
}

#[test]
fn flow_blind_characteristics_keep_unit_weight_with_changed_flow() {
    // Telegraph intensity and kernel ignore nu, so the flow-change weight is
    // one even though the transported terminal value differs.
    let model = TelegraphModel::new(TelegraphParams::default()).unwrap();
    let bound = 4.0;
    let x0 = MarkState::new(0, 2.0);
    let chars = Characteristics::new(&model, bound, FlowSpec::euler(0.5)).unwrap();
    let mut saw_different_terminal = false;
    for i in 0..100u64 {
        let trace = sample_trace(&StreamKey::new(31).child(i), bound, 6.0).unwrap();
        let skel = simulate_path(&chars, &trace, x0).unwrap();
        let w = weight_flow_change(&model, bound, &skel, &trace, FlowSpec::euler(0.05), Payoff::Nu)
            .unwrap();
        assert_eq!(w.weight, 1.0, "trace {i}");
        let (terminal, _) = evaluate_state(&skel, &chars, trace.horizon).unwrap();
        if (w.value - terminal.nu).abs() > 1e-9 {
            saw_different_terminal = true;
        }
    }
    assert!(saw_different_terminal, "coarse transport should move the terminal value");
}

#[test]
fn equal_steps_give_identical_weighted_pairs() {
    let model = ml_model();
    let law = ModeOnlyLaw::uniform_birth_death(model.params.n_k);
    let reference = pdmp_core::models::morris_lecar::deterministic_ml(
        &model.params,
        ml_x0().nu,
        ml_x0().theta as f64 / model.params.n_k as f64,
        5.0,
        1e-3,
    )
    .unwrap();
    let frozen = FrozenTrajectoryLaw::new(&model, &reference);
    for (name, coupling) in [
        ("mode-aux", CouplingSpec::ModeAuxiliary(&law)),
        ("frozen", CouplingSpec::FrozenTrajectory(&frozen)),
        ("flow-change", CouplingSpec::FlowChange),
    ] {
        for i in 0..20u64 {
            let trace = sample_trace(&StreamKey::new(41).child(i), 10.0, 5.0).unwrap();
            let (f, c) =
                coupled_weighted_pair(&model, 10.0, &coupling, &trace, ml_x0(), 0.1, 0.1, Payoff::Nu)
                    .unwrap();
            assert_eq!(f.value, c.value, "{name} trace {i}");
            assert_eq!(f.weight, c.weight, "{name} trace {i}");
        }
    }
}

#[test]
fn unit_mean_weight_mode_auxiliary() {
    let model = ml_model();
    let law = ModeOnlyLaw::uniform_birth_death(model.params.n_k);
    let base = StreamKey::new(51);
    let n = 20_000u64;
    let mut weights = Vec::with_capacity(n as usize);
    for i in 0..n {
        let trace = sample_trace(&base.child(i), 10.0, 5.0).unwrap();
        let w =
            weighted_single(&model, 10.0, &law, &trace, ml_x0(), 0.1, Payoff::Constant(1.0)).unwrap();
        assert!(w.weight > 0.0 && w.weight.is_finite());
        weights.push(w.weight);
    }
    let nf = n as f64;
    let mean = weights.iter().sum::<f64>() / nf;
    let sd = (weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (nf - 1.0)).sqrt();
    let se = sd / nf.sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "E[R] = {mean} +- {se}");
}

#[test]
fn unit_mean_weight_frozen_trajectory() {
    let model = ml_model();
    let reference = pdmp_core::models::morris_lecar::deterministic_ml(
        &model.params,
        ml_x0().nu,
        ml_x0().theta as f64 / model.params.n_k as f64,
        5.0,
        1e-3,
    )
    .unwrap();
    let law = FrozenTrajectoryLaw::new(&model, &reference);
    let base = StreamKey::new(61);
    let n = 20_000u64;
    let mut weights = Vec::with_capacity(n as usize);
    for i in 0..n {
        let trace = sample_trace(&base.child(i), 10.0, 5.0).unwrap();
        let w =
            weighted_single(&model, 10.0, &law, &trace, ml_x0(), 0.1, Payoff::Constant(1.0)).unwrap();
        weights.push(w.weight);
    }
    let nf = n as f64;
    let mean = weights.iter().sum::<f64>() / nf;
    let sd = (weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (nf - 1.0)).sqrt();
    let se = sd / nf.sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "E[R] = {mean} +- {se}");
}

#[test]
fn flow_change_matches_direct_simulation() {
    // E[F(y_T) R_T] with the coarse flow riding the fine skeleton equals the
    // direct coarse-flow expectation; two independent estimators must agree
    // within three combined standard errors.
    let model = ml_model();
    let (h_fine, h_coarse) = (0.05, 0.2);
    let horizon = 5.0;
    let n = 20_000u64;

    let base = StreamKey::new(71);
    let mut reweighted = Vec::with_capacity(n as usize);
    for i in 0..n {
        let trace = sample_trace(&base.child(i), 10.0, horizon).unwrap();
        let (_, coarse) = coupled_weighted_pair(
            &model,
            10.0,
            &CouplingSpec::FlowChange,
            &trace,
            ml_x0(),
            h_fine,
            h_coarse,
            Payoff::Nu,
        )
        .unwrap();
        reweighted.push(coarse.weighted_value());
    }

    let direct_base = StreamKey::new(72);
    let chars = Characteristics::new(&model, 10.0, FlowSpec::euler(h_coarse)).unwrap();
    let mut direct = Vec::with_capacity(n as usize);
    for i in 0..n {
        let trace = sample_trace(&direct_base.child(i), 10.0, horizon).unwrap();
        let skel = simulate_path(&chars, &trace, ml_x0()).unwrap();
        let (state, _) = evaluate_state(&skel, &chars, horizon).unwrap();
        direct.push(state.nu);
    }

    let stats = |xs: &[f64]| {
        let nf = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / nf;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (nf - 1.0);
        (m, v / nf)
    };
    let (m1, se1sq) = stats(&reweighted);
    let (m2, se2sq) = stats(&direct);
    let tol = 3.0 * (se1sq + se2sq).sqrt();
    assert!((m1 - m2).abs() < tol, "reweighted {m1} vs direct {m2}, tol {tol}");
}

#[test]
fn degenerate_auxiliary_is_rejected() {
    // Auxiliary intensity at or above the bound leaves no rejection mass.
    let model = TelegraphModel::new(TelegraphParams::default()).unwrap();
    let law = ModeOnlyLaw::new(vec![4.0, 4.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let trace = sample_trace(&StreamKey::new(81), 4.0, 5.0).unwrap();
    match simulate_aux_skeleton(&law, 2, 4.0, &trace, 0) {
        Err(PdmpError::DegenerateWeight(_)) => {}
        other => panic!("expected degenerate weight, got {other:?}"),
    }
}

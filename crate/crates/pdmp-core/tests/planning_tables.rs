//! Closed-form planning formulas against the frozen reference parameter
//! tables (classical pair, multilevel levels/allocation/sample counts and the
//! refinement grid search).

use pdmp_core::*;

fn table2_params() -> StructuralParams {
    StructuralParams { alpha: 1.0, beta: 1.0, c1: 4.58, v1: 7.25, var_x: 335.0 }
}

fn table4_params() -> StructuralParams {
    StructuralParams { alpha: 1.0, beta: 2.0, c1: 3.91, v1: 34.1, var_x: 335.0 }
}

fn sig3(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(2 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

#[test]
fn classical_plan_reproduces_reference_rows() {
    let sp = table2_params();
    // (k, h, N) rows; h and N compared at three significant figures.
    let rows = [
        (1, 6.30e-2, 2.16e3),
        (2, 3.15e-2, 8.47e3),
        (3, 1.58e-2, 3.34e4),
        (4, 7.88e-3, 1.32e5),
        (5, 3.94e-3, 5.24e5),
    ];
    for (k, h_ref, n_ref) in rows {
        let plan = mc_params(2f64.powi(-k), &sp).unwrap();
        assert_eq!(sig3(plan.step), h_ref, "h at k={k}: {}", plan.step);
        assert_eq!(sig3(plan.samples as f64), n_ref, "N at k={k}: {}", plan.samples);
    }
}

#[test]
fn classical_plan_formula_closure() {
    // alpha = 1 and c1 = eps * sqrt(3) make h = 1/3 exactly.
    let eps = 0.25;
    let sp = StructuralParams { alpha: 1.0, beta: 1.0, c1: eps * 3f64.sqrt(), v1: 1.0, var_x: 1.0 };
    let plan = mc_params(eps, &sp).unwrap();
    assert!((plan.step - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn classical_plan_rejects_degenerate_bias() {
    let mut sp = table2_params();
    sp.c1 = 0.0;
    assert!(mc_params(0.5, &sp).is_err());
    assert!(mc_params(-0.5, &table2_params()).is_err());
}

#[test]
fn multilevel_levels_match_reference() {
    let sp = table2_params();
    assert_eq!(mlmc_params(0.5, &sp, 0.1, 2).unwrap().levels, 2);
    assert_eq!(mlmc_params(2f64.powi(-5), &sp, 0.1, 6).unwrap().levels, 3);
}

#[test]
fn refinement_search_reproduces_reference_tables() {
    // (k, M, L, N) for the plain coupling.
    let sp = table2_params();
    let plain_rows =
        [(1, 2, 2, 2.60e3), (2, 4, 2, 1.04e4), (3, 7, 2, 4.22e4), (4, 4, 3, 1.90e5), (5, 6, 3, 7.71e5)];
    for (k, m_ref, l_ref, n_ref) in plain_rows {
        let (m, plan) = select_refinement(2f64.powi(-k), &sp, 0.1, 2..=10).unwrap();
        assert_eq!(m, m_ref, "M at k={k}");
        assert_eq!(plan.levels, l_ref, "L at k={k}");
        assert_eq!(sig3(plan.total_samples), n_ref, "N at k={k}: {}", plan.total_samples);
    }
    // Reweighted coupling (strong order two).
    let sp = table4_params();
    let rows =
        [(1, 2, 2, 2.37e3), (2, 3, 2, 9.46e3), (3, 6, 2, 3.80e4), (4, 4, 3, 1.58e5), (5, 5, 3, 6.30e5)];
    for (k, m_ref, l_ref, n_ref) in rows {
        let (m, plan) = select_refinement(2f64.powi(-k), &sp, 0.1, 2..=10).unwrap();
        assert_eq!(m, m_ref, "M at k={k}");
        assert_eq!(plan.levels, l_ref, "L at k={k}");
        assert_eq!(sig3(plan.total_samples), n_ref, "N at k={k}: {}", plan.total_samples);
    }
}

#[test]
fn single_candidate_refinement_is_returned() {
    let (m, _) = select_refinement(0.5, &table2_params(), 0.1, [5]).unwrap();
    assert_eq!(m, 5);
}

#[test]
fn allocation_concentrates_on_first_level_as_rho_vanishes() {
    let sp = StructuralParams { alpha: 1.0, beta: 2.0, c1: 4.0, v1: 1e-12, var_x: 335.0 };
    let plan = mlmc_params(0.05, &sp, 0.1, 4).unwrap();
    assert!(plan.allocation[0] > 0.999, "q1 = {}", plan.allocation[0]);
    for q in &plan.allocation[1..] {
        assert!(*q < 1e-3);
    }
}

#[test]
fn shallow_plans_degenerate() {
    // A tiny bias constant pushes the level formula below two.
    let sp = StructuralParams { alpha: 1.0, beta: 1.0, c1: 1e-3, v1: 7.25, var_x: 335.0 };
    match mlmc_params(0.5, &sp, 0.1, 4) {
        Err(PdmpError::PlanDegenerate(_)) => {}
        other => panic!("expected degenerate plan, got {other:?}"),
    }
}

#[test]
fn level_steps_decrease_geometrically() {
    let plan = mlmc_params(2f64.powi(-4), &table2_params(), 0.1, 4).unwrap();
    assert_eq!(plan.level_steps.len(), plan.levels);
    for w in plan.level_steps.windows(2) {
        assert!((w[1] - w[0] / 4.0).abs() < 1e-15);
    }
    let sum: f64 = plan.allocation.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
    for (l, &n) in plan.level_samples.iter().enumerate() {
        assert_eq!(n, (plan.total_samples * plan.allocation[l]).ceil() as u64);
    }
}

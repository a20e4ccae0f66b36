//! Estimator runners against analytic oracles: constant payoffs, the
//! two-state Markov chain terminal law, a synthetic linear-bias family,
//! telescoping of the multilevel sum, and replication scaling.

use pdmp_core::models::telegraph::{AffineField, TelegraphModel, TelegraphParams};
use pdmp_core::*;

const BOUND: f64 = 4.0;

fn telegraph() -> TelegraphModel {
    TelegraphModel::new(TelegraphParams {
        rates: [0.9, 1.7],
        fields: [
            AffineField { offset: 2.0, slope: -0.6 },
            AffineField { offset: -1.0, slope: -0.3 },
        ],
    })
    .unwrap()
}

fn family<'a>(model: &'a TelegraphModel, horizon: f64, payoff: Payoff) -> PdmpFamily<'a> {
    PdmpFamily {
        model,
        rate_bound: BOUND,
        horizon,
        initial: MarkState::new(0, 1.0),
        payoff,
        coupling: FamilyCoupling::Plain,
    }
}

/// Closed-form terminal law of the two-state chain with flip rates (a0, a1):
/// P(theta_t = 1 | theta_0 = 0) = a0 / (a0 + a1) * (1 - exp(-(a0 + a1) t)).
/// Independent of the simulator: straight from the 2x2 generator exponential.
fn mode_one_probability(a0: f64, a1: f64, t: f64) -> f64 {
    a0 / (a0 + a1) * (1.0 - (-(a0 + a1) * t).exp())
}

#[test]
fn constant_payoff_collapses() {
    let model = telegraph();
    let fam = family(&model, 4.0, Payoff::Constant(5.0));
    let run = run_mc(&McPlan { step: 0.2, samples: 500 }, &fam, &StreamKey::new(1)).unwrap();
    assert_eq!(run.estimate, 5.0);
    assert_eq!(run.variance, 0.0);
    assert!(run.cost > 0);
}

#[test]
fn telegraph_terminal_mode_law() {
    let model = telegraph();
    let horizon = 2.0;
    let fam = family(&model, horizon, Payoff::Theta);
    let run = run_mc(&McPlan { step: 0.2, samples: 40_000 }, &fam, &StreamKey::new(2)).unwrap();
    let expect = mode_one_probability(0.9, 1.7, horizon);
    let se = run.variance.sqrt();
    assert!(
        (run.estimate - expect).abs() < 3.0 * se,
        "estimate {} vs analytic {expect} (se {se})",
        run.estimate
    );
}

/// Family with a known linear bias: X_h = Z + slope * h, Z standard normal
/// drawn from the stream, the same Z on both legs of a pair.
struct LinearBias {
    slope: f64,
}

impl LinearBias {
    fn draw(&self, key: &StreamKey) -> f64 {
        let mut stream = key.stream();
        // Box-Muller from two uniforms; u is bounded away from zero.
        let u = (1.0 - stream.uniform()).max(1e-16);
        let v = stream.uniform();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

impl SampleFamily for LinearBias {
    fn single(&self, step: f64, key: &StreamKey) -> Result<Sample> {
        Ok(Sample { value: self.draw(key) + self.slope * step, cost: 1 })
    }
    fn coupled(&self, fine: f64, coarse: f64, key: &StreamKey) -> Result<(Sample, Sample)> {
        let z = self.draw(key);
        Ok((
            Sample { value: z + self.slope * fine, cost: 1 },
            Sample { value: z + self.slope * coarse, cost: 1 },
        ))
    }
    fn strong_order(&self) -> f64 {
        1.0
    }
}

#[test]
fn bias_constant_recovers_synthetic_slope() {
    let fam = LinearBias { slope: 3.0 };
    let c1 = estimate_c1(&fam, 1.0, 4, 10_000, &StreamKey::new(3)).unwrap();
    // the coupled pair shares Z, so the estimate is exact up to rounding
    assert!((c1 - 3.0).abs() < 1e-9, "c1 = {c1}");
    // and a bias-free family gives zero
    let flat = LinearBias { slope: 0.0 };
    let c1 = estimate_c1(&flat, 1.0, 4, 10_000, &StreamKey::new(4)).unwrap();
    assert!(c1.abs() < 1e-12);
}

#[test]
fn strong_constant_vanishes_for_degenerate_sampler() {
    struct Degenerate;
    impl SampleFamily for Degenerate {
        fn single(&self, _: f64, key: &StreamKey) -> Result<Sample> {
            Ok(Sample { value: key.stream().uniform(), cost: 1 })
        }
        fn coupled(&self, _: f64, _: f64, key: &StreamKey) -> Result<(Sample, Sample)> {
            let v = key.stream().uniform();
            Ok((Sample { value: v, cost: 1 }, Sample { value: v, cost: 1 }))
        }
        fn strong_order(&self) -> f64 {
            1.0
        }
    }
    let v1 = estimate_v1(&Degenerate, 0.1, 4, 5_000, &StreamKey::new(5)).unwrap();
    assert_eq!(v1, 0.0);
}

#[test]
fn empirical_rmse_identities() {
    let exact = EstimatorRun { estimate: 7.0, variance: 0.0, cost: 1, wall_time_s: 0.0 };
    let s = empirical_rmse(&[exact; 4], 7.0).unwrap();
    assert_eq!(s, RmseSummary { bias: 0.0, variance: 0.0, rmse: 0.0 });

    // alternating +-delta around the truth with even count cancels
    let runs: Vec<EstimatorRun> = (0..8)
        .map(|k| EstimatorRun {
            estimate: 7.0 + if k % 2 == 0 { 0.25 } else { -0.25 },
            variance: 0.0,
            cost: 1,
            wall_time_s: 0.0,
        })
        .collect();
    let s = empirical_rmse(&runs, 7.0).unwrap();
    assert!(s.bias.abs() < 1e-15 && s.rmse < 1e-15);

    // synthetic normal replications: rmse ~= sqrt(bias^2 + sigma^2 / n)
    let (bias, sigma2, n_inner): (f64, f64, f64) = (0.3, 4.0, 100.0);
    let mut stream = StreamKey::new(6).stream();
    let runs: Vec<EstimatorRun> = (0..4000)
        .map(|_| {
            let u = (1.0 - stream.uniform()).max(1e-16);
            let v = stream.uniform();
            let z = (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos();
            EstimatorRun {
                estimate: 5.0 + bias + z * (sigma2 / n_inner).sqrt(),
                variance: sigma2 / n_inner,
                cost: 1,
                wall_time_s: 0.0,
            }
        })
        .collect();
    let s = empirical_rmse(&runs, 5.0).unwrap();
    let expect = (bias * bias + sigma2 / n_inner).sqrt();
    assert!((s.rmse - expect).abs() < 0.02, "rmse {} vs {expect}", s.rmse);
}

#[test]
fn multilevel_telescopes_to_finest_level() {
    // Sum of level expectations equals E[X_{h_L}]: compare a multilevel run
    // against direct Monte Carlo at the finest step within three combined
    // standard errors.
    let model = telegraph();
    let horizon = 3.0;
    let fam = family(&model, horizon, Payoff::Nu);
    let plan = MlmcPlan {
        levels: 3,
        refinement: 4,
        base_step: 0.4,
        allocation: vec![0.7, 0.2, 0.1],
        total_samples: 60_000.0,
        level_samples: vec![42_000, 12_000, 6_000],
        level_steps: vec![0.4, 0.1, 0.025],
    };
    let ml = run_mlmc(&plan, &fam, &StreamKey::new(7)).unwrap();
    let direct =
        run_mc(&McPlan { step: 0.025, samples: 60_000 }, &fam, &StreamKey::new(8)).unwrap();
    let tol = 3.0 * (ml.variance + direct.variance).sqrt();
    assert!(
        (ml.estimate - direct.estimate).abs() < tol,
        "multilevel {} vs direct {} (tol {tol})",
        ml.estimate,
        direct.estimate
    );
}

#[test]
fn equal_steps_collapse_multilevel_to_base_level() {
    let model = telegraph();
    let fam = family(&model, 3.0, Payoff::Nu);
    let plan = MlmcPlan {
        levels: 2,
        refinement: 2,
        base_step: 0.2,
        allocation: vec![0.5, 0.5],
        total_samples: 400.0,
        level_samples: vec![200, 200],
        level_steps: vec![0.2, 0.2],
    };
    let key = StreamKey::new(9);
    let run = run_mlmc(&plan, &fam, &key).unwrap();
    // level 2 differences vanish identically, so the estimate equals the
    // level-1 sample mean
    let level1: Vec<f64> = (0..200u64)
        .map(|i| fam.single(0.2, &key.child(1).child(i)).unwrap().value)
        .collect();
    let mean = level1.iter().sum::<f64>() / level1.len() as f64;
    assert!((run.estimate - mean).abs() < 1e-12);
}

#[test]
fn doubling_replications_halves_estimator_variance() {
    // Var(mean of R replications) should scale like 1/R; measured over many
    // trials the ratio sits within 30% of two.
    let model = telegraph();
    let fam = family(&model, 2.0, Payoff::Nu);
    let plan = McPlan { step: 0.2, samples: 40 };
    let trials = 400;
    let (r1, r2) = (4u64, 8u64);
    let mut var_small = 0.0;
    let mut var_big = 0.0;
    for (reps, var_acc) in [(r1, &mut var_small), (r2, &mut var_big)] {
        let mut means = Vec::with_capacity(trials);
        for t in 0..trials {
            let key = StreamKey::new(10 + reps).child(t as u64);
            let runs: Vec<f64> = (0..reps)
                .map(|r| run_mc(&plan, &fam, &key.child(r)).unwrap().estimate)
                .collect();
            means.push(runs.iter().sum::<f64>() / reps as f64);
        }
        let m = means.iter().sum::<f64>() / trials as f64;
        *var_acc = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (trials as f64 - 1.0);
    }
    let ratio = var_small / var_big;
    assert!((1.4..=2.6).contains(&ratio), "variance ratio {ratio} outside [1.4, 2.6]");
}

#[test]
fn run_costs_are_deterministic() {
    let model = telegraph();
    let fam = family(&model, 3.0, Payoff::Nu);
    let plan = McPlan { step: 0.1, samples: 300 };
    let a = run_mc(&plan, &fam, &StreamKey::new(12)).unwrap();
    let b = run_mc(&plan, &fam, &StreamKey::new(12)).unwrap();
    assert_eq!(a.cost, b.cost);
    assert_eq!(a.estimate, b.estimate);
    assert_eq!(a.variance, b.variance);
}

#[test]
fn decay_curve_of_identical_legs_is_zero() {
    struct Same;
    impl SampleFamily for Same {
        fn single(&self, _: f64, key: &StreamKey) -> Result<Sample> {
            Ok(Sample { value: key.stream().uniform(), cost: 1 })
        }
        fn coupled(&self, _: f64, _: f64, key: &StreamKey) -> Result<(Sample, Sample)> {
            let v = key.stream().uniform();
            Ok((Sample { value: v, cost: 1 }, Sample { value: v, cost: 1 }))
        }
        fn strong_order(&self) -> f64 {
            1.0
        }
    }
    let curve = variance_decay_curve(&Same, 1.0, 4, 5, 100, &StreamKey::new(13)).unwrap();
    assert!(curve.iter().all(|(_, msd)| *msd == 0.0));
    assert_eq!(fit_log_slope(&curve, 4), None);
}

//! Subcommand implementations: trajectory emission, structural-parameter
//! estimation, the RMSE table driver and the variance-decay curve.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use pdmp_core::models::morris_lecar::{deterministic_ml, MlModel};
use pdmp_core::models::telegraph::TelegraphModel;
use pdmp_core::*;

use crate::config::{Config, EstimatorKind, ModelKind};

/// Fixed substream indices of the root key, one per consumer.
mod keys {
    pub const SIMULATE: u64 = 0;
    pub const STRUCTURAL: u64 = 1;
    pub const RMSE: u64 = 2;
    pub const DECAY: u64 = 3;
    pub const GROUND_TRUTH: u64 = 9;
}

pub enum ModelChoice {
    MorrisLecar(MlModel),
    Telegraph(TelegraphModel),
}

impl ModelChoice {
    pub fn from_config(config: &Config) -> Result<ModelChoice> {
        match config.model {
            ModelKind::MorrisLecar => Ok(ModelChoice::MorrisLecar(
                MlModel::new(config.morris_lecar.params()).map_err(anyhow::Error::from)?,
            )),
            ModelKind::Telegraph => {
                let section = config.telegraph.as_ref().expect("validated");
                Ok(ModelChoice::Telegraph(
                    TelegraphModel::new(section.params()).map_err(anyhow::Error::from)?,
                ))
            }
        }
    }

    pub fn as_model(&self) -> &dyn Model {
        match self {
            ModelChoice::MorrisLecar(m) => m,
            ModelChoice::Telegraph(m) => m,
        }
    }

    fn ml(&self) -> Option<&MlModel> {
        match self {
            ModelChoice::MorrisLecar(m) => Some(m),
            ModelChoice::Telegraph(_) => None,
        }
    }
}

fn initial_state(config: &Config, model: &dyn Model) -> Result<MarkState> {
    let x0 = MarkState::new(config.initial_state.theta, config.initial_state.nu);
    if x0.theta >= model.mode_count() {
        bail!("initial mode {} outside the model's mode set", x0.theta);
    }
    Ok(x0)
}

fn ensure_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Scientific notation with fixed precision: deterministic across runs.
fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

fn write_file(path: &PathBuf, content: &str) -> Result<()> {
    fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

/// Deterministic reference solution of the coupled Morris-Lecar system from
/// the configured initial state.
fn ml_reference(
    model: &MlModel,
    config: &Config,
    horizon: f64,
) -> pdmp_core::Result<DenseTrajectory<2>> {
    deterministic_ml(
        &model.params,
        config.initial_state.nu,
        config.initial_state.theta as f64 / model.params.n_k as f64,
        horizon,
        1e-3,
    )
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Write per-path time series of the hybrid state on a uniform output grid,
/// plus the deterministic overlay trajectory.
pub fn simulate(config: &Config, out_dir: &Path) -> Result<()> {
    ensure_output_dir(out_dir)?;
    let model = ModelChoice::from_config(config)?;
    let x0 = initial_state(config, model.as_model())?;
    let horizon = config.simulate.horizon.unwrap_or(config.horizon);
    let chars = Characteristics::new(
        model.as_model(),
        config.rate_bound,
        FlowSpec::euler(config.base_step),
    )?;
    let key = StreamKey::new(config.seed).child(keys::SIMULATE);

    let grid = output_grid(horizon, config.simulate.output_step);
    let denom = (model.as_model().mode_count() - 1).max(1) as f64;
    let mut row = vec![0.0; model.as_model().mode_count()];

    for path_idx in 0..config.simulate.paths {
        let trace = sample_trace(&key.child(path_idx as u64), config.rate_bound, horizon)?;
        let skeleton = simulate_path(&chars, &trace, x0)?;
        let mut csv = String::from("t,nu,gate_fraction,up_probability,intensity\n");
        for &t in &grid {
            let (state, _) = evaluate_state(&skeleton, &chars, t)?;
            model.as_model().kernel_row(state.theta, state.nu, &mut row);
            let up: f64 = row[state.theta + 1..].iter().sum();
            let intensity = model.as_model().intensity(state.theta, state.nu);
            writeln!(
                csv,
                "{},{},{},{},{}",
                sci(t),
                sci(state.nu),
                sci(state.theta as f64 / denom),
                sci(up),
                sci(intensity)
            )
            .unwrap();
        }
        write_file(&out_dir.join(format!("trajectory_{path_idx:02}.csv")), &csv)?;
    }

    if let Some(ml) = model.ml() {
        let table = ml_reference(ml, config, horizon)?;
        let mut csv = String::from("t,v,n\n");
        for &t in &grid {
            let [v, n] = table.eval(t)?;
            writeln!(csv, "{},{},{}", sci(t), sci(v), sci(n)).unwrap();
        }
        write_file(&out_dir.join("deterministic.csv"), &csv)?;
    }
    println!(
        "wrote {} trajectories on [0, {horizon}] to {}",
        config.simulate.paths,
        out_dir.display()
    );
    Ok(())
}

fn output_grid(horizon: f64, step: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut j = 0u64;
    loop {
        let t = j as f64 * step;
        if t > horizon {
            break;
        }
        grid.push(t);
        j += 1;
    }
    if *grid.last().unwrap_or(&-1.0) < horizon {
        grid.push(horizon);
    }
    grid
}

// ---------------------------------------------------------------------------
// structural
// ---------------------------------------------------------------------------

/// Estimate the structural parameters (bias constant, strong-error constants
/// for the plain and flow-change couplings, payoff variance) and write them
/// as a config-compatible override block.
pub fn structural(config: &Config, out_dir: &Path) -> Result<()> {
    ensure_output_dir(out_dir)?;
    let model = ModelChoice::from_config(config)?;
    let x0 = initial_state(config, model.as_model())?;
    let est = &config.structural_estimation;
    let key = StreamKey::new(config.seed).child(keys::STRUCTURAL);

    let plain = PdmpFamily {
        model: model.as_model(),
        rate_bound: config.rate_bound,
        horizon: config.horizon,
        initial: x0,
        payoff: Payoff::Nu,
        coupling: FamilyCoupling::Plain,
    };
    let c1 = estimate_c1(&plain, est.c1_step, est.c1_refinement, est.samples, &key.child(0))?;
    let v1_plain = estimate_v1(&plain, est.v1_step, est.v1_refinement, est.samples, &key.child(1))?;
    let var_x = estimate_var(&plain, est.var_step, est.samples, &key.child(2))?;

    let flow_change = PdmpFamily { coupling: FamilyCoupling::FlowChange, ..plain };
    let c1_case3 =
        estimate_c1(&flow_change, est.c1_step, est.c1_refinement, est.samples, &key.child(3))?;
    let v1_case3 =
        estimate_v1(&flow_change, est.v1_step, est.v1_refinement, est.samples, &key.child(4))?;

    let mut out = String::new();
    writeln!(out, "[structural.plain]").unwrap();
    writeln!(out, "alpha = 1.0").unwrap();
    writeln!(out, "beta = 1.0").unwrap();
    writeln!(out, "c1 = {c1:.4}").unwrap();
    writeln!(out, "v1 = {v1_plain:.4}").unwrap();
    writeln!(out, "var_x = {var_x:.4}").unwrap();
    writeln!(out).unwrap();
    writeln!(out, "[structural.case3]").unwrap();
    writeln!(out, "alpha = 1.0").unwrap();
    writeln!(out, "beta = 2.0").unwrap();
    writeln!(out, "c1 = {c1_case3:.4}").unwrap();
    writeln!(out, "v1 = {v1_case3:.4}").unwrap();
    writeln!(out, "var_x = {var_x:.4}").unwrap();

    write_file(&out_dir.join("structural.toml"), &out)?;
    print!("{out}");
    Ok(())
}

// ---------------------------------------------------------------------------
// rmse-table
// ---------------------------------------------------------------------------

pub const RMSE_CSV_HEADER: &str =
    "epsilon,estimator,L,M,h,N,estimate,bias,variance,rmse,cost,wall_time_s";

/// Run one estimator over the configured accuracy ladder with R independent
/// replications per accuracy, and emit one CSV row per accuracy.
pub fn rmse_table(
    config: &Config,
    estimator: EstimatorKind,
    full: bool,
    out_dir: &Path,
) -> Result<()> {
    ensure_output_dir(out_dir)?;
    let model = ModelChoice::from_config(config)?;
    let x0 = initial_state(config, model.as_model())?;
    let root = StreamKey::new(config.seed);

    let model_ref = model.as_model();
    let base = PdmpFamily {
        model: model_ref,
        rate_bound: config.rate_bound,
        horizon: config.horizon,
        initial: x0,
        payoff: Payoff::Nu,
        coupling: FamilyCoupling::Plain,
    };

    // Reference value: config-supplied, or the documented high-accuracy run.
    let truth = match config.ground_truth.mean {
        Some(mean) => {
            println!("ground truth from config: {mean}");
            mean
        }
        None => {
            let plan = McPlan {
                step: config.ground_truth.step(),
                samples: config.ground_truth.samples(),
            };
            let run = run_mc(&plan, &base, &root.child(keys::GROUND_TRUTH))?;
            println!(
                "ground truth from reference run (h = {}, N = {}): {} (se {:.4})",
                plan.step,
                plan.samples,
                run.estimate,
                run.variance.sqrt()
            );
            run.estimate
        }
    };

    let mut epsilons = config.epsilons.clone();
    let mut replications = config.replications;
    if full {
        let deepest = 2f64.powi(-5);
        if epsilons.last().map_or(true, |&e| e > deepest) {
            epsilons.push(deepest);
        }
        replications = replications.max(100);
    }

    let sp = config.structural_for(estimator)?;
    let reference = match (estimator, model.ml()) {
        (EstimatorKind::MlmcCase2, Some(ml)) => Some(ml_reference(ml, config, config.horizon)?),
        (EstimatorKind::MlmcCase2, None) => {
            bail!("estimator mlmc-case2 requires the morris_lecar model")
        }
        _ => None,
    };
    let frozen_law = reference.as_ref().map(|table| FrozenTrajectoryLaw::new(model_ref, table));

    let family = PdmpFamily {
        coupling: match estimator {
            EstimatorKind::Mc | EstimatorKind::MlmcPlain => FamilyCoupling::Plain,
            EstimatorKind::MlmcCase3 => FamilyCoupling::FlowChange,
            EstimatorKind::MlmcCase2 => {
                FamilyCoupling::FrozenTrajectory(frozen_law.as_ref().expect("built above"))
            }
        },
        ..base
    };

    let mut csv = String::from(RMSE_CSV_HEADER);
    csv.push('\n');
    for (eps_idx, &epsilon) in epsilons.iter().enumerate() {
        let run_key = root.child(keys::RMSE).child(estimator as u64).child(eps_idx as u64);
        let row = match estimator {
            EstimatorKind::Mc => {
                let plan = mc_params(epsilon, &sp)?;
                let runs = replicate(replications, |r| run_mc(&plan, &family, &run_key.child(r)))?;
                table_row(epsilon, estimator, None, None, plan.step, plan.samples, &runs, truth)?
            }
            _ => {
                let (m, plan) = select_refinement(epsilon, &sp, config.base_step, 2..=10)?;
                let runs = replicate(replications, |r| run_mlmc(&plan, &family, &run_key.child(r)))?;
                table_row(
                    epsilon,
                    estimator,
                    Some(plan.levels),
                    Some(m),
                    plan.base_step,
                    plan.total_samples.ceil() as u64,
                    &runs,
                    truth,
                )?
            }
        };
        println!("{row}");
        csv.push_str(&row);
        csv.push('\n');
    }
    if replications == 1 {
        csv.push_str("# replications = 1: bias column is a single-draw deviation\n");
    }
    write_file(&out_dir.join(format!("rmse_{}.csv", estimator.label())), &csv)?;
    Ok(())
}

fn replicate<F>(count: usize, mut run: F) -> Result<Vec<EstimatorRun>>
where
    F: FnMut(u64) -> pdmp_core::Result<EstimatorRun>,
{
    (0..count as u64).map(|r| run(r).map_err(anyhow::Error::from)).collect()
}

#[allow(clippy::too_many_arguments)]
fn table_row(
    epsilon: f64,
    estimator: EstimatorKind,
    levels: Option<usize>,
    refinement: Option<u64>,
    step: f64,
    samples: u64,
    runs: &[EstimatorRun],
    truth: f64,
) -> Result<String> {
    let summary = empirical_rmse(runs, truth)?;
    let estimates: Vec<f64> = runs.iter().map(|r| r.estimate).collect();
    let estimate = pdmp_core::estimators::pairwise_sum(&estimates) / runs.len() as f64;
    let mean_cost = runs.iter().map(|r| r.cost as f64).sum::<f64>() / runs.len() as f64;
    let mean_wall = runs.iter().map(|r| r.wall_time_s).sum::<f64>() / runs.len() as f64;
    Ok(format!(
        "{},{},{},{},{},{},{},{},{},{},{},{:.3}",
        sci(epsilon),
        estimator.label(),
        levels.map_or(String::new(), |l| l.to_string()),
        refinement.map_or(String::new(), |m| m.to_string()),
        sci(step),
        samples,
        sci(estimate),
        sci(summary.bias),
        sci(summary.variance),
        sci(summary.rmse),
        sci(mean_cost),
        mean_wall,
    ))
}

// ---------------------------------------------------------------------------
// variance-decay
// ---------------------------------------------------------------------------

/// Mean squared coupled differences per level for the plain and reweighted
/// couplings in log_M scale, with fitted slopes in a footer row.
pub fn variance_decay(config: &Config, out_dir: &Path) -> Result<()> {
    ensure_output_dir(out_dir)?;
    let model = ModelChoice::from_config(config)?;
    let x0 = initial_state(config, model.as_model())?;
    let vd = &config.variance_decay;
    let key = StreamKey::new(config.seed).child(keys::DECAY);

    let base = PdmpFamily {
        model: model.as_model(),
        rate_bound: config.rate_bound,
        horizon: config.horizon,
        initial: x0,
        payoff: Payoff::Nu,
        coupling: FamilyCoupling::Plain,
    };

    let plain_curve =
        variance_decay_curve(&base, vd.step, vd.refinement, vd.levels, vd.samples, &key.child(0))?;

    let case2_curve = if vd.include_case2 {
        let ml = model.ml().ok_or_else(|| {
            anyhow::anyhow!("variance_decay.include_case2 requires the morris_lecar model")
        })?;
        let table = ml_reference(ml, config, config.horizon)?;
        let law = FrozenTrajectoryLaw::new(model.as_model(), &table);
        let family = PdmpFamily { coupling: FamilyCoupling::FrozenTrajectory(&law), ..base };
        Some(variance_decay_curve(
            &family,
            vd.step,
            vd.refinement,
            vd.levels,
            vd.samples,
            &key.child(1),
        )?)
    } else {
        None
    };

    let case3_family = PdmpFamily { coupling: FamilyCoupling::FlowChange, ..base };
    let case3_curve = variance_decay_curve(
        &case3_family,
        vd.step,
        vd.refinement,
        vd.levels,
        vd.samples,
        &key.child(2),
    )?;

    let log_m = (vd.refinement as f64).ln();
    let log = |msd: f64| if msd > 0.0 { sci(msd.ln() / log_m) } else { String::new() };

    let mut csv = String::from("l,logM_msd_plain,logM_msd_case2,logM_msd_case3\n");
    for i in 0..vd.levels {
        let case2 = case2_curve.as_ref().map_or(String::new(), |c| log(c[i].1));
        writeln!(csv, "{},{},{},{}", i + 1, log(plain_curve[i].1), case2, log(case3_curve[i].1))
            .unwrap();
    }
    let slope = |curve: Option<&[(usize, f64)]>| {
        curve
            .and_then(|c| fit_log_slope(c, vd.refinement))
            .map_or(String::new(), |s| format!("{s:.4}"))
    };
    writeln!(
        csv,
        "slope,{},{},{}",
        slope(Some(&plain_curve)),
        slope(case2_curve.as_deref()),
        slope(Some(&case3_curve)),
    )
    .unwrap();

    write_file(&out_dir.join("variance_decay.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

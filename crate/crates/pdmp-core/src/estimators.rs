//! Classical and multilevel Monte Carlo estimators with closed-form optimal
//! planning from structural parameters.
//!
//! Planning follows the complexity-minimizing parameter choices for linear
//! Monte Carlo estimators: the classical pair (h, N) and the multilevel
//! (L, q, N) allocation over geometric steps `h_l = h* M^{-(l-1)}`. The
//! refinement factor M is chosen by grid search over the plan's model
//! complexity, which reproduces the reference parameter tables.
//!
//! Replications and levels are independent tasks keyed by derived substreams;
//! reductions use a fixed-shape pairwise tree so reported estimates do not
//! depend on thread scheduling.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{invalid, PdmpError, Result};
use crate::flow::FlowSpec;
use crate::pdp::{
    evaluate_state, simulate_coupled, simulate_path, Characteristics, MarkState, Model, Payoff,
};
use crate::reweight::{
    coupled_weighted_pair, weighted_single, CouplingSpec, FrozenTrajectoryLaw, ModeOnlyLaw,
};
use crate::rng::{sample_trace, StreamKey};

/// Label recorded in reports for the deterministic reduction tree.
pub const REDUCTION_SHAPE: &str = "pairwise-v1";

/// Structural parameters (weak order, strong order, bias constant,
/// strong-error constant, payoff variance) driving optimal planning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralParams {
    pub alpha: f64,
    pub beta: f64,
    pub c1: f64,
    pub v1: f64,
    pub var_x: f64,
}

impl StructuralParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.v1 > 0.0 && self.var_x > 0.0) {
            return Err(invalid(format!("structural parameters out of range: {self:?}")));
        }
        Ok(())
    }

    /// Ratio sqrt(V1 / Var(X)) entering the allocation formulas.
    pub fn rho(&self) -> f64 {
        (self.v1 / self.var_x).sqrt()
    }
}

/// Classical Monte Carlo plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McPlan {
    pub step: f64,
    pub samples: u64,
}

/// Optimal classical Monte Carlo parameters for a target root-mean-square
/// error: `h = (1+2a)^{-1/(2a)} (eps/|c1|)^{1/a}` and
/// `N = (1 + 1/(2a)) Var(X) (1 + rho h^{b/2})^2 / eps^2`, rounded up.
pub fn mc_params(epsilon: f64, sp: &StructuralParams) -> Result<McPlan> {
    sp.validate()?;
    if !(epsilon > 0.0) {
        return Err(invalid(format!("target rmse must be positive, got {epsilon}")));
    }
    if sp.c1 == 0.0 {
        return Err(invalid("bias model degenerate: c1 = 0"));
    }
    let a = sp.alpha;
    let h = (1.0 + 2.0 * a).powf(-1.0 / (2.0 * a)) * (epsilon / sp.c1.abs()).powf(1.0 / a);
    let n = (1.0 + 1.0 / (2.0 * a)) * sp.var_x * (1.0 + sp.rho() * h.powf(sp.beta / 2.0)).powi(2)
        / (epsilon * epsilon);
    Ok(McPlan { step: h, samples: n.ceil() as u64 })
}

/// Multilevel plan: levels, geometric steps, sample allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmcPlan {
    pub levels: usize,
    pub refinement: u64,
    pub base_step: f64,
    /// Normalized allocation q_1..q_L.
    pub allocation: Vec<f64>,
    /// Real-valued optimal total sample count.
    pub total_samples: f64,
    /// Per-level counts `ceil(N q_l)`.
    pub level_samples: Vec<u64>,
    /// Per-level steps `h* M^{-(l-1)}`.
    pub level_steps: Vec<f64>,
}

impl MlmcPlan {
    /// Cell count `n_l = M^{l-1}` with the convention `n_0 = 0`.
    fn cells(&self, l: usize) -> f64 {
        if l == 0 {
            0.0
        } else {
            (self.refinement as f64).powi(l as i32 - 1)
        }
    }

    /// Model complexity `N * sum_j q_j (n_{j-1} + n_j)`; dividing by the base
    /// step gives the expected time-step count of one estimator realization.
    pub fn model_complexity(&self) -> f64 {
        let weighted: f64 = (1..=self.levels)
            .map(|j| self.allocation[j - 1] * (self.cells(j - 1) + self.cells(j)))
            .sum();
        self.total_samples * weighted
    }
}

/// Optimal multilevel parameters for a target root-mean-square error at fixed
/// base step and refinement factor. Fails with [`PdmpError::PlanDegenerate`]
/// when the level formula yields fewer than two levels; the caller should fall
/// back to the classical plan.
pub fn mlmc_params(epsilon: f64, sp: &StructuralParams, h_star: f64, m: u64) -> Result<MlmcPlan> {
    sp.validate()?;
    if !(epsilon > 0.0) {
        return Err(invalid(format!("target rmse must be positive, got {epsilon}")));
    }
    if sp.c1 == 0.0 {
        return Err(invalid("bias model degenerate: c1 = 0"));
    }
    if !(h_star > 0.0) || m < 2 {
        return Err(invalid(format!("need h* > 0 and M >= 2, got {h_star}, {m}")));
    }
    let a = sp.alpha;
    let b = sp.beta;
    let log_m = (m as f64).ln();
    let amp = (1.0 + 2.0 * a).sqrt();
    let levels_real =
        1.0 + (sp.c1.abs().powf(1.0 / a) * h_star).ln() / log_m + (amp / epsilon).ln() / (a * log_m);
    let levels = levels_real.ceil();
    if !(levels >= 2.0) {
        return Err(PdmpError::PlanDegenerate(format!(
            "level formula gives L = {levels} at eps = {epsilon}, M = {m}"
        )));
    }
    let levels = levels as usize;

    let rho_h = sp.rho() * h_star.powf(b / 2.0);
    let cells = |l: usize| -> f64 {
        if l == 0 {
            0.0
        } else {
            (m as f64).powi(l as i32 - 1)
        }
    };
    // inverse cells with the n_0^{-1} = 0 convention
    let inv_cells_pow = |l: usize| -> f64 {
        if l == 0 {
            0.0
        } else {
            cells(l).powf(-b / 2.0)
        }
    };

    let mut allocation = Vec::with_capacity(levels);
    allocation.push(1.0 + rho_h);
    for j in 2..=levels {
        allocation.push(
            rho_h * (inv_cells_pow(j - 1) + inv_cells_pow(j)) / (cells(j - 1) + cells(j)).sqrt(),
        );
    }
    let norm: f64 = allocation.iter().sum();
    for q in &mut allocation {
        *q /= norm;
    }

    let series: f64 = (1..=levels)
        .map(|j| (inv_cells_pow(j - 1) + inv_cells_pow(j)) * (cells(j - 1) + cells(j)).sqrt())
        .sum();
    let weighted_cells: f64 =
        (1..=levels).map(|j| allocation[j - 1] * (cells(j - 1) + cells(j))).sum();
    let total_samples = (1.0 + 1.0 / (2.0 * a)) * sp.var_x * (1.0 + rho_h * series).powi(2)
        / (epsilon * epsilon * weighted_cells);

    let level_samples =
        allocation.iter().map(|q| (total_samples * q).ceil() as u64).collect::<Vec<_>>();
    let level_steps =
        (1..=levels).map(|l| h_star * (m as f64).powi(-(l as i32 - 1))).collect::<Vec<_>>();

    Ok(MlmcPlan {
        levels,
        refinement: m,
        base_step: h_star,
        allocation,
        total_samples,
        level_samples,
        level_steps,
    })
}

/// Choose the refinement factor by grid search: the M in `range` whose plan
/// minimizes the model complexity, ties broken toward smaller M. Candidates
/// with degenerate plans are skipped.
pub fn select_refinement(
    epsilon: f64,
    sp: &StructuralParams,
    h_star: f64,
    range: impl IntoIterator<Item = u64>,
) -> Result<(u64, MlmcPlan)> {
    let mut best: Option<(f64, u64, MlmcPlan)> = None;
    for m in range {
        let plan = match mlmc_params(epsilon, sp, h_star, m) {
            Ok(plan) => plan,
            Err(PdmpError::PlanDegenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        let complexity = plan.model_complexity();
        if best.as_ref().map_or(true, |(c, _, _)| complexity < *c) {
            best = Some((complexity, m, plan));
        }
    }
    best.map(|(_, m, plan)| (m, plan))
        .ok_or_else(|| PdmpError::PlanDegenerate("no refinement factor yields a valid plan".into()))
}

/// One sample of the approximating family: payoff value (weighted where the
/// coupling reweights) and the Euler sub-steps it executed.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub value: f64,
    pub cost: u64,
}

/// A family `(X_h, h > 0)` that can draw single samples and coupled pairs
/// from derived substreams.
pub trait SampleFamily: Sync {
    fn single(&self, step: f64, key: &StreamKey) -> Result<Sample>;
    fn coupled(&self, fine_step: f64, coarse_step: f64, key: &StreamKey) -> Result<(Sample, Sample)>;

    /// Strong order of the coupled difference (1 plain, 2 reweighted).
    fn strong_order(&self) -> f64;

    /// Weak order of the bias expansion.
    fn weak_order(&self) -> f64 {
        1.0
    }
}

/// Coupling used by a PDMP sample family.
pub enum FamilyCoupling<'a> {
    /// Fine and coarse paths replay the trace independently.
    Plain,
    /// Mode-only auxiliary characteristics shared by both legs.
    ModeAuxiliary(&'a ModeOnlyLaw),
    /// Characteristics frozen along a deterministic trajectory.
    FrozenTrajectory(&'a FrozenTrajectoryLaw<'a>),
    /// Coarse leg rides the fine skeleton with the coarse flow.
    FlowChange,
}

/// The approximating family of a PDMP terminal-value payoff.
pub struct PdmpFamily<'a> {
    pub model: &'a dyn Model,
    pub rate_bound: f64,
    pub horizon: f64,
    pub initial: MarkState,
    pub payoff: Payoff,
    pub coupling: FamilyCoupling<'a>,
}

impl PdmpFamily<'_> {
    fn plain_single(&self, step: f64, key: &StreamKey) -> Result<Sample> {
        let trace = sample_trace(key, self.rate_bound, self.horizon)?;
        let chars = Characteristics::new(self.model, self.rate_bound, FlowSpec::euler(step))?;
        let skel = simulate_path(&chars, &trace, self.initial)?;
        let (state, eval_steps) = evaluate_state(&skel, &chars, self.horizon)?;
        Ok(Sample { value: self.payoff.eval(state), cost: skel.euler_steps + eval_steps })
    }
}

impl SampleFamily for PdmpFamily<'_> {
    fn single(&self, step: f64, key: &StreamKey) -> Result<Sample> {
        match &self.coupling {
            FamilyCoupling::Plain | FamilyCoupling::FlowChange => self.plain_single(step, key),
            FamilyCoupling::ModeAuxiliary(law) => {
                let trace = sample_trace(key, self.rate_bound, self.horizon)?;
                let s = weighted_single(
                    self.model,
                    self.rate_bound,
                    *law,
                    &trace,
                    self.initial,
                    step,
                    self.payoff,
                )?;
                Ok(Sample { value: s.weighted_value(), cost: s.euler_steps })
            }
            FamilyCoupling::FrozenTrajectory(law) => {
                let trace = sample_trace(key, self.rate_bound, self.horizon)?;
                let s = weighted_single(
                    self.model,
                    self.rate_bound,
                    *law,
                    &trace,
                    self.initial,
                    step,
                    self.payoff,
                )?;
                Ok(Sample { value: s.weighted_value(), cost: s.euler_steps })
            }
        }
    }

    fn coupled(&self, fine_step: f64, coarse_step: f64, key: &StreamKey) -> Result<(Sample, Sample)> {
        let trace = sample_trace(key, self.rate_bound, self.horizon)?;
        match &self.coupling {
            FamilyCoupling::Plain => {
                let fine_chars =
                    Characteristics::new(self.model, self.rate_bound, FlowSpec::euler(fine_step))?;
                let coarse_chars =
                    Characteristics::new(self.model, self.rate_bound, FlowSpec::euler(coarse_step))?;
                let (f, c) = simulate_coupled(&fine_chars, &coarse_chars, &trace, self.initial)?;
                let (fs, f_extra) = evaluate_state(&f, &fine_chars, self.horizon)?;
                let (cs, c_extra) = evaluate_state(&c, &coarse_chars, self.horizon)?;
                Ok((
                    Sample { value: self.payoff.eval(fs), cost: f.euler_steps + f_extra },
                    Sample { value: self.payoff.eval(cs), cost: c.euler_steps + c_extra },
                ))
            }
            FamilyCoupling::ModeAuxiliary(law) => {
                let (f, c) = coupled_weighted_pair(
                    self.model,
                    self.rate_bound,
                    &CouplingSpec::ModeAuxiliary(law),
                    &trace,
                    self.initial,
                    fine_step,
                    coarse_step,
                    self.payoff,
                )?;
                Ok((
                    Sample { value: f.weighted_value(), cost: f.euler_steps },
                    Sample { value: c.weighted_value(), cost: c.euler_steps },
                ))
            }
            FamilyCoupling::FrozenTrajectory(law) => {
                let (f, c) = coupled_weighted_pair(
                    self.model,
                    self.rate_bound,
                    &CouplingSpec::FrozenTrajectory(law),
                    &trace,
                    self.initial,
                    fine_step,
                    coarse_step,
                    self.payoff,
                )?;
                Ok((
                    Sample { value: f.weighted_value(), cost: f.euler_steps },
                    Sample { value: c.weighted_value(), cost: c.euler_steps },
                ))
            }
            FamilyCoupling::FlowChange => {
                let (f, c) = coupled_weighted_pair(
                    self.model,
                    self.rate_bound,
                    &CouplingSpec::FlowChange,
                    &trace,
                    self.initial,
                    fine_step,
                    coarse_step,
                    self.payoff,
                )?;
                Ok((
                    Sample { value: f.weighted_value(), cost: f.euler_steps },
                    Sample { value: c.weighted_value(), cost: c.euler_steps },
                ))
            }
        }
    }

    fn strong_order(&self) -> f64 {
        match self.coupling {
            FamilyCoupling::Plain => 1.0,
            _ => 2.0,
        }
    }
}

/// Fixed-shape pairwise summation; the reduction tree depends only on the
/// slice length, so results are identical for any thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

fn pairwise_mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// One realization of an estimator: the estimate, its empirical variance
/// (variance of the estimator, not of the samples), the exact Euler sub-step
/// count and the wall time.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorRun {
    pub estimate: f64,
    pub variance: f64,
    pub cost: u64,
    pub wall_time_s: f64,
}

/// Classical Monte Carlo: mean of `samples` independent draws of `X_h`.
pub fn run_mc(plan: &McPlan, family: &dyn SampleFamily, key: &StreamKey) -> Result<EstimatorRun> {
    if plan.samples == 0 {
        return Err(invalid("Monte Carlo plan needs at least one sample"));
    }
    let start = Instant::now();
    let samples: Vec<Sample> = (0..plan.samples)
        .into_par_iter()
        .map(|i| family.single(plan.step, &key.child(i)))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let mean = pairwise_mean(&values);
    let n = values.len() as f64;
    let devs: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let variance = if values.len() > 1 { pairwise_sum(&devs) / (n * (n - 1.0)) } else { 0.0 };
    let cost = samples.iter().map(|s| s.cost).sum();
    Ok(EstimatorRun { estimate: mean, variance, cost, wall_time_s: start.elapsed().as_secs_f64() })
}

/// Multilevel Monte Carlo: level 1 averages plain samples at the base step,
/// level l >= 2 averages coupled differences at `(h_l, h_{l-1})`, each sample
/// on a fresh derived stream, independent across levels and samples.
pub fn run_mlmc(
    plan: &MlmcPlan,
    family: &dyn SampleFamily,
    key: &StreamKey,
) -> Result<EstimatorRun> {
    if plan.levels < 2 {
        return Err(invalid("multilevel plan needs at least two levels"));
    }
    if plan.level_samples.iter().any(|&n| n == 0) {
        return Err(invalid("multilevel plan has an empty level"));
    }
    let start = Instant::now();
    let mut estimate = 0.0;
    let mut variance = 0.0;
    let mut cost = 0u64;

    for level in 1..=plan.levels {
        let level_key = key.child(level as u64);
        let n = plan.level_samples[level - 1];
        let diffs: Vec<Sample> = if level == 1 {
            (0..n)
                .into_par_iter()
                .map(|i| family.single(plan.base_step, &level_key.child(i)))
                .collect::<Result<Vec<_>>>()?
        } else {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let (fine, coarse) = family.coupled(
                        plan.level_steps[level - 1],
                        plan.level_steps[level - 2],
                        &level_key.child(i),
                    )?;
                    Ok(Sample { value: fine.value - coarse.value, cost: fine.cost + coarse.cost })
                })
                .collect::<Result<Vec<_>>>()?
        };
        let values: Vec<f64> = diffs.iter().map(|s| s.value).collect();
        let mean = pairwise_mean(&values);
        let nf = values.len() as f64;
        let devs: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        if values.len() > 1 {
            variance += pairwise_sum(&devs) / (nf * (nf - 1.0));
        }
        estimate += mean;
        cost += diffs.iter().map(|s| s.cost).sum::<u64>();
    }

    Ok(EstimatorRun { estimate, variance, cost, wall_time_s: start.elapsed().as_secs_f64() })
}

/// Bias, variance and root-mean-square error over independent replications of
/// an estimator against an externally supplied true value:
/// `bias = mean(Y^k) - E[X]`, `variance = mean(v^k)`,
/// `rmse = sqrt(bias^2 + variance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseSummary {
    pub bias: f64,
    pub variance: f64,
    pub rmse: f64,
}

pub fn empirical_rmse(runs: &[EstimatorRun], true_value: f64) -> Result<RmseSummary> {
    if runs.is_empty() {
        return Err(invalid("empirical rmse needs at least one replication"));
    }
    let estimates: Vec<f64> = runs.iter().map(|r| r.estimate).collect();
    let variances: Vec<f64> = runs.iter().map(|r| r.variance).collect();
    let bias = pairwise_mean(&estimates) - true_value;
    let variance = pairwise_mean(&variances);
    Ok(RmseSummary { bias, variance, rmse: (bias * bias + variance).sqrt() })
}

/// Strong-error constant estimate
/// `V1 = (1 + M^{-b/2})^{-2} h^{-b} mean[(X_h - X_{h/M})^2]`
/// over `n` coupled pairs.
pub fn estimate_v1(
    family: &dyn SampleFamily,
    h: f64,
    m: u64,
    n: u64,
    key: &StreamKey,
) -> Result<f64> {
    let beta = family.strong_order();
    let sq: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (fine, coarse) = family.coupled(h / m as f64, h, &key.child(i))?;
            Ok((fine.value - coarse.value) * (fine.value - coarse.value))
        })
        .collect::<Result<Vec<_>>>()?;
    let msd = pairwise_mean(&sq);
    Ok((1.0 + (m as f64).powf(-beta / 2.0)).powi(-2) * h.powf(-beta) * msd)
}

/// Bias constant estimate `c1 = (1 - M^{-a})^{-1} h^{-a} mean[X_h - X_{h/M}]`
/// over `n` coupled pairs, so that a positive bias of the coarse step yields a
/// positive constant.
pub fn estimate_c1(
    family: &dyn SampleFamily,
    h: f64,
    m: u64,
    n: u64,
    key: &StreamKey,
) -> Result<f64> {
    let alpha = family.weak_order();
    let diffs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (fine, coarse) = family.coupled(h / m as f64, h, &key.child(i))?;
            Ok(coarse.value - fine.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = pairwise_mean(&diffs);
    Ok((1.0 - (m as f64).powf(-alpha)).recip() * h.powf(-alpha) * mean)
}

/// Sample variance of `X_h` over `n` independent draws.
pub fn estimate_var(family: &dyn SampleFamily, h: f64, n: u64, key: &StreamKey) -> Result<f64> {
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| Ok(family.single(h, &key.child(i))?.value))
        .collect::<Result<Vec<_>>>()?;
    let mean = pairwise_mean(&values);
    let devs: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    Ok(pairwise_sum(&devs) / (values.len() as f64 - 1.0))
}

/// Mean squared coupled difference per level, `h_l = h M^{-(l-1)}`, ready for
/// slope regression in `log_M` scale.
pub fn variance_decay_curve(
    family: &dyn SampleFamily,
    h: f64,
    m: u64,
    l_max: usize,
    n: u64,
    key: &StreamKey,
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::with_capacity(l_max);
    for level in 1..=l_max {
        let fine = h * (m as f64).powi(-(level as i32 - 1));
        let coarse = h * (m as f64).powi(-(level as i32 - 2));
        let level_key = key.child(level as u64);
        let sq: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (f, c) = family.coupled(fine, coarse, &level_key.child(i))?;
                Ok((f.value - c.value) * (f.value - c.value))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((level, pairwise_mean(&sq)));
    }
    Ok(out)
}

/// Least-squares slope of `log_M(msd)` against the level index; `None` with
/// fewer than two usable points.
pub fn fit_log_slope(curve: &[(usize, f64)], m: u64) -> Option<f64> {
    let log_m = (m as f64).ln();
    let pts: Vec<(f64, f64)> =
        curve.iter().filter(|(_, v)| *v > 0.0).map(|(l, v)| (*l as f64, v.ln() / log_m)).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

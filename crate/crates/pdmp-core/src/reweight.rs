//! Corrective-weight machinery.
//!
//! An auxiliary process whose jump law is blind to the continuous coordinate
//! jumps at the same proposals regardless of the flow used to transport it, so
//! fine and coarse replays share their discrete skeleton exactly. The
//! multiplicative weight computed here corrects the change of jump law so that
//! weighted expectations under the auxiliary process equal expectations under
//! the target characteristics. The same mechanism, applied to a change of
//! flow only, yields the coarse leg that rides the fine path's skeleton.
//!
//! Weight products run over every proposal of the trace, so they are
//! accumulated in log space and exponentiated once; in linear space the
//! hundreds of factors of a long horizon underflow.

use crate::error::{invalid, PdmpError, Result};
use crate::flow::{DenseTrajectory, FlowSpec};
use crate::pdp::{
    simulate_path, Characteristics, MarkState, Model, PathSkeleton, Payoff, SegmentFlow,
};
use crate::rng::ThinningTrace;

/// A jump law depending only on the mode and absolute time; positivity bounds
/// are required for the change of measure to stay non-degenerate.
pub trait AuxJumpLaw: Sync {
    fn intensity(&self, theta: usize, t: f64) -> f64;
    fn kernel_row(&self, theta: usize, t: f64, row: &mut [f64]);

    /// Constant bounds (rho, lambda_min, lambda_max) when the law has them;
    /// used for the per-sample weight envelope check.
    fn envelope_bounds(&self) -> Option<EnvelopeBounds> {
        None
    }
}

/// Bounds appearing in the weight envelope
/// `(rho * (lambda_min / rate_bound) * (1 - lambda_max / rate_bound))^{-N*}`.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeBounds {
    pub rho: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Mode-only auxiliary law: per-mode constant intensity and kernel rows.
#[derive(Debug, Clone)]
pub struct ModeOnlyLaw {
    intensity: Vec<f64>,
    kernel: Vec<Vec<f64>>,
    bounds: EnvelopeBounds,
}

impl ModeOnlyLaw {
    pub fn new(intensity: Vec<f64>, kernel: Vec<Vec<f64>>) -> Result<Self> {
        if intensity.is_empty() || intensity.len() != kernel.len() {
            return Err(invalid("auxiliary law needs one intensity and kernel row per mode"));
        }
        let lambda_min = intensity.iter().cloned().fold(f64::INFINITY, f64::min);
        let lambda_max = intensity.iter().cloned().fold(0.0_f64, f64::max);
        if !(lambda_min > 0.0) {
            return Err(invalid("auxiliary intensities must be positive"));
        }
        let mut rho = f64::INFINITY;
        for row in &kernel {
            if row.len() != intensity.len() {
                return Err(invalid("auxiliary kernel rows must span the mode set"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(invalid(format!("auxiliary kernel row sums to {sum}")));
            }
            for &p in row.iter().filter(|&&p| p > 0.0) {
                rho = rho.min(p);
            }
        }
        let bounds = EnvelopeBounds { rho, lambda_min, lambda_max };
        Ok(ModeOnlyLaw { intensity, kernel, bounds })
    }

    /// The unit-rate birth-death auxiliary used for the ion-channel model:
    /// `lambda = 1`, up-probability `(n_k - theta) / n_k`.
    pub fn uniform_birth_death(n_k: usize) -> Self {
        let modes = n_k + 1;
        let mut kernel = vec![vec![0.0; modes]; modes];
        for theta in 0..modes {
            if theta < n_k {
                kernel[theta][theta + 1] = (n_k - theta) as f64 / n_k as f64;
            }
            if theta > 0 {
                kernel[theta][theta - 1] = theta as f64 / n_k as f64;
            }
        }
        ModeOnlyLaw::new(vec![1.0; modes], kernel).expect("birth-death law is valid")
    }
}

impl AuxJumpLaw for ModeOnlyLaw {
    fn intensity(&self, theta: usize, _t: f64) -> f64 {
        self.intensity[theta]
    }

    fn kernel_row(&self, theta: usize, _t: f64, row: &mut [f64]) {
        row.copy_from_slice(&self.kernel[theta]);
    }

    fn envelope_bounds(&self) -> Option<EnvelopeBounds> {
        Some(self.bounds)
    }
}

/// Target characteristics frozen along a deterministic reference trajectory:
/// `lambda-tilde(theta, t) = lambda(theta, v(t))` and the kernel likewise,
/// with `v` the first component of the reference solution.
pub struct FrozenTrajectoryLaw<'a> {
    model: &'a dyn Model,
    reference: &'a DenseTrajectory<2>,
}

impl<'a> FrozenTrajectoryLaw<'a> {
    pub fn new(model: &'a dyn Model, reference: &'a DenseTrajectory<2>) -> Self {
        FrozenTrajectoryLaw { model, reference }
    }

    fn v_at(&self, t: f64) -> f64 {
        self.reference.eval(t).expect("reference trajectory covers the horizon")[0]
    }
}

impl AuxJumpLaw for FrozenTrajectoryLaw<'_> {
    fn intensity(&self, theta: usize, t: f64) -> f64 {
        self.model.intensity(theta, self.v_at(t))
    }

    fn kernel_row(&self, theta: usize, t: f64, row: &mut [f64]) {
        self.model.kernel_row(theta, self.v_at(t), row);
    }
}

/// Discrete skeleton of an auxiliary path: accepted proposals and modes plus
/// the auxiliary intensities and kernel probabilities realized along the way
/// (the denominators of the corrective weight).
#[derive(Debug, Clone)]
pub struct AuxSkeleton {
    pub horizon: f64,
    pub initial_theta: usize,
    pub jump_times: Vec<f64>,
    pub accepted_indices: Vec<usize>,
    pub modes: Vec<usize>,
    pub aux_intensity: Vec<f64>,
    pub aux_kernel_prob: Vec<f64>,
}

impl AuxSkeleton {
    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }
}

/// Thin the trace with an auxiliary jump law. The law ignores the continuous
/// coordinate, so no flow is involved and the skeleton is shared by every
/// transport step size.
pub fn simulate_aux_skeleton(
    law: &dyn AuxJumpLaw,
    mode_count: usize,
    rate_bound: f64,
    trace: &ThinningTrace,
    theta0: usize,
) -> Result<AuxSkeleton> {
    if theta0 >= mode_count {
        return Err(invalid(format!("mode {theta0} outside mode set of size {mode_count}")));
    }
    let mut row = vec![0.0; mode_count];
    let mut theta = theta0;
    let mut jump_times = Vec::new();
    let mut accepted_indices = Vec::new();
    let mut modes = Vec::new();
    let mut aux_intensity = Vec::with_capacity(trace.len());
    let mut aux_kernel_prob = Vec::new();
    let mut jumps = 0usize;

    for (k, &t_k) in trace.poisson_times.iter().enumerate() {
        let lam = law.intensity(theta, t_k);
        if !(lam > 0.0) || lam >= rate_bound {
            return Err(PdmpError::DegenerateWeight(format!(
                "auxiliary intensity {lam} outside (0, {rate_bound}) at t = {t_k}"
            )));
        }
        aux_intensity.push(lam);
        if trace.uniforms_accept[k] * rate_bound <= lam {
            law.kernel_row(theta, t_k, &mut row);
            let next = crate::pdp::inverse_cdf_select(&row, trace.uniforms_mark[jumps])?;
            jumps += 1;
            aux_kernel_prob.push(row[next]);
            theta = next;
            jump_times.push(t_k);
            accepted_indices.push(k);
            modes.push(theta);
        }
    }

    Ok(AuxSkeleton {
        horizon: trace.horizon,
        initial_theta: theta0,
        jump_times,
        accepted_indices,
        modes,
        aux_intensity,
        aux_kernel_prob,
    })
}

/// A terminal payoff together with its corrective weight. The estimator
/// consumes `value * weight`; the weight equals one exactly when auxiliary and
/// target characteristics coincide.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSample {
    pub value: f64,
    pub weight: f64,
    pub euler_steps: u64,
}

impl WeightedSample {
    pub fn weighted_value(&self) -> f64 {
        self.value * self.weight
    }
}

struct LogWeight {
    sum: f64,
}

impl LogWeight {
    fn new() -> Self {
        LogWeight { sum: 0.0 }
    }

    fn mul_ratio(&mut self, numerator: f64, denominator: f64, what: &str) -> Result<()> {
        if !(numerator > 0.0) || !numerator.is_finite() {
            return Err(PdmpError::DegenerateWeight(format!("{what} numerator factor {numerator}")));
        }
        if !(denominator > 0.0) || !denominator.is_finite() {
            return Err(PdmpError::DegenerateWeight(format!(
                "{what} denominator factor {denominator}"
            )));
        }
        self.sum += numerator.ln() - denominator.ln();
        Ok(())
    }

    fn finish(self, envelope_log: Option<f64>) -> Result<f64> {
        if let Some(bound) = envelope_log {
            if self.sum > bound + 1e-9 {
                return Err(PdmpError::DegenerateWeight(format!(
                    "log-weight {} exceeds theoretical envelope {bound}",
                    self.sum
                )));
            }
        }
        let w = self.sum.exp();
        if !(w > 0.0) || !w.is_finite() {
            return Err(PdmpError::DegenerateWeight(format!("weight {w} not positive finite")));
        }
        Ok(w)
    }
}

/// Transport an auxiliary skeleton with the given flow and compute the
/// corrective weight against the target characteristics.
///
/// Per segment, the weight collects the target acceptance factor at the
/// accepted proposal, the target rejection factors at the rejected proposals,
/// and the target kernel probability of the realized transition, divided by
/// the corresponding auxiliary factors recorded in the skeleton. All products
/// are empty for a trace without proposals, giving weight one.
pub fn weight_mode_auxiliary(
    model: &dyn Model,
    rate_bound: f64,
    flow: FlowSpec,
    law: &dyn AuxJumpLaw,
    skeleton: &AuxSkeleton,
    trace: &ThinningTrace,
    x0: MarkState,
    payoff: Payoff,
) -> Result<WeightedSample> {
    let chars = Characteristics::new(model, rate_bound, flow)?;
    let mut row = vec![0.0; model.mode_count()];
    let mut logw = LogWeight::new();
    let mut steps = 0u64;

    let mut seg_mode = x0.theta;
    let mut seg_start_t = 0.0;
    let mut seg_start_nu = x0.nu;
    let mut segment = SegmentFlow::new(model, chars.flow, seg_mode, seg_start_nu);
    let mut jump_idx = 0usize;

    for (k, &t_k) in trace.poisson_times.iter().enumerate() {
        let nu_at = segment.eval(t_k - seg_start_t);
        let lam = model.intensity(seg_mode, nu_at);
        if lam > rate_bound {
            return Err(PdmpError::RateBoundViolation {
                theta: seg_mode,
                nu: nu_at,
                t: t_k,
                lambda: lam,
                bound: rate_bound,
            });
        }
        let aux_lam = skeleton.aux_intensity[k];
        let accepted = skeleton.accepted_indices.get(jump_idx) == Some(&k);
        if accepted {
            logw.mul_ratio(lam / rate_bound, aux_lam / rate_bound, "acceptance")?;
            model.kernel_row(seg_mode, nu_at, &mut row);
            let next = skeleton.modes[jump_idx];
            logw.mul_ratio(row[next], skeleton.aux_kernel_prob[jump_idx], "kernel")?;
            steps += segment.steps_taken();
            seg_mode = next;
            seg_start_t = t_k;
            seg_start_nu = nu_at;
            segment = SegmentFlow::new(model, chars.flow, seg_mode, seg_start_nu);
            jump_idx += 1;
        } else {
            logw.mul_ratio(1.0 - lam / rate_bound, 1.0 - aux_lam / rate_bound, "rejection")?;
        }
    }

    let nu_terminal = segment.eval(trace.horizon - seg_start_t);
    steps += segment.steps_taken();

    let envelope = law.envelope_bounds().map(|b| {
        -(trace.len() as f64)
            * (b.rho * (b.lambda_min / rate_bound) * (1.0 - b.lambda_max / rate_bound)).ln()
    });
    let weight = logw.finish(envelope)?;
    Ok(WeightedSample {
        value: payoff.eval(MarkState::new(seg_mode, nu_terminal)),
        weight,
        euler_steps: steps,
    })
}

/// Ride an existing path skeleton with an alternative flow and compute the
/// flow-change corrective weight.
///
/// The auxiliary coordinate starts at the same initial point and is
/// transported segment by segment with the alternative flow; the weight is the
/// ratio of kernel and thinning factors evaluated along the alternative
/// transport over the factors recorded by the original simulation, so the
/// denominators are bit-identical to the accept/reject decisions that built
/// the skeleton. Returns the payoff at the transported terminal state.
pub fn weight_flow_change(
    model: &dyn Model,
    rate_bound: f64,
    skeleton: &PathSkeleton,
    trace: &ThinningTrace,
    alt_flow: FlowSpec,
    payoff: Payoff,
) -> Result<WeightedSample> {
    let chars = Characteristics::new(model, rate_bound, alt_flow)?;
    let mut row = vec![0.0; model.mode_count()];
    let mut logw = LogWeight::new();
    let mut steps = 0u64;

    let mut seg_mode = skeleton.initial.theta;
    let mut seg_start_t = 0.0;
    let mut mu = skeleton.initial.nu;
    let mut segment = SegmentFlow::new(model, chars.flow, seg_mode, mu);
    let mut jump_idx = 0usize;

    for (k, &t_k) in trace.poisson_times.iter().enumerate() {
        let mu_at = segment.eval(t_k - seg_start_t);
        let lam_alt = model.intensity(seg_mode, mu_at);
        if lam_alt > rate_bound {
            return Err(PdmpError::RateBoundViolation {
                theta: seg_mode,
                nu: mu_at,
                t: t_k,
                lambda: lam_alt,
                bound: rate_bound,
            });
        }
        let lam_rec = skeleton.proposal_intensity[k];
        let accepted = skeleton.accepted_indices.get(jump_idx) == Some(&k);
        if accepted {
            logw.mul_ratio(lam_alt / rate_bound, lam_rec / rate_bound, "acceptance")?;
            model.kernel_row(seg_mode, mu_at, &mut row);
            let next = skeleton.post_jump_states[jump_idx].theta;
            logw.mul_ratio(row[next], skeleton.jump_kernel_prob[jump_idx], "kernel")?;
            steps += segment.steps_taken();
            seg_mode = next;
            seg_start_t = t_k;
            mu = mu_at;
            segment = SegmentFlow::new(model, chars.flow, seg_mode, mu);
            jump_idx += 1;
        } else {
            logw.mul_ratio(1.0 - lam_alt / rate_bound, 1.0 - lam_rec / rate_bound, "rejection")?;
        }
    }

    let mu_terminal = segment.eval(trace.horizon - seg_start_t);
    steps += segment.steps_taken();
    let weight = logw.finish(None)?;
    Ok(WeightedSample {
        value: payoff.eval(MarkState::new(seg_mode, mu_terminal)),
        weight,
        euler_steps: steps,
    })
}

/// Which auxiliary construction couples the fine and coarse legs.
pub enum CouplingSpec<'a> {
    /// Mode-only auxiliary characteristics (constant in time).
    ModeAuxiliary(&'a ModeOnlyLaw),
    /// Target characteristics frozen along a deterministic trajectory.
    FrozenTrajectory(&'a FrozenTrajectoryLaw<'a>),
    /// Flow change on the fine path's skeleton.
    FlowChange,
}

/// Build one coupled weighted pair from a trace.
///
/// For the mode-auxiliary couplings the skeleton is simulated once and
/// transported at both steps, each leg weighted with its own flow inside the
/// thinning factors. For the flow change the fine leg is the plain sample at
/// the fine step with weight one, and the coarse leg rides the fine skeleton
/// with the coarse flow.
pub fn coupled_weighted_pair(
    model: &dyn Model,
    rate_bound: f64,
    coupling: &CouplingSpec<'_>,
    trace: &ThinningTrace,
    x0: MarkState,
    h_fine: f64,
    h_coarse: f64,
    payoff: Payoff,
) -> Result<(WeightedSample, WeightedSample)> {
    match coupling {
        CouplingSpec::ModeAuxiliary(law) => {
            mode_aux_pair(model, rate_bound, *law, trace, x0, h_fine, h_coarse, payoff)
        }
        CouplingSpec::FrozenTrajectory(law) => {
            mode_aux_pair(model, rate_bound, *law, trace, x0, h_fine, h_coarse, payoff)
        }
        CouplingSpec::FlowChange => {
            let chars = Characteristics::new(model, rate_bound, FlowSpec::euler(h_fine))?;
            let skel = simulate_path(&chars, trace, x0)?;
            let (state, eval_steps) = crate::pdp::evaluate_state(&skel, &chars, trace.horizon)?;
            let fine = WeightedSample {
                value: payoff.eval(state),
                weight: 1.0,
                euler_steps: skel.euler_steps + eval_steps,
            };
            let coarse = weight_flow_change(
                model,
                rate_bound,
                &skel,
                trace,
                FlowSpec::euler(h_coarse),
                payoff,
            )?;
            Ok((fine, coarse))
        }
    }
}

fn mode_aux_pair(
    model: &dyn Model,
    rate_bound: f64,
    law: &dyn AuxJumpLaw,
    trace: &ThinningTrace,
    x0: MarkState,
    h_fine: f64,
    h_coarse: f64,
    payoff: Payoff,
) -> Result<(WeightedSample, WeightedSample)> {
    let skel = simulate_aux_skeleton(law, model.mode_count(), rate_bound, trace, x0.theta)?;
    let fine = weight_mode_auxiliary(
        model,
        rate_bound,
        FlowSpec::euler(h_fine),
        law,
        &skel,
        trace,
        x0,
        payoff,
    )?;
    let coarse = weight_mode_auxiliary(
        model,
        rate_bound,
        FlowSpec::euler(h_coarse),
        law,
        &skel,
        trace,
        x0,
        payoff,
    )?;
    Ok((fine, coarse))
}

/// Weighted single sample under a mode-auxiliary coupling at one step size.
pub fn weighted_single(
    model: &dyn Model,
    rate_bound: f64,
    law: &dyn AuxJumpLaw,
    trace: &ThinningTrace,
    x0: MarkState,
    step: f64,
    payoff: Payoff,
) -> Result<WeightedSample> {
    let skel = simulate_aux_skeleton(law, model.mode_count(), rate_bound, trace, x0.theta)?;
    weight_mode_auxiliary(
        model,
        rate_bound,
        FlowSpec::euler(step),
        law,
        &skel,
        trace,
        x0,
        payoff,
    )
}


//! Thinning construction of a piecewise deterministic process.
//!
//! Jump times are selected from a shared dominating Poisson trace: proposal
//! `k` is accepted when `U_k * rate_bound <= lambda(state at proposal)`. The
//! post-jump mode is drawn by inverse-CDF lookup into the transition kernel
//! row with the mark uniform of the jump ordinal, and the continuous component
//! is transported by the flow (it never jumps). Replaying one trace through
//! two sets of characteristics yields the coupled pair the multilevel
//! estimators are built on.

use crate::error::{invalid, PdmpError, Result};
use crate::flow::{EulerCursor, FlowSpec};
use crate::rng::ThinningTrace;

/// Hybrid state: discrete mode index plus continuous coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkState {
    pub theta: usize,
    pub nu: f64,
}

impl MarkState {
    pub fn new(theta: usize, nu: f64) -> Self {
        MarkState { theta, nu }
    }
}

/// Jump mechanism and deterministic motion of a PDP, evaluated pointwise.
pub trait Model: Sync {
    fn mode_count(&self) -> usize;

    /// Vector field of the continuous component in the given mode.
    fn drift(&self, theta: usize, nu: f64) -> f64;

    /// Jump intensity at the hybrid state; must stay within (0, rate_bound].
    fn intensity(&self, theta: usize, nu: f64) -> f64;

    /// Dense transition-kernel row at the pre-jump state. `row` has
    /// `mode_count()` entries and must sum to one.
    fn kernel_row(&self, theta: usize, nu: f64, row: &mut [f64]);

    /// Closed-form flow, when the model has one.
    fn exact_flow(&self, _theta: usize, _nu: f64, _dt: f64) -> Option<f64> {
        None
    }
}

/// A model together with its dominating rate bound and flow scheme.
#[derive(Clone, Copy)]
pub struct Characteristics<'a> {
    pub model: &'a dyn Model,
    pub rate_bound: f64,
    pub flow: FlowSpec,
}

impl<'a> Characteristics<'a> {
    pub fn new(model: &'a dyn Model, rate_bound: f64, flow: FlowSpec) -> Result<Self> {
        if !(rate_bound > 0.0 && rate_bound.is_finite()) {
            return Err(invalid(format!("rate bound must be positive, got {rate_bound}")));
        }
        flow.validate()?;
        if flow == FlowSpec::Exact && model.exact_flow(0, 0.0, 0.0).is_none() {
            return Err(invalid("model does not provide a closed-form flow"));
        }
        Ok(Characteristics { model, rate_bound, flow })
    }

    fn validate_state(&self, x: MarkState) -> Result<()> {
        if x.theta >= self.model.mode_count() {
            return Err(invalid(format!(
                "mode {} outside mode set of size {}",
                x.theta,
                self.model.mode_count()
            )));
        }
        if !x.nu.is_finite() {
            return Err(invalid(format!("non-finite continuous coordinate {}", x.nu)));
        }
        Ok(())
    }
}

/// Terminal-value functional of the hybrid state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payoff {
    /// The continuous coordinate (membrane potential in the neuron model).
    Nu,
    /// The discrete mode index.
    Theta,
    Constant(f64),
}

impl Payoff {
    pub fn eval(&self, state: MarkState) -> f64 {
        match self {
            Payoff::Nu => state.nu,
            Payoff::Theta => state.theta as f64,
            Payoff::Constant(c) => *c,
        }
    }
}

/// Segment-local flow evaluator dispatching on the flow scheme.
pub(crate) enum SegmentFlow<'a> {
    Exact { model: &'a dyn Model, theta: usize, start: f64 },
    Euler(EulerCursor<Box<dyn Fn(f64) -> f64 + 'a>>),
}

impl<'a> SegmentFlow<'a> {
    pub(crate) fn new(model: &'a dyn Model, flow: FlowSpec, theta: usize, start: f64) -> Self {
        match flow {
            FlowSpec::Exact => SegmentFlow::Exact { model, theta, start },
            FlowSpec::EulerPolygon { step } => {
                let field: Box<dyn Fn(f64) -> f64 + 'a> = Box::new(move |nu| model.drift(theta, nu));
                SegmentFlow::Euler(EulerCursor::new(field, step, start))
            }
        }
    }

    pub(crate) fn eval(&mut self, dt: f64) -> f64 {
        match self {
            SegmentFlow::Exact { model, theta, start } => model
                .exact_flow(*theta, *start, dt)
                .expect("exact flow availability is checked at construction"),
            SegmentFlow::Euler(cursor) => cursor.eval(dt),
        }
    }

    pub(crate) fn steps_taken(&self) -> u64 {
        match self {
            SegmentFlow::Exact { .. } => 0,
            SegmentFlow::Euler(cursor) => cursor.steps_taken(),
        }
    }
}

/// Embedded chain of one thinning pass: accepted jump times, the proposal
/// indices that produced them, and post-jump states. The full trajectory is
/// reconstructable from the skeleton and the flow scheme.
///
/// `proposal_intensity[k]` records the intensity evaluated at proposal `k`
/// along this path's own flow; the corrective-weight machinery reuses these
/// values so its denominators are bit-identical to the thinning decisions.
/// `jump_kernel_prob[n]` is the kernel probability of the transition taken at
/// jump `n`.
#[derive(Debug, Clone)]
pub struct PathSkeleton {
    pub horizon: f64,
    pub initial: MarkState,
    pub jump_times: Vec<f64>,
    pub accepted_indices: Vec<usize>,
    pub post_jump_states: Vec<MarkState>,
    pub proposal_intensity: Vec<f64>,
    pub jump_kernel_prob: Vec<f64>,
    pub euler_steps: u64,
}

impl PathSkeleton {
    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    /// State (mode, start value) and start time of the segment containing `t`.
    fn segment_at(&self, t: f64) -> (MarkState, f64) {
        // partition_point returns the number of jump times <= t.
        let n = self.jump_times.partition_point(|&s| s <= t);
        if n == 0 {
            (self.initial, 0.0)
        } else {
            (self.post_jump_states[n - 1], self.jump_times[n - 1])
        }
    }
}

/// Inverse-CDF selection into a probability row: returns the mode `i` with
/// `a_{i-1} < u <= a_i` over cumulative sums `a`, the boundary `u = a_i`
/// selecting `i` (closed right endpoint). Zero-probability modes are skipped.
pub fn inverse_cdf_select(row: &[f64], u: f64) -> Result<usize> {
    let mut total = 0.0;
    for (i, &p) in row.iter().enumerate() {
        if p < 0.0 || !p.is_finite() {
            return Err(invalid(format!("kernel row entry {i} is {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("kernel row sums to {total}, expected 1")));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(invalid(format!("selection uniform {u} outside [0, 1]")));
    }
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = Some(i);
            if u <= acc {
                return Ok(i);
            }
        }
    }
    // u exceeded the accumulated total by rounding slack; take the last
    // positive-probability mode.
    last_positive.ok_or_else(|| invalid("kernel row has no positive entry"))
}

/// Run the thinning construction of one path against a trace.
///
/// From the state reached at the previous jump, proposals are scanned in
/// order; the first proposal `k` with `U_k * rate_bound <= lambda` is the next
/// jump. The continuous component is transported by the flow and does not
/// jump; the new mode comes from the kernel row at the pre-jump state and the
/// mark uniform of the jump ordinal. The path flows to the horizon once
/// proposals are exhausted.
///
/// An intensity evaluating above the rate bound aborts the simulation with
/// [`PdmpError::RateBoundViolation`]; clamping instead would silently bias the
/// thinning law.
pub fn simulate_path(
    chars: &Characteristics<'_>,
    trace: &ThinningTrace,
    x0: MarkState,
) -> Result<PathSkeleton> {
    chars.validate_state(x0)?;
    let model = chars.model;
    let mode_count = model.mode_count();
    let mut row = vec![0.0; mode_count];

    let mut jump_times = Vec::new();
    let mut accepted_indices = Vec::new();
    let mut post_jump_states = Vec::new();
    let mut proposal_intensity = Vec::with_capacity(trace.len());
    let mut jump_kernel_prob = Vec::new();
    let mut euler_steps = 0u64;

    let mut state = x0;
    let mut segment_start = 0.0_f64;
    let mut segment = SegmentFlow::new(model, chars.flow, state.theta, state.nu);
    let mut jumps = 0usize;

    for (k, &t_k) in trace.poisson_times.iter().enumerate() {
        let nu_at_proposal = segment.eval(t_k - segment_start);
        let lambda = model.intensity(state.theta, nu_at_proposal);
        proposal_intensity.push(lambda);
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid(format!(
                "degenerate rate: lambda({}, {nu_at_proposal}) = {lambda}",
                state.theta
            )));
        }
        if lambda > chars.rate_bound {
            return Err(PdmpError::RateBoundViolation {
                theta: state.theta,
                nu: nu_at_proposal,
                t: t_k,
                lambda,
                bound: chars.rate_bound,
            });
        }
        if trace.uniforms_accept[k] * chars.rate_bound <= lambda {
            model.kernel_row(state.theta, nu_at_proposal, &mut row);
            let mark = trace.uniforms_mark[jumps];
            let next_theta = inverse_cdf_select(&row, mark)?;
            jumps += 1;
            euler_steps += segment.steps_taken();
            jump_kernel_prob.push(row[next_theta]);
            state = MarkState::new(next_theta, nu_at_proposal);
            segment_start = t_k;
            segment = SegmentFlow::new(model, chars.flow, state.theta, state.nu);
            jump_times.push(t_k);
            accepted_indices.push(k);
            post_jump_states.push(state);
        }
    }
    euler_steps += segment.steps_taken();

    Ok(PathSkeleton {
        horizon: trace.horizon,
        initial: x0,
        jump_times,
        accepted_indices,
        post_jump_states,
        proposal_intensity,
        jump_kernel_prob,
        euler_steps,
    })
}

/// Trajectory value at `t` in [0, horizon]: locates the segment with
/// `T_n <= t < T_{n+1}` and transports the post-jump state by the flow.
/// Returns the state and the Euler sub-steps this evaluation executed.
pub fn evaluate_state(
    skeleton: &PathSkeleton,
    chars: &Characteristics<'_>,
    t: f64,
) -> Result<(MarkState, u64)> {
    if !(0.0..=skeleton.horizon).contains(&t) {
        return Err(invalid(format!("time {t} outside [0, {}]", skeleton.horizon)));
    }
    let (state, start) = skeleton.segment_at(t);
    let mut segment = SegmentFlow::new(chars.model, chars.flow, state.theta, state.nu);
    let nu = segment.eval(t - start);
    Ok((MarkState::new(state.theta, nu), segment.steps_taken()))
}

/// Replay one trace through two sets of characteristics sharing the rate
/// bound and mode set. Mark uniforms are consumed positionally: the n-th
/// accepted jump of either path uses the n-th mark.
pub fn simulate_coupled(
    chars_fine: &Characteristics<'_>,
    chars_coarse: &Characteristics<'_>,
    trace: &ThinningTrace,
    x0: MarkState,
) -> Result<(PathSkeleton, PathSkeleton)> {
    if chars_fine.rate_bound != chars_coarse.rate_bound {
        return Err(invalid("coupled characteristics must share the rate bound"));
    }
    if chars_fine.model.mode_count() != chars_coarse.model.mode_count() {
        return Err(invalid("coupled characteristics must share the mode set"));
    }
    let fine = simulate_path(chars_fine, trace, x0)?;
    let coarse = simulate_path(chars_coarse, trace, x0)?;
    Ok((fine, coarse))
}

/// First index `k >= 1` at which the accepted-proposal index or post-jump
/// mode of the two skeletons disagree; `None` when they agree through both
/// horizons (including jump counts).
pub fn first_divergence(fine: &PathSkeleton, coarse: &PathSkeleton) -> Option<usize> {
    let n = fine.jump_count().max(coarse.jump_count());
    for k in 0..n {
        match (
            fine.accepted_indices.get(k).zip(fine.post_jump_states.get(k)),
            coarse.accepted_indices.get(k).zip(coarse.post_jump_states.get(k)),
        ) {
            (Some((ti, si)), Some((tj, sj))) => {
                if ti != tj || si.theta != sj.theta {
                    return Some(k + 1);
                }
            }
            // one path ran out of jumps before the other
            _ => return Some(k + 1),
        }
    }
    None
}

/// Whether the coupled pair's divergence, if any, happens within the horizon:
/// the event `min(T_k, T-bar_k) <= T` for `k` the first divergence index.
pub fn diverged_within_horizon(fine: &PathSkeleton, coarse: &PathSkeleton) -> bool {
    match first_divergence(fine, coarse) {
        None => false,
        Some(k) => {
            fine.jump_times.get(k - 1).is_some() || coarse.jump_times.get(k - 1).is_some()
        }
    }
}

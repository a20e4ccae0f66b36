//! Deterministic inter-jump motion.
//!
//! Two flow evaluation strategies cover the simulators: closed-form flows for
//! models that have them, and the continuous Euler polygon (piecewise-linear
//! interpolation of the explicit Euler recursion) otherwise. Each inter-jump
//! segment restarts its grid at the segment origin, so the overall
//! discretization grid of a path is random. A fixed-step fourth-order
//! Runge-Kutta solver with dense output serves as the high-accuracy reference.

use crate::error::{invalid, PdmpError, Result};

/// Flow evaluation strategy for a model's deterministic motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowSpec {
    /// Closed-form solution of the mode ODE; the model must supply it.
    Exact,
    /// Continuous Euler polygon with the given step.
    EulerPolygon { step: f64 },
}

impl FlowSpec {
    pub fn euler(step: f64) -> Self {
        FlowSpec::EulerPolygon { step }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FlowSpec::Exact => Ok(()),
            FlowSpec::EulerPolygon { step } => {
                if !(step.is_finite() && *step > 0.0) {
                    Err(invalid(format!("Euler step must be positive and finite, got {step}")))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Incremental evaluator of one Euler-polygon segment.
///
/// Query times must be non-decreasing; the cursor advances the Euler recursion
/// `y_{i+1} = y_i + h f(y_i)` lazily and interpolates inside the current cell.
/// A query landing exactly on a grid point returns the bare recursion value
/// (the interpolation term vanishes); this is the tie-break that keeps grid
/// evaluations bit-identical to the recursion.
pub struct EulerCursor<F: Fn(f64) -> f64> {
    field: F,
    step: f64,
    index: u64,
    value: f64,
    steps_taken: u64,
}

impl<F: Fn(f64) -> f64> EulerCursor<F> {
    pub fn new(field: F, step: f64, start: f64) -> Self {
        EulerCursor { field, step, index: 0, value: start, steps_taken: 0 }
    }

    /// Value of the polygon at segment-relative time `t >= previous queries`.
    pub fn eval(&mut self, t: f64) -> f64 {
        while (self.index + 1) as f64 * self.step <= t {
            self.value += self.step * (self.field)(self.value);
            self.index += 1;
            self.steps_taken += 1;
        }
        let frac = t - self.index as f64 * self.step;
        if frac == 0.0 {
            self.value
        } else {
            self.value + frac * (self.field)(self.value)
        }
    }

    /// Euler sub-steps executed so far.
    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }
}

/// One-shot Euler-polygon evaluation; returns the value and the number of
/// Euler sub-steps executed.
pub fn euler_polygon_eval<F: Fn(f64) -> f64>(field: F, step: f64, start: f64, t: f64) -> (f64, u64) {
    let mut cursor = EulerCursor::new(field, step, start);
    let v = cursor.eval(t);
    (v, cursor.steps_taken())
}

/// Dense-output table of a fixed-step integration, supporting interpolated
/// queries. Interpolation is cubic (4-point Lagrange on the uniform grid),
/// far below the RK4 truncation error at the step sizes used here.
#[derive(Debug, Clone)]
pub struct DenseTrajectory<const D: usize> {
    step: f64,
    horizon: f64,
    states: Vec<[f64; D]>,
}

impl<const D: usize> DenseTrajectory<D> {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn terminal(&self) -> [f64; D] {
        *self.states.last().expect("trajectory has at least the initial state")
    }

    /// Interpolated state at `t` in [0, horizon].
    pub fn eval(&self, t: f64) -> Result<[f64; D]> {
        if !(t >= 0.0) || t > self.horizon + 1e-9 * self.horizon.max(1.0) {
            return Err(invalid(format!("query time {t} outside [0, {}]", self.horizon)));
        }
        let n = self.states.len();
        if n == 1 {
            return Ok(self.states[0]);
        }
        let cell = ((t / self.step).floor() as usize).min(n - 2);
        let lo = if n >= 4 { cell.saturating_sub(1).min(n - 4) } else { 0 };
        let count = 4.min(n);
        let mut out = [0.0; D];
        for j in 0..count {
            let tj = (lo + j) as f64 * self.step;
            let mut w = 1.0;
            for m in 0..count {
                if m != j {
                    let tm = (lo + m) as f64 * self.step;
                    w *= (t - tm) / (tj - tm);
                }
            }
            for d in 0..D {
                out[d] += w * self.states[lo + j][d];
            }
        }
        Ok(out)
    }
}

/// Classical fourth-order Runge-Kutta with fixed step on [0, horizon].
/// Fails with the time of failure if the state leaves the finite range.
pub fn rk4_solve<const D: usize>(
    field: impl Fn(f64, &[f64; D]) -> [f64; D],
    start: [f64; D],
    horizon: f64,
    step: f64,
) -> Result<DenseTrajectory<D>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid(format!("reference step must be positive, got {step}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be non-negative, got {horizon}")));
    }
    let n_steps = (horizon / step).ceil() as usize;
    let step = if n_steps > 0 { horizon / n_steps as f64 } else { step };
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(start);
    let mut y = start;
    for i in 0..n_steps {
        let t = i as f64 * step;
        let k1 = field(t, &y);
        let k2 = field(t + step / 2.0, &add_scaled(&y, &k1, step / 2.0));
        let k3 = field(t + step / 2.0, &add_scaled(&y, &k2, step / 2.0));
        let k4 = field(t + step, &add_scaled(&y, &k3, step));
        for d in 0..D {
            y[d] += step / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(PdmpError::NumericalFailure {
                t: (i + 1) as f64 * step,
                detail: "state became non-finite during reference integration".into(),
            });
        }
        states.push(y);
    }
    Ok(DenseTrajectory { step, horizon, states })
}

/// High-accuracy scalar reference solve, used for ground-truth checks and for
/// the frozen deterministic trajectory of the time-dependent auxiliary
/// characteristics.
pub fn reference_solve(
    field: impl Fn(f64) -> f64,
    start: f64,
    horizon: f64,
    step: f64,
) -> Result<DenseTrajectory<1>> {
    rk4_solve(|_, y: &[f64; 1]| [field(y[0])], [start], horizon, step)
}

fn add_scaled<const D: usize>(y: &[f64; D], k: &[f64; D], s: f64) -> [f64; D] {
    let mut out = *y;
    for d in 0..D {
        out[d] += s * k[d];
    }
    out
}

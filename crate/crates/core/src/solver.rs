//! Minimizers for `loss + lambda * penalty + gamma * |w|^2`.
//!
//! The ridge term is the squared Euclidean norm of the feature weights;
//! intercept coordinates are never shrunk. With squared error the whole
//! objective is quadratic and [`solve_linear_closed_form`] solves the
//! normal equations directly. [`solve_smooth`] handles any loss with
//! damped Newton steps and a backtracking line search.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{FairError, Result};
use crate::fairness::PenaltyForm;
use crate::model::{self, LossKind, ModelParams, ParamLayout};

#[derive(Clone, Copy, Debug)]
pub struct Objective<'a> {
    pub data: &'a Dataset,
    pub indices: &'a [usize],
    pub loss: LossKind,
    pub penalty: &'a PenaltyForm,
    pub lambda: f64,
    pub gamma: f64,
}

impl<'a> Objective<'a> {
    pub fn new(
        data: &'a Dataset,
        indices: &'a [usize],
        loss: LossKind,
        penalty: &'a PenaltyForm,
        lambda: f64,
        gamma: f64,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(FairError::EmptyIndexSet);
        }
        loss.check(data.task())?;
        if penalty.layout.dim != data.dim() {
            return Err(FairError::DimensionMismatch { expected: data.dim(), actual: penalty.layout.dim });
        }
        for (name, v) in [("lambda", lambda), ("gamma", gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(FairError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self { data, indices, loss, penalty, lambda, gamma })
    }

    /// Same data and penalty at different weights.
    pub fn with_weights(&self, lambda: f64, gamma: f64) -> Self {
        Self { lambda, gamma, ..*self }
    }

    pub fn layout(&self) -> ParamLayout {
        self.penalty.layout
    }

    pub fn ridge_at(&self, theta: &[f64]) -> f64 {
        let layout = self.layout();
        theta.iter().enumerate().filter(|(k, _)| !layout.is_intercept(*k)).map(|(_, v)| v * v).sum()
    }

    pub fn loss_at(&self, theta: &[f64]) -> f64 {
        model::loss_at(self.layout(), theta, self.data, self.indices, self.loss)
    }

    pub fn penalty_at(&self, theta: &[f64]) -> f64 {
        self.penalty.value_at(theta)
    }

    pub fn value_at(&self, theta: &[f64]) -> f64 {
        self.loss_at(theta) + self.lambda * self.penalty_at(theta) + self.gamma * self.ridge_at(theta)
    }

    pub fn gradient_at(&self, theta: &[f64]) -> DVector<f64> {
        let layout = self.layout();
        let mut g = model::loss_gradient_at(layout, theta, self.data, self.indices, self.loss);
        if self.lambda != 0.0 {
            g += self.penalty.gradient_at(theta) * self.lambda;
        }
        for (k, &v) in theta.iter().enumerate() {
            if !layout.is_intercept(k) {
                g[k] += 2.0 * self.gamma * v;
            }
        }
        g
    }

    pub fn hessian_at(&self, theta: &[f64]) -> DMatrix<f64> {
        let layout = self.layout();
        let mut h = model::loss_hessian_at(layout, theta, self.data, self.indices, self.loss);
        if self.lambda != 0.0 {
            h += self.penalty.hessian() * self.lambda;
        }
        for k in 0..layout.len() {
            if !layout.is_intercept(k) {
                h[(k, k)] += 2.0 * self.gamma;
            }
        }
        h
    }

    fn check(&self, params: &ModelParams) -> Result<DVector<f64>> {
        let theta = params.to_unified();
        if params.layout() != self.layout() {
            return Err(FairError::DimensionMismatch { expected: self.layout().len(), actual: theta.len() });
        }
        Ok(theta)
    }
}

pub fn objective_value(obj: &Objective<'_>, params: &ModelParams) -> Result<f64> {
    let theta = obj.check(params)?;
    Ok(obj.value_at(theta.as_slice()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Step shrink factor while backtracking.
    pub backtrack: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 1000, armijo: 1e-4, backtrack: 0.5 }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(FairError::Config("solver tolerance must be > 0 and max_iterations >= 1".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0 && self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(FairError::Config("line-search constants must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub params: ModelParams,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Exact minimizer of a squared-error objective via its normal equations
/// `(H_loss + lambda H_penalty + 2 gamma D) theta = rhs`.
pub fn solve_linear_closed_form(obj: &Objective<'_>) -> Result<SolveResult> {
    if obj.loss != LossKind::MeanSquaredError {
        return Err(FairError::Config("closed-form solve requires squared-error loss".into()));
    }
    let layout = obj.layout();
    let p = layout.len();
    let d = layout.dim;
    let m = obj.indices.len() as f64;

    // Assemble (2/m) Z'Z and (2/m) Z'y row by row.
    let mut system = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut z = DVector::<f64>::zeros(p);
    for &i in obj.indices {
        z.fill(0.0);
        let o = layout.block(obj.data.group(i));
        for (k, &x) in obj.data.row(i).iter().enumerate() {
            z[o + k] = x;
        }
        z[o + d] = 1.0;
        system.ger(2.0 / m, &z, &z, 1.0);
        rhs.axpy(2.0 * obj.data.label(i) / m, &z, 1.0);
    }
    if obj.lambda != 0.0 {
        system += obj.penalty.hessian() * obj.lambda;
    }
    for k in 0..p {
        if !layout.is_intercept(k) {
            system[(k, k)] += 2.0 * obj.gamma;
        }
    }

    let chol = system.clone().cholesky().ok_or(FairError::SingularSystem)?;
    let mut theta = chol.solve(&rhs);
    // one round of iterative refinement
    let residual = &rhs - &system * &theta;
    theta += chol.solve(&residual);
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(FairError::SingularSystem);
    }

    let gradient_norm = obj.gradient_at(theta.as_slice()).norm();
    let tolerance = 1e-8 * (1.0 + rhs.norm());
    Ok(SolveResult {
        objective: obj.value_at(theta.as_slice()),
        params: ModelParams::from_unified(layout, theta.as_slice())?,
        gradient_norm,
        iterations: 1,
        converged: gradient_norm <= tolerance,
    })
}

/// Newton direction from `(H + mu I) p = -g`, raising `mu` until the
/// factorization succeeds and `p` is a descent direction.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let scale = 1.0 + h.diagonal().amax();
    let mut shift = 0.0;
    for _ in 0..12 {
        let mut shifted = h.clone();
        for k in 0..shifted.nrows() {
            shifted[(k, k)] += shift;
        }
        if let Some(chol) = shifted.cholesky() {
            let p = -chol.solve(g);
            if p.dot(g) < 0.0 && p.iter().all(|v| v.is_finite()) {
                return p;
            }
        }
        shift = if shift == 0.0 { 1e-10 * scale } else { shift * 10.0 };
    }
    -g.clone()
}

/// Descent with backtracking line search. The objective sequence never
/// increases; iteration stops at `cfg.tolerance` gradient norm or
/// `cfg.max_iterations` accepted steps.
pub fn solve_smooth(obj: &Objective<'_>, init: &ModelParams, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let layout = obj.layout();
    let mut theta = obj.check(init)?;
    let mut f = obj.value_at(theta.as_slice());
    if !f.is_finite() {
        return Err(FairError::NonFinite { iteration: 0, detail: format!("objective {f} at the initial point") });
    }
    let mut g = obj.gradient_at(theta.as_slice());
    let mut iterations = 0;

    while g.norm() > cfg.tolerance && iterations < cfg.max_iterations {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(FairError::NonFinite { iteration: iterations, detail: "gradient is not finite".into() });
        }
        let p = newton_direction(&obj.hessian_at(theta.as_slice()), &g);
        let slope = g.dot(&p);

        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let trial = &theta + &p * step;
            let ft = obj.value_at(trial.as_slice());
            if ft.is_finite() && ft <= f + cfg.armijo * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= cfg.backtrack;
        }
        let (next, f_next) = match accepted {
            Some(found) => found,
            None => {
                // Near the optimum the decrease drops below rounding; take the
                // full step only if it lowers the gradient without raising f.
                let trial = &theta + &p;
                let ft = obj.value_at(trial.as_slice());
                if ft <= f && obj.gradient_at(trial.as_slice()).norm() < g.norm() {
                    (trial, ft)
                } else {
                    break;
                }
            }
        };
        theta = next;
        f = f_next;
        g = obj.gradient_at(theta.as_slice());
        iterations += 1;
    }

    let gradient_norm = g.norm();
    if !gradient_norm.is_finite() {
        return Err(FairError::NonFinite { iteration: iterations, detail: "gradient is not finite".into() });
    }
    Ok(SolveResult {
        params: ModelParams::from_unified(layout, theta.as_slice())?,
        objective: f,
        gradient_norm,
        iterations,
        converged: gradient_norm <= cfg.tolerance,
    })
}

/// Closed form for squared error, iterative otherwise.
pub fn solve(obj: &Objective<'_>, init: &ModelParams, cfg: &SolverConfig) -> Result<SolveResult> {
    match obj.loss {
        LossKind::MeanSquaredError => solve_linear_closed_form(obj),
        LossKind::LogLoss => solve_smooth(obj, init, cfg),
    }
}

/// Largest coordinate-wise gap between the analytic gradient and central
/// differences, relative to `max(|g_k|, 1)`.
pub fn finite_difference_check(obj: &Objective<'_>, params: &ModelParams, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(FairError::Config(format!("step must be > 0, got {h}")));
    }
    let theta = obj.check(params)?;
    let grad = obj.gradient_at(theta.as_slice());
    let mut worst: f64 = 0.0;
    let mut probe = theta.clone();
    for k in 0..theta.len() {
        probe[k] = theta[k] + h;
        let up = obj.value_at(probe.as_slice());
        probe[k] = theta[k] - h;
        let down = obj.value_at(probe.as_slice());
        probe[k] = theta[k];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[k]).abs() / grad[k].abs().max(1.0));
    }
    Ok(worst)
}

//! Linear scores, accuracy losses and their derivatives.
//!
//! Every model lives in a flat "unified" parameter vector so penalties,
//! losses and solvers share one coordinate system:
//!
//! * single model: `[w (d), b]`
//! * separate models: `[w1 (d), b1, w2 (d), b2]`

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Group, Task};
use crate::error::{FairError, Result};
use crate::fairness::ModelMode;

/// Log-odds bound for degenerate base rates.
pub const LOG_ODDS_CLAMP: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    MeanSquaredError,
    LogLoss,
}

impl LossKind {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Linear => LossKind::MeanSquaredError,
            Task::Logistic => LossKind::LogLoss,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::MeanSquaredError => "mse",
            LossKind::LogLoss => "log-loss",
        }
    }

    pub(crate) fn check(self, task: Task) -> Result<()> {
        if Self::for_task(task) == self {
            Ok(())
        } else {
            Err(FairError::LossTaskMismatch { loss: self.name(), task: task.name() })
        }
    }
}

/// Shape of the unified parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub mode: ModelMode,
    pub dim: usize,
}

impl ParamLayout {
    pub fn new(mode: ModelMode, dim: usize) -> Self {
        Self { mode, dim }
    }

    pub fn len(&self) -> usize {
        match self.mode {
            ModelMode::SingleModel => self.dim + 1,
            ModelMode::SeparateModels => 2 * (self.dim + 1),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Offset of the `(w, b)` block used for rows of group `g`.
    pub fn block(&self, g: Group) -> usize {
        match (self.mode, g) {
            (ModelMode::SingleModel, _) | (ModelMode::SeparateModels, Group::One) => 0,
            (ModelMode::SeparateModels, Group::Two) => self.dim + 1,
        }
    }

    pub fn intercepts(&self) -> Vec<usize> {
        match self.mode {
            ModelMode::SingleModel => vec![self.dim],
            ModelMode::SeparateModels => vec![self.dim, 2 * self.dim + 1],
        }
    }

    pub fn is_intercept(&self, k: usize) -> bool {
        k % (self.dim + 1) == self.dim
    }

    /// Linear score `w_g . x + b_g` read directly from `theta`.
    pub fn score(&self, theta: &[f64], x: &[f64], g: Group) -> f64 {
        let o = self.block(g);
        let w = &theta[o..o + self.dim];
        w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + theta[o + self.dim]
    }
}

/// Fitted coefficients.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelParams {
    Single { w: Vec<f64>, b: f64 },
    Separate { w1: Vec<f64>, b1: f64, w2: Vec<f64>, b2: f64 },
}

impl ModelParams {
    pub fn zeros(mode: ModelMode, dim: usize) -> Self {
        Self::constant(mode, dim, 0.0)
    }

    /// The predictor that outputs `c` everywhere.
    pub fn constant(mode: ModelMode, dim: usize, c: f64) -> Self {
        match mode {
            ModelMode::SingleModel => ModelParams::Single { w: vec![0.0; dim], b: c },
            ModelMode::SeparateModels => ModelParams::Separate { w1: vec![0.0; dim], b1: c, w2: vec![0.0; dim], b2: c },
        }
    }

    pub fn mode(&self) -> ModelMode {
        match self {
            ModelParams::Single { .. } => ModelMode::SingleModel,
            ModelParams::Separate { .. } => ModelMode::SeparateModels,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelParams::Single { w, .. } => w.len(),
            ModelParams::Separate { w1, .. } => w1.len(),
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.mode(), self.dim())
    }

    /// Weights and intercept applied to members of group `g`.
    pub fn for_group(&self, g: Group) -> (&[f64], f64) {
        match (self, g) {
            (ModelParams::Single { w, b }, _) => (w, *b),
            (ModelParams::Separate { w1, b1, .. }, Group::One) => (w1, *b1),
            (ModelParams::Separate { w2, b2, .. }, Group::Two) => (w2, *b2),
        }
    }

    pub fn to_unified(&self) -> DVector<f64> {
        match self {
            ModelParams::Single { w, b } => DVector::from_iterator(w.len() + 1, w.iter().copied().chain([*b])),
            ModelParams::Separate { w1, b1, w2, b2 } => DVector::from_iterator(
                2 * (w1.len() + 1),
                w1.iter().copied().chain([*b1]).chain(w2.iter().copied()).chain([*b2]),
            ),
        }
    }

    pub fn from_unified(layout: ParamLayout, theta: &[f64]) -> Result<Self> {
        if theta.len() != layout.len() {
            return Err(FairError::DimensionMismatch { expected: layout.len(), actual: theta.len() });
        }
        let d = layout.dim;
        Ok(match layout.mode {
            ModelMode::SingleModel => ModelParams::Single { w: theta[..d].to_vec(), b: theta[d] },
            ModelMode::SeparateModels => ModelParams::Separate {
                w1: theta[..d].to_vec(),
                b1: theta[d],
                w2: theta[d + 1..2 * d + 1].to_vec(),
                b2: theta[2 * d + 1],
            },
        })
    }

    /// Re-expresses a single model in `mode`; separate models only convert to themselves.
    pub fn into_mode(self, mode: ModelMode) -> Result<Self> {
        match (self, mode) {
            (ModelParams::Single { w, b }, ModelMode::SeparateModels) => {
                Ok(ModelParams::Separate { w1: w.clone(), b1: b, w2: w, b2: b })
            }
            (p, m) if p.mode() == m => Ok(p),
            _ => Err(FairError::Config("cannot collapse separate models into one".into())),
        }
    }

    /// Euclidean norm of all non-intercept coordinates.
    pub fn weight_norm(&self) -> f64 {
        match self {
            ModelParams::Single { w, .. } => w.iter().map(|v| v * v).sum::<f64>().sqrt(),
            ModelParams::Separate { w1, w2, .. } => w1.iter().chain(w2).map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    pub fn intercepts(&self) -> Vec<f64> {
        match self {
            ModelParams::Single { b, .. } => vec![*b],
            ModelParams::Separate { b1, b2, .. } => vec![*b1, *b2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_unified().iter().all(|v| v.is_finite())
    }
}

/// On-disk form of [`ModelParams`]: one weight row and intercept per group block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub mode: ModelMode,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl From<&ModelParams> for ModelFile {
    fn from(p: &ModelParams) -> Self {
        match p {
            ModelParams::Single { w, b } => {
                ModelFile { mode: ModelMode::SingleModel, weights: vec![w.clone()], intercepts: vec![*b] }
            }
            ModelParams::Separate { w1, b1, w2, b2 } => ModelFile {
                mode: ModelMode::SeparateModels,
                weights: vec![w1.clone(), w2.clone()],
                intercepts: vec![*b1, *b2],
            },
        }
    }
}

impl TryFrom<ModelFile> for ModelParams {
    type Error = FairError;

    fn try_from(f: ModelFile) -> Result<Self> {
        let blocks = match f.mode {
            ModelMode::SingleModel => 1,
            ModelMode::SeparateModels => 2,
        };
        if f.weights.len() != blocks || f.intercepts.len() != blocks {
            return Err(FairError::Config(format!(
                "{} model needs {blocks} weight rows and intercepts",
                f.mode.name()
            )));
        }
        let mut weights = f.weights.into_iter();
        let p = match f.mode {
            ModelMode::SingleModel => ModelParams::Single { w: weights.next().unwrap(), b: f.intercepts[0] },
            ModelMode::SeparateModels => {
                let (w1, w2) = (weights.next().unwrap(), weights.next().unwrap());
                if w1.len() != w2.len() {
                    return Err(FairError::DimensionMismatch { expected: w1.len(), actual: w2.len() });
                }
                ModelParams::Separate { w1, b1: f.intercepts[0], w2, b2: f.intercepts[1] }
            }
        };
        if !p.is_finite() {
            return Err(FairError::Config("model file has non-finite entries".into()));
        }
        Ok(p)
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check_dim(params_dim: usize, x_len: usize) -> Result<()> {
    if params_dim != x_len {
        return Err(FairError::DimensionMismatch { expected: params_dim, actual: x_len });
    }
    Ok(())
}

pub fn predict(params: &ModelParams, x: &[f64], g: u8) -> Result<f64> {
    check_dim(params.dim(), x.len())?;
    let (w, b) = params.for_group(Group::from_id(g)?);
    Ok(w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
}

pub fn predict_probability(params: &ModelParams, x: &[f64], g: u8) -> Result<f64> {
    predict(params, x, g).map(sigmoid)
}

fn check_inputs(layout: ParamLayout, data: &Dataset, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(FairError::EmptyIndexSet);
    }
    check_dim(layout.dim, data.dim())
}

/// Per-row loss and its derivative with respect to the score.
#[inline]
fn pointwise(kind: LossKind, score: f64, y: f64) -> (f64, f64) {
    match kind {
        LossKind::MeanSquaredError => {
            let r = score - y;
            (r * r, 2.0 * r)
        }
        LossKind::LogLoss => {
            let m = y * score;
            (softplus(-m), -y * sigmoid(-m))
        }
    }
}

pub(crate) fn loss_at(layout: ParamLayout, theta: &[f64], data: &Dataset, indices: &[usize], kind: LossKind) -> f64 {
    let total: f64 = indices
        .iter()
        .map(|&i| pointwise(kind, layout.score(theta, data.row(i), data.group(i)), data.label(i)).0)
        .sum();
    total / indices.len() as f64
}

pub(crate) fn loss_gradient_at(
    layout: ParamLayout,
    theta: &[f64],
    data: &Dataset,
    indices: &[usize],
    kind: LossKind,
) -> DVector<f64> {
    let mut grad = DVector::zeros(layout.len());
    let d = layout.dim;
    for &i in indices {
        let g = data.group(i);
        let x = data.row(i);
        let (_, dl) = pointwise(kind, layout.score(theta, x, g), data.label(i));
        let o = layout.block(g);
        for (k, &xk) in x.iter().enumerate() {
            grad[o + k] += dl * xk;
        }
        grad[o + d] += dl;
    }
    grad / indices.len() as f64
}

/// Exact Hessian of the mean loss in the unified space.
pub(crate) fn loss_hessian_at(
    layout: ParamLayout,
    theta: &[f64],
    data: &Dataset,
    indices: &[usize],
    kind: LossKind,
) -> DMatrix<f64> {
    let p = layout.len();
    let d = layout.dim;
    let mut h = DMatrix::zeros(p, p);
    let mut z = vec![0.0; d + 1];
    for &i in indices {
        let g = data.group(i);
        let x = data.row(i);
        let curvature = match kind {
            LossKind::MeanSquaredError => 2.0,
            LossKind::LogLoss => {
                let s = sigmoid(layout.score(theta, x, g));
                s * (1.0 - s)
            }
        };
        z[..d].copy_from_slice(x);
        z[d] = 1.0;
        let o = layout.block(g);
        for a in 0..=d {
            let ca = curvature * z[a];
            for b in 0..=d {
                h[(o + a, o + b)] += ca * z[b];
            }
        }
    }
    h / indices.len() as f64
}

/// Mean squared error or mean log loss over `indices`.
pub fn accuracy_loss(params: &ModelParams, data: &Dataset, indices: &[usize], kind: LossKind) -> Result<f64> {
    check_inputs(params.layout(), data, indices)?;
    kind.check(data.task())?;
    Ok(loss_at(params.layout(), params.to_unified().as_slice(), data, indices, kind))
}

/// Gradient of [`accuracy_loss`] in the unified parameter space.
pub fn accuracy_loss_gradient(
    params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
    kind: LossKind,
) -> Result<DVector<f64>> {
    check_inputs(params.layout(), data, indices)?;
    kind.check(data.task())?;
    Ok(loss_gradient_at(params.layout(), params.to_unified().as_slice(), data, indices, kind))
}

/// Squared error of predicted probabilities against labels mapped to {0, 1}.
/// Used to report accuracy of logistic models.
pub fn probability_mse(params: &ModelParams, data: &Dataset, indices: &[usize]) -> Result<f64> {
    check_inputs(params.layout(), data, indices)?;
    let theta = params.to_unified();
    let layout = params.layout();
    let total: f64 = indices
        .iter()
        .map(|&i| {
            let p = sigmoid(layout.score(theta.as_slice(), data.row(i), data.group(i)));
            (p - (data.label(i) + 1.0) / 2.0).powi(2)
        })
        .sum();
    Ok(total / indices.len() as f64)
}

/// The loss-optimal model with all feature weights at zero (single-model form).
pub fn best_constant_predictor(data: &Dataset, indices: &[usize], kind: LossKind) -> Result<ModelParams> {
    if indices.is_empty() {
        return Err(FairError::EmptyIndexSet);
    }
    let m = indices.len() as f64;
    let b = match kind {
        LossKind::MeanSquaredError => indices.iter().map(|&i| data.label(i)).sum::<f64>() / m,
        LossKind::LogLoss => {
            let p = indices.iter().filter(|&&i| data.label(i) > 0.0).count() as f64 / m;
            (p / (1.0 - p)).ln().clamp(-LOG_ODDS_CLAMP, LOG_ODDS_CLAMP)
        }
    };
    Ok(ModelParams::constant(ModelMode::SingleModel, data.dim(), b))
}

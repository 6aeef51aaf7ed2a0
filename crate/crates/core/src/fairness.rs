//! Cross-pair fairness penalties.
//!
//! All three penalties are quadratic in the unified parameter vector, so
//! they are precomputed once per pair set into a [`PenaltyForm`]:
//!
//! * individual: `theta' A theta` with `A = mean_p d_p u_p u_p'`
//! * group: `(v . theta)^2` with `v = mean_p d_p u_p`
//! * hybrid: `sum_t w_t (v_t . theta)^2`, one bucket per shared label `t`
//!
//! where `u_p` is the pair's [`unified_diff_vector`]. Means are taken over
//! the sampled pairs (per bucket for hybrid).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{CrossPairSet, Dataset, Group, Task};
use crate::error::{FairError, Result};
use crate::model::{ModelParams, ParamLayout};

/// Similarity weight `d(y_i, y_j)` between the labels of a cross pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceWeightKind {
    /// `exp(-(y_i - y_j)^2)`
    Gaussian,
    /// `1` when the labels agree, else `0`
    Indicator,
    /// Same weight for every pair; with the group penalty this penalizes
    /// the gap between group mean predictions.
    Constant(f64),
}

impl DistanceWeightKind {
    pub fn weight(self, yi: f64, yj: f64) -> f64 {
        match self {
            DistanceWeightKind::Gaussian => (-(yi - yj).powi(2)).exp(),
            DistanceWeightKind::Indicator => {
                if yi == yj {
                    1.0
                } else {
                    0.0
                }
            }
            DistanceWeightKind::Constant(c) => c,
        }
    }

    /// Default for a task: Gaussian on real targets, indicator on binary ones.
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Linear => DistanceWeightKind::Gaussian,
            Task::Logistic => DistanceWeightKind::Indicator,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Individual,
    Group,
    Hybrid,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 3] = [PenaltyKind::Individual, PenaltyKind::Group, PenaltyKind::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::Individual => "individual",
            PenaltyKind::Group => "group",
            PenaltyKind::Hybrid => "hybrid",
        }
    }

    pub fn applies_to(self, task: Task) -> bool {
        self != PenaltyKind::Hybrid || task == Task::Logistic
    }
}

/// Whether one linear model serves both groups or each group gets its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelMode {
    #[serde(rename = "single")]
    SingleModel,
    #[serde(rename = "separate")]
    SeparateModels,
}

impl ModelMode {
    pub const ALL: [ModelMode; 2] = [ModelMode::SingleModel, ModelMode::SeparateModels];

    pub fn name(self) -> &'static str {
        match self {
            ModelMode::SingleModel => "single",
            ModelMode::SeparateModels => "separate",
        }
    }
}

/// Relative weights of the positive-label and negative-label hybrid buckets.
/// A zero weight drops the bucket, which then may be empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridWeights {
    pub positive: f64,
    pub negative: f64,
}

impl Default for HybridWeights {
    fn default() -> Self {
        Self { positive: 1.0, negative: 1.0 }
    }
}

/// One squared-linear term `weight * (v . theta)^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bucket {
    pub v: DVector<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyForm {
    pub kind: PenaltyKind,
    pub layout: ParamLayout,
    /// Individual penalty matrix; `None` for bucketed kinds.
    pub quad: Option<DMatrix<f64>>,
    pub buckets: Vec<Bucket>,
}

/// Difference vector `u` with `u . theta = score_1(x_i) - score_2(x_j)`.
pub fn unified_diff_vector(xi: &[f64], xj: &[f64], mode: ModelMode) -> Result<DVector<f64>> {
    if xi.len() != xj.len() {
        return Err(FairError::DimensionMismatch { expected: xi.len(), actual: xj.len() });
    }
    let layout = ParamLayout::new(mode, xi.len());
    let mut u = DVector::zeros(layout.len());
    write_diff(layout, xi, xj, u.as_mut_slice());
    Ok(u)
}

fn write_diff(layout: ParamLayout, xi: &[f64], xj: &[f64], out: &mut [f64]) {
    let d = layout.dim;
    match layout.mode {
        ModelMode::SingleModel => {
            for k in 0..d {
                out[k] = xi[k] - xj[k];
            }
            out[d] = 0.0;
        }
        ModelMode::SeparateModels => {
            let o = layout.block(Group::Two);
            out[..d].copy_from_slice(xi);
            out[d] = 1.0;
            for k in 0..d {
                out[o + k] = -xj[k];
            }
            out[o + d] = -1.0;
        }
    }
}

fn check_hybrid(data: &Dataset) -> Result<()> {
    if data.task() != Task::Logistic {
        return Err(FairError::HybridRequiresBinaryLabels);
    }
    Ok(())
}

pub fn build_penalty_form(
    pairs: &CrossPairSet,
    data: &Dataset,
    kind: PenaltyKind,
    mode: ModelMode,
) -> Result<PenaltyForm> {
    build_penalty_form_with(pairs, data, kind, mode, HybridWeights::default())
}

/// Precomputes the quadratic representation of `kind` over `pairs`.
pub fn build_penalty_form_with(
    pairs: &CrossPairSet,
    data: &Dataset,
    kind: PenaltyKind,
    mode: ModelMode,
    hybrid: HybridWeights,
) -> Result<PenaltyForm> {
    let layout = ParamLayout::new(mode, data.dim());
    let p = layout.len();
    let mut u = DVector::zeros(p);
    let count = pairs.len().max(1) as f64;

    match kind {
        PenaltyKind::Individual => {
            let mut a = DMatrix::zeros(p, p);
            for ((i, j), w) in pairs.iter() {
                write_diff(layout, data.row(i), data.row(j), u.as_mut_slice());
                a.ger(w / count, &u, &u, 1.0);
            }
            // symmetrize away rounding drift
            let a = (&a + a.transpose()) * 0.5;
            Ok(PenaltyForm { kind, layout, quad: Some(a), buckets: vec![] })
        }
        PenaltyKind::Group => {
            let mut v = DVector::zeros(p);
            for ((i, j), w) in pairs.iter() {
                write_diff(layout, data.row(i), data.row(j), u.as_mut_slice());
                v.axpy(w, &u, 1.0);
            }
            Ok(PenaltyForm { kind, layout, quad: None, buckets: vec![Bucket { v: v / count, weight: 1.0 }] })
        }
        PenaltyKind::Hybrid => {
            check_hybrid(data)?;
            let mut buckets = Vec::with_capacity(2);
            for (label, weight) in [(1.0, hybrid.positive), (-1.0, hybrid.negative)] {
                let mut v = DVector::zeros(p);
                let mut members = 0usize;
                for ((i, j), w) in pairs.iter() {
                    if data.label(i) == label && data.label(j) == label {
                        write_diff(layout, data.row(i), data.row(j), u.as_mut_slice());
                        v.axpy(w, &u, 1.0);
                        members += 1;
                    }
                }
                if weight == 0.0 {
                    continue;
                }
                if members == 0 {
                    return Err(FairError::EmptyHybridBucket(label as i8));
                }
                buckets.push(Bucket { v: v / members as f64, weight });
            }
            Ok(PenaltyForm { kind, layout, quad: None, buckets })
        }
    }
}

impl PenaltyForm {
    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.layout.len() {
            return Err(FairError::DimensionMismatch { expected: self.layout.len(), actual: theta.len() });
        }
        Ok(())
    }

    pub(crate) fn value_at(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        match &self.quad {
            Some(a) => t.dot(&(a * &t)),
            None => self.buckets.iter().map(|b| b.weight * b.v.dot(&t).powi(2)).sum(),
        }
    }

    pub(crate) fn gradient_at(&self, theta: &[f64]) -> DVector<f64> {
        let t = DVector::from_column_slice(theta);
        match &self.quad {
            Some(a) => a * &t * 2.0,
            None => {
                self.buckets.iter().fold(DVector::zeros(t.len()), |acc, b| acc + &b.v * (2.0 * b.weight * b.v.dot(&t)))
            }
        }
    }

    /// Constant Hessian: `2A` or `sum_b 2 w_b v_b v_b'`.
    pub fn hessian(&self) -> DMatrix<f64> {
        match &self.quad {
            Some(a) => a * 2.0,
            None => {
                let p = self.layout.len();
                let mut h = DMatrix::zeros(p, p);
                for b in &self.buckets {
                    h.ger(2.0 * b.weight, &b.v, &b.v, 1.0);
                }
                h
            }
        }
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        Ok(self.value_at(theta))
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.check(theta)?;
        Ok(self.gradient_at(theta))
    }
}

fn check_params(form: &PenaltyForm, params: &ModelParams) -> Result<DVector<f64>> {
    if params.mode() != form.layout.mode {
        return Err(FairError::Config(format!(
            "model is {} but penalty was built for {}",
            params.mode().name(),
            form.layout.mode.name()
        )));
    }
    let theta = params.to_unified();
    form.check(theta.as_slice())?;
    Ok(theta)
}

pub fn eval_penalty(form: &PenaltyForm, params: &ModelParams) -> Result<f64> {
    let theta = check_params(form, params)?;
    Ok(form.value_at(theta.as_slice()))
}

pub fn penalty_gradient(form: &PenaltyForm, params: &ModelParams) -> Result<DVector<f64>> {
    let theta = check_params(form, params)?;
    Ok(form.gradient_at(theta.as_slice()))
}

pub fn eval_penalty_bruteforce(
    pairs: &CrossPairSet,
    data: &Dataset,
    kind: PenaltyKind,
    params: &ModelParams,
) -> Result<f64> {
    eval_penalty_bruteforce_with(pairs, data, kind, params, HybridWeights::default())
}

/// Direct summation of the penalty over the pairs using model predictions.
/// Empty sums contribute zero.
pub fn eval_penalty_bruteforce_with(
    pairs: &CrossPairSet,
    data: &Dataset,
    kind: PenaltyKind,
    params: &ModelParams,
    hybrid: HybridWeights,
) -> Result<f64> {
    if params.dim() != data.dim() {
        return Err(FairError::DimensionMismatch { expected: data.dim(), actual: params.dim() });
    }
    if kind == PenaltyKind::Hybrid {
        check_hybrid(data)?;
    }
    let predict = |i: usize| {
        let (w, b) = params.for_group(data.group(i));
        w.iter().zip(data.row(i)).map(|(a, x)| a * x).sum::<f64>() + b
    };
    let gap = |(i, j): (usize, usize)| predict(i) - predict(j);
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let n = pairs.len() as f64;
    Ok(match kind {
        PenaltyKind::Individual => pairs.iter().map(|(p, w)| w * gap(p).powi(2)).sum::<f64>() / n,
        PenaltyKind::Group => (pairs.iter().map(|(p, w)| w * gap(p)).sum::<f64>() / n).powi(2),
        PenaltyKind::Hybrid => [(1.0, hybrid.positive), (-1.0, hybrid.negative)]
            .into_iter()
            .map(|(label, weight)| {
                let (sum, members) = pairs
                    .iter()
                    .filter(|&((i, j), _)| data.label(i) == label && data.label(j) == label)
                    .fold((0.0, 0usize), |(s, c), (p, w)| (s + w * gap(p), c + 1));
                if members == 0 {
                    0.0
                } else {
                    weight * (sum / members as f64).powi(2)
                }
            })
            .sum(),
    })
}

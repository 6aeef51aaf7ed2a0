//! Cross-validated ridge selection, efficient frontiers and Price of Fairness.
//!
//! A [`CvPlan`] fixes everything random about an experiment: the fold
//! assignment, per-fold normalization and the train/test cross pairs of
//! every fold. Build it once and reuse it for every penalty kind and model
//! mode so the comparisons share folds and pairs.

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_normalization, fit_normalization, make_stratified_folds, sample_cross_pairs, CrossPairSet, Dataset, FoldPlan,
    NormalizationStats, Task,
};
use crate::error::{FairError, Result};
use crate::fairness::{
    build_penalty_form_with, DistanceWeightKind, HybridWeights, ModelMode, PenaltyForm, PenaltyKind,
};
use crate::model::{self, LossKind, ModelParams};
use crate::solver::{self, Objective, SolveResult, SolverConfig};

/// Evenly spaced values on a log scale, endpoints included.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count).map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64)).collect()
        }
    }
}

/// Default fairness weights: zero followed by 24 log-spaced values in [1e-3, 1e3].
pub fn default_lambda_grid() -> Vec<f64> {
    std::iter::once(0.0).chain(log_space(1e-3, 1e3, 24)).collect()
}

/// Candidate ridge weights, ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GammaGrid(Vec<f64>);

impl GammaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(FairError::Config("gamma grid is empty".into()));
        }
        if values.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(FairError::Config("gamma grid values must be finite and > 0".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FairError::Config("gamma grid must be strictly ascending".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for GammaGrid {
    /// 13 log-spaced values in [1e-4, 1e2].
    fn default() -> Self {
        Self(log_space(1e-4, 1e2, 13))
    }
}

impl TryFrom<Vec<f64>> for GammaGrid {
    type Error = FairError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GammaGrid> for Vec<f64> {
    fn from(g: GammaGrid) -> Self {
        g.0
    }
}

/// How many cross pairs to sample per index set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairPolicy {
    /// `2 * min(n1, n2)`
    TwiceMinority,
    Fixed(usize),
    /// Every cross pair.
    All,
}

impl PairPolicy {
    pub fn count(self) -> Option<usize> {
        match self {
            PairPolicy::TwiceMinority => None,
            PairPolicy::Fixed(c) => Some(c),
            PairPolicy::All => Some(usize::MAX),
        }
    }
}

/// Bisection settings for constrained (PoF) solves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    /// Accept `lambda` once `f <= alpha f*` and `f >= (1 - rel_tol) alpha f*`.
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub lambda_max: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-3, max_iterations: 64, lambda_max: 1e8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub seed: u64,
    pub weight_kind: DistanceWeightKind,
    pub pairs: PairPolicy,
    pub hybrid: HybridWeights,
    pub solver: SolverConfig,
    pub constraint: ConstraintConfig,
}

impl ExperimentConfig {
    pub fn for_task(task: Task) -> Self {
        Self {
            folds: 10,
            seed: 0,
            weight_kind: DistanceWeightKind::for_task(task),
            pairs: PairPolicy::TwiceMinority,
            hybrid: HybridWeights::default(),
            solver: SolverConfig::default(),
            constraint: ConstraintConfig::default(),
        }
    }
}

/// Independent sub-seed for stream `stream` of an experiment (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random row subset of size `round(fraction * n)` for large datasets.
pub fn subsample(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    use rand::SeedableRng;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(FairError::Config(format!("subsample fraction must lie in (0, 1], got {fraction}")));
    }
    let keep = ((data.len() as f64 * fraction).round() as usize).max(1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, data.len(), keep).into_vec();
    idx.sort_unstable();
    data.select_rows(&idx)
}

/// One fold's train/test split with its normalization and pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldContext {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub stats: NormalizationStats,
    /// All rows, normalized with the training rows' statistics.
    pub data: Dataset,
    pub train_pairs: CrossPairSet,
    pub test_pairs: CrossPairSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvPlan {
    pub folds: FoldPlan,
    pub contexts: Vec<FoldContext>,
    pub weight_kind: DistanceWeightKind,
    pub hybrid: HybridWeights,
    pub solver: SolverConfig,
}

impl CvPlan {
    pub fn build(data: &Dataset, cfg: &ExperimentConfig) -> Result<Self> {
        let folds = make_stratified_folds(data, cfg.folds, cfg.seed)?;
        Self::with_folds(data, folds, cfg)
    }

    /// Builds per-fold contexts for a given partition. Pair seeds are
    /// derived from the fold plan's seed and the fold index.
    pub fn with_folds(data: &Dataset, folds: FoldPlan, cfg: &ExperimentConfig) -> Result<Self> {
        if folds.assignment.len() != data.len() {
            return Err(FairError::InvalidFolds("fold plan does not cover the dataset".into()));
        }
        let contexts = (0..folds.k)
            .map(|fold| {
                let train = folds.train_indices(fold);
                let test = folds.test_indices(fold);
                let stats = fit_normalization(data, &train)?;
                let normalized = apply_normalization(data, &stats)?;
                let sample = |rows: &[usize], stream: u64| {
                    sample_cross_pairs(
                        &normalized,
                        rows,
                        cfg.pairs.count(),
                        cfg.weight_kind,
                        derive_seed(folds.seed, stream),
                    )
                    .map_err(|e| match e {
                        FairError::EmptyGroup(group) => FairError::FoldMissingGroup { fold, group },
                        other => other,
                    })
                };
                let train_pairs = sample(&train, 2 * fold as u64 + 1)?;
                let test_pairs = sample(&test, 2 * fold as u64 + 2)?;
                Ok(FoldContext { train, test, stats, data: normalized, train_pairs, test_pairs })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { folds, contexts, weight_kind: cfg.weight_kind, hybrid: cfg.hybrid, solver: cfg.solver })
    }

    pub fn task(&self) -> Task {
        self.contexts[0].data.task()
    }
}

/// Hybrid weights with empty label buckets switched off, for scoring
/// held-out folds where a bucket may legitimately have no pairs.
fn evaluation_weights(pairs: &CrossPairSet, data: &Dataset, hybrid: HybridWeights) -> HybridWeights {
    let has = |label: f64| pairs.pairs.iter().any(|&(i, j)| data.label(i) == label && data.label(j) == label);
    HybridWeights {
        positive: if has(1.0) { hybrid.positive } else { 0.0 },
        negative: if has(-1.0) { hybrid.negative } else { 0.0 },
    }
}

/// Accuracy loss and fairness penalty of `params` on a set of rows.
///
/// The loss is the training loss for `loss`; the penalty uses `pairs`,
/// which should be drawn from `fold`. Callers form `acc + lambda * fair`
/// themselves.
pub fn evaluate_on_fold(
    params: &ModelParams,
    data: &Dataset,
    fold: &[usize],
    kind: PenaltyKind,
    pairs: &CrossPairSet,
    loss: LossKind,
    hybrid: HybridWeights,
) -> Result<(f64, f64)> {
    let acc = model::accuracy_loss(params, data, fold, loss)?;
    let weights = evaluation_weights(pairs, data, hybrid);
    let form = build_penalty_form_with(pairs, data, kind, params.mode(), weights)?;
    Ok((acc, crate::fairness::eval_penalty(&form, params)?))
}

/// Solver diagnostics for one trained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

impl From<&SolveResult> for SolveDiagnostics {
    fn from(r: &SolveResult) -> Self {
        Self { iterations: r.iterations, gradient_norm: r.gradient_norm, converged: r.converged }
    }
}

/// One `(gamma, fold)` cell: the model trained off-fold and its scores.
#[derive(Clone, Debug)]
struct Cell {
    params: ModelParams,
    diagnostics: SolveDiagnostics,
    test_loss: f64,
    test_fair: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub lambda: f64,
    pub gammas: Vec<f64>,
    /// Total held-out loss `L(j)` summed over folds.
    pub totals: Vec<f64>,
    /// `fold_losses[j][i]`: held-out loss of fold `i` at `gammas[j]`.
    pub fold_losses: Vec<Vec<f64>>,
    pub selected: usize,
    pub diagnostics: Vec<Vec<SolveDiagnostics>>,
}

impl CVReport {
    pub fn selected_gamma(&self) -> f64 {
        self.gammas[self.selected]
    }
}

/// Index of the smallest total; values within 1e-12 of the minimum tie and
/// resolve to the smallest index (smallest gamma).
pub fn argmin_smallest(totals: &[f64]) -> usize {
    let best = totals.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * best.abs().max(1.0);
    totals.iter().position(|&t| t <= best + slack).unwrap_or(0)
}

struct FoldForms {
    train: Vec<PenaltyForm>,
    test: Vec<PenaltyForm>,
}

fn fold_forms(plan: &CvPlan, kind: PenaltyKind, mode: ModelMode) -> Result<FoldForms> {
    let mut train = Vec::with_capacity(plan.contexts.len());
    let mut test = Vec::with_capacity(plan.contexts.len());
    for ctx in &plan.contexts {
        train.push(build_penalty_form_with(&ctx.train_pairs, &ctx.data, kind, mode, plan.hybrid)?);
        let weights = evaluation_weights(&ctx.test_pairs, &ctx.data, plan.hybrid);
        test.push(build_penalty_form_with(&ctx.test_pairs, &ctx.data, kind, mode, weights)?);
    }
    Ok(FoldForms { train, test })
}

/// Trains every `(gamma, fold)` cell. `warm[j][i]` seeds the iterative solver.
fn run_cells(
    plan: &CvPlan,
    forms: &FoldForms,
    lambda: f64,
    mode: ModelMode,
    gammas: &[f64],
    warm: Option<&[Vec<ModelParams>]>,
) -> Result<Vec<Vec<Cell>>> {
    let k = plan.contexts.len();
    let loss = LossKind::for_task(plan.task());
    let dim = plan.contexts[0].data.dim();
    let cells: Vec<Result<Cell>> = (0..gammas.len() * k)
        .into_par_iter()
        .map(|cell| {
            let (j, i) = (cell / k, cell % k);
            let ctx = &plan.contexts[i];
            let obj = Objective::new(&ctx.data, &ctx.train, loss, &forms.train[i], lambda, gammas[j])?;
            let init = warm.map_or_else(|| ModelParams::zeros(mode, dim), |w| w[j][i].clone());
            let res = solver::solve(&obj, &init, &plan.solver)?;
            let theta = res.params.to_unified();
            let test_loss = model::loss_at(obj.layout(), theta.as_slice(), &ctx.data, &ctx.test, loss);
            let test_fair = forms.test[i].value_at(theta.as_slice());
            Ok(Cell { diagnostics: SolveDiagnostics::from(&res), params: res.params, test_loss, test_fair })
        })
        .collect();
    let mut grid = Vec::with_capacity(gammas.len());
    let mut it = cells.into_iter();
    for _ in 0..gammas.len() {
        grid.push(it.by_ref().take(k).collect::<Result<Vec<_>>>()?);
    }
    Ok(grid)
}

fn report(lambda: f64, gammas: &[f64], cells: &[Vec<Cell>]) -> CVReport {
    let fold_losses: Vec<Vec<f64>> =
        cells.iter().map(|row| row.iter().map(|c| c.test_loss + lambda * c.test_fair).collect()).collect();
    // fold order is fixed, so the sums are reproducible
    let totals: Vec<f64> = fold_losses.iter().map(|row| row.iter().sum()).collect();
    CVReport {
        lambda,
        gammas: gammas.to_vec(),
        selected: argmin_smallest(&totals),
        totals,
        fold_losses,
        diagnostics: cells.iter().map(|row| row.iter().map(|c| c.diagnostics).collect()).collect(),
    }
}

/// Picks the ridge weight for `lambda` by k-fold cross-validation.
///
/// For every candidate and fold the model is trained on the other folds and
/// scored on the held-out fold as `loss + lambda * penalty`, with the
/// penalty measured on pairs drawn inside that fold.
pub fn select_gamma_cv(
    plan: &CvPlan,
    lambda: f64,
    kind: PenaltyKind,
    mode: ModelMode,
    grid: &GammaGrid,
) -> Result<CVReport> {
    let forms = fold_forms(plan, kind, mode)?;
    let cells = run_cells(plan, &forms, lambda, mode, grid.values(), None)?;
    Ok(report(lambda, grid.values(), &cells))
}

/// One point of a cross-validated efficient frontier. Losses and penalties
/// are averaged over folds; logistic accuracy is the squared error of the
/// predicted probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub lambda: f64,
    pub gamma: f64,
    pub train_acc_loss: f64,
    pub test_acc_loss: f64,
    pub train_fair: f64,
    pub test_fair: f64,
    /// Mean over folds of the feature-weight norm.
    pub weight_norm: f64,
    /// Mean over folds of each intercept.
    pub intercepts: Vec<f64>,
    pub converged: bool,
}

fn reported_accuracy(params: &ModelParams, data: &Dataset, rows: &[usize]) -> Result<f64> {
    match data.task() {
        Task::Linear => model::accuracy_loss(params, data, rows, LossKind::MeanSquaredError),
        Task::Logistic => model::probability_mse(params, data, rows),
    }
}

/// Sweeps `lambdas` in order, choosing gamma by cross-validation at each
/// value. Iterative solves are warm-started from the previous lambda.
pub fn sweep_lambda_frontier(
    plan: &CvPlan,
    lambdas: &[f64],
    kind: PenaltyKind,
    mode: ModelMode,
    grid: &GammaGrid,
) -> Result<Vec<FrontierPoint>> {
    if !lambdas.contains(&0.0) {
        return Err(FairError::Config("lambda grid must include 0".into()));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FairError::Config("lambda grid must be ascending, finite and >= 0".into()));
    }
    let forms = fold_forms(plan, kind, mode)?;
    let k = plan.contexts.len() as f64;
    let mut warm: Option<Vec<Vec<ModelParams>>> = None;
    let mut points = Vec::with_capacity(lambdas.len());

    for (step, &lambda) in lambdas.iter().enumerate() {
        let cells = run_cells(plan, &forms, lambda, mode, grid.values(), warm.as_deref())?;
        let cv = report(lambda, grid.values(), &cells);
        let chosen = &cells[cv.selected];

        let mut point = FrontierPoint {
            lambda,
            gamma: cv.selected_gamma(),
            train_acc_loss: 0.0,
            test_acc_loss: 0.0,
            train_fair: 0.0,
            test_fair: 0.0,
            weight_norm: 0.0,
            intercepts: vec![0.0; mode_blocks(mode)],
            converged: true,
        };
        for (i, cell) in chosen.iter().enumerate() {
            let ctx = &plan.contexts[i];
            let theta = cell.params.to_unified();
            point.train_acc_loss += reported_accuracy(&cell.params, &ctx.data, &ctx.train)? / k;
            point.test_acc_loss += reported_accuracy(&cell.params, &ctx.data, &ctx.test)? / k;
            point.train_fair += forms.train[i].value_at(theta.as_slice()) / k;
            point.test_fair += cell.test_fair / k;
            point.weight_norm += cell.params.weight_norm() / k;
            for (acc, b) in point.intercepts.iter_mut().zip(cell.params.intercepts()) {
                *acc += b / k;
            }
            point.converged &= cell.diagnostics.converged;
        }
        info!(
            "{} {} lambda {}/{} = {:.4e}: gamma {:.3e}, test loss {:.6}, test fairness {:.6}",
            kind.name(),
            mode.name(),
            step + 1,
            lambdas.len(),
            lambda,
            point.gamma,
            point.test_acc_loss,
            point.test_fair
        );
        points.push(point);
        warm = Some(cells.into_iter().map(|row| row.into_iter().map(|c| c.params).collect()).collect());
    }
    Ok(points)
}

fn mode_blocks(mode: ModelMode) -> usize {
    match mode {
        ModelMode::SingleModel => 1,
        ModelMode::SeparateModels => 2,
    }
}

/// Element-wise mean of frontiers computed on repeated subsamples.
pub fn average_frontiers(runs: &[Vec<FrontierPoint>]) -> Result<Vec<FrontierPoint>> {
    let first = runs.first().ok_or_else(|| FairError::Config("no frontier runs to average".into()))?;
    let r = runs.len() as f64;
    let mut out = first.clone();
    for (idx, point) in out.iter_mut().enumerate() {
        let column: Vec<&FrontierPoint> = runs.iter().map(|run| &run[idx]).collect();
        let mean = |f: fn(&FrontierPoint) -> f64| column.iter().map(|p| f(p)).sum::<f64>() / r;
        point.gamma = mean(|p| p.gamma);
        point.train_acc_loss = mean(|p| p.train_acc_loss);
        point.test_acc_loss = mean(|p| p.test_acc_loss);
        point.train_fair = mean(|p| p.train_fair);
        point.test_fair = mean(|p| p.test_fair);
        point.weight_norm = mean(|p| p.weight_norm);
        for (b, slot) in point.intercepts.iter_mut().enumerate() {
            *slot = column.iter().map(|p| p.intercepts[b]).sum::<f64>() / r;
        }
        point.converged = column.iter().all(|p| p.converged);
    }
    Ok(out)
}

/// In-sample fit at fixed gamma.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    /// Accuracy loss alone.
    pub loss: f64,
    /// Accuracy loss plus the ridge term: the quantity traded against the penalty.
    pub regularized_loss: f64,
    pub penalty: f64,
    pub params: ModelParams,
    pub converged: bool,
}

/// Shared state for repeated in-sample solves at one gamma.
struct InSample<'a> {
    data: &'a Dataset,
    indices: &'a [usize],
    form: PenaltyForm,
    gamma: f64,
    solver: SolverConfig,
}

impl<'a> InSample<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        data: &'a Dataset,
        indices: &'a [usize],
        pairs: &CrossPairSet,
        kind: PenaltyKind,
        mode: ModelMode,
        gamma: f64,
        hybrid: HybridWeights,
        solver: SolverConfig,
    ) -> Result<Self> {
        let form = build_penalty_form_with(pairs, data, kind, mode, hybrid)?;
        Ok(Self { data, indices, form, gamma, solver })
    }

    fn fit(&self, lambda: f64, init: &ModelParams) -> Result<PathPoint> {
        let loss = LossKind::for_task(self.data.task());
        let obj = Objective::new(self.data, self.indices, loss, &self.form, lambda, self.gamma)?;
        let res = solver::solve(&obj, init, &self.solver)?;
        let theta = res.params.to_unified();
        let acc = obj.loss_at(theta.as_slice());
        Ok(PathPoint {
            lambda,
            loss: acc,
            regularized_loss: acc + self.gamma * obj.ridge_at(theta.as_slice()),
            penalty: obj.penalty_at(theta.as_slice()),
            params: res.params,
            converged: res.converged,
        })
    }
}

/// Exact in-sample minimizers along `lambdas` at a fixed `gamma`, warm-started
/// in order.
#[allow(clippy::too_many_arguments)]
pub fn regularization_path(
    data: &Dataset,
    indices: &[usize],
    pairs: &CrossPairSet,
    lambdas: &[f64],
    kind: PenaltyKind,
    mode: ModelMode,
    gamma: f64,
    hybrid: HybridWeights,
    solver: &SolverConfig,
) -> Result<Vec<PathPoint>> {
    let fitter = InSample::new(data, indices, pairs, kind, mode, gamma, hybrid, *solver)?;
    let mut init = ModelParams::zeros(mode, data.dim());
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let point = fitter.fit(lambda, &init)?;
        init = point.params.clone();
        out.push(point);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoFPoint {
    pub alpha: f64,
    pub pof: f64,
    /// `f(theta) / f(w*)` at the reported solution.
    pub achieved_ratio: f64,
    pub lambda: f64,
    /// Set when the unconstrained penalty is zero and every constraint is vacuous.
    pub warning: Option<String>,
}

/// Penalties at or below this count as zero when normalizing PoF.
pub const DEGENERATE_PENALTY: f64 = 1e-14;

/// Price of Fairness over descending `alphas` in (0, 1].
///
/// `w*` is the `lambda = 0` fit at `gamma`. For each `alpha` the smallest
/// `lambda` whose in-sample minimizer satisfies `f <= alpha f(w*)` is found
/// by log-scale bisection, and PoF is the ratio of regularized accuracy
/// losses. Successive alphas start from the previous bracket, so the
/// reported `lambda` (and therefore PoF) is monotone.
#[allow(clippy::too_many_arguments)]
pub fn compute_pof(
    data: &Dataset,
    indices: &[usize],
    pairs: &CrossPairSet,
    alphas: &[f64],
    kind: PenaltyKind,
    mode: ModelMode,
    gamma: f64,
    hybrid: HybridWeights,
    solver: &SolverConfig,
    constraint: &ConstraintConfig,
) -> Result<Vec<PoFPoint>> {
    if alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(FairError::Config("alphas must lie in (0, 1]".into()));
    }
    if alphas.windows(2).any(|w| w[0] <= w[1]) {
        return Err(FairError::Config("alphas must be strictly descending".into()));
    }
    let fitter = InSample::new(data, indices, pairs, kind, mode, gamma, hybrid, *solver)?;
    let base = fitter.fit(0.0, &ModelParams::zeros(mode, data.dim()))?;
    let f_star = base.penalty;
    let l_star = base.regularized_loss;

    if f_star <= DEGENERATE_PENALTY {
        let warning = Some(format!("unconstrained penalty is {f_star:e}; PoF is identically 1"));
        return Ok(alphas
            .iter()
            .map(|&alpha| PoFPoint { alpha, pof: 1.0, achieved_ratio: 1.0, lambda: 0.0, warning: warning.clone() })
            .collect());
    }

    let floor = constraint.lambda_max * 1e-16;
    let mut hi_point = base.clone();
    let mut top: Option<PathPoint> = None;
    let mut out = Vec::with_capacity(alphas.len());

    for &alpha in alphas {
        let target = alpha * f_star;
        if hi_point.penalty > target {
            // the previous solution is infeasible now; bracket again above it
            let mut lo = hi_point.lambda;
            hi_point = match &top {
                Some(p) => p.clone(),
                None => {
                    let p = fitter.fit(constraint.lambda_max, &hi_point.params)?;
                    top = Some(p.clone());
                    p
                }
            };
            if hi_point.penalty > target {
                return Err(FairError::Constraint(format!(
                    "alpha = {alpha} not reached with lambda <= {:e}",
                    constraint.lambda_max
                )));
            }
            for _ in 0..constraint.max_iterations {
                if hi_point.penalty >= (1.0 - constraint.rel_tol) * target {
                    break;
                }
                let mid = (lo.max(floor) * hi_point.lambda).sqrt();
                if mid <= lo || mid >= hi_point.lambda {
                    break;
                }
                let p = fitter.fit(mid, &hi_point.params)?;
                if p.penalty <= target {
                    hi_point = p;
                } else {
                    lo = mid;
                }
            }
        }
        out.push(PoFPoint {
            alpha,
            pof: hi_point.regularized_loss / l_star,
            achieved_ratio: hi_point.penalty / f_star,
            lambda: hi_point.lambda,
            warning: None,
        });
    }
    Ok(out)
}

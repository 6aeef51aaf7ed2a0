//! Run configuration and subcommand implementations behind the `fairreg` binary.
//!
//! Every command computes all results first and writes its output files at
//! the end, so a failed run leaves no partial files behind.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fairreg::experiment::{derive_seed, subsample, ConstraintConfig};
use fairreg::synthetic::{generate, SyntheticSpec};
use fairreg::*;
use log::{info, warn};
use serde::{Deserialize, Serialize};

/// Stream ids for [`derive_seed`], kept apart from fold and pair streams.
const SUBSAMPLE_STREAM: u64 = 1 << 32;
const REPEAT_STREAM: u64 = 2 << 32;
const IN_SAMPLE_PAIR_STREAM: u64 = 3 << 32;

/// Relative slack of the PoF monotonicity guard.
pub const POF_MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug)]
pub enum CliError {
    /// Bad input, config or files. Exit status 1.
    Validation(String),
    /// Solver or constraint failure. Exit status 2.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Validation(m) | CliError::Numerical(m) => m,
        };
        f.write_str(&msg.replace('\n', "; "))
    }
}

impl std::error::Error for CliError {}

impl From<FairError> for CliError {
    fn from(e: FairError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn io_error(path: &Path, e: impl fmt::Display) -> CliError {
    invalid(format!("cannot write {}: {e}", path.display()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyChoice {
    Individual,
    Group,
    Hybrid,
    /// Every penalty that applies to the dataset's task.
    #[default]
    All,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeChoice {
    Single,
    Separate,
    #[default]
    Both,
}

impl ModeChoice {
    pub fn modes(self) -> Vec<ModelMode> {
        match self {
            ModeChoice::Single => vec![ModelMode::SingleModel],
            ModeChoice::Separate => vec![ModelMode::SeparateModels],
            ModeChoice::Both => ModelMode::ALL.to_vec(),
        }
    }
}

/// Either explicit values or `count` log-spaced values in `[lo, hi]`,
/// optionally preceded by 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    LogSpace {
        lo: f64,
        hi: f64,
        count: usize,
        #[serde(default)]
        zero: bool,
    },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::Values(v) => v.clone(),
            GridSpec::LogSpace { lo, hi, count, zero } => {
                let mut v = if *zero { vec![0.0] } else { Vec::new() };
                v.extend(experiment::log_space(*lo, *hi, *count));
                v
            }
        }
    }
}

fn default_lambdas() -> GridSpec {
    GridSpec::LogSpace { lo: 1e-3, hi: 1e3, count: 24, zero: true }
}

fn default_gammas() -> GridSpec {
    GridSpec::LogSpace { lo: 1e-4, hi: 1e2, count: 13, zero: false }
}

fn default_alphas() -> Vec<f64> {
    vec![1.0, 0.75, 0.5, 0.25, 0.1]
}

fn default_folds() -> usize {
    10
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Synthetic data in place of a CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub task: Task,
    pub n: usize,
    pub dim: usize,
    pub noise: Option<f64>,
    pub feature_shift: Option<f64>,
    pub label_shift: Option<f64>,
    pub group_one_fraction: Option<f64>,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

impl SyntheticConfig {
    fn spec(&self, run_seed: u64) -> SyntheticSpec {
        let base = match self.task {
            Task::Linear => SyntheticSpec::linear(),
            Task::Logistic => SyntheticSpec::logistic(),
        };
        SyntheticSpec {
            task: self.task,
            n: self.n,
            dim: self.dim,
            noise: self.noise.unwrap_or(base.noise),
            feature_shift: self.feature_shift.unwrap_or(base.feature_shift),
            label_shift: self.label_shift.unwrap_or(base.label_shift),
            group_one_fraction: self.group_one_fraction.unwrap_or(base.group_one_fraction),
            seed: self.seed.unwrap_or(run_seed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsampleConfig {
    pub fraction: f64,
    #[serde(default = "one")]
    pub repeats: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self { tolerance: s.tolerance, max_iterations: s.max_iterations }
    }
}

/// Everything a run needs. Loaded from TOML (or JSON by extension); command
/// line flags override individual fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub penalty: PenaltyChoice,
    #[serde(default)]
    pub mode: ModeChoice,
    /// Defaults to Gaussian for linear tasks and indicator for logistic ones.
    #[serde(default)]
    pub weight: Option<DistanceWeightKind>,
    #[serde(default = "default_lambdas")]
    pub lambdas: GridSpec,
    #[serde(default = "default_gammas")]
    pub gammas: GridSpec,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_pairs")]
    pub pairs: PairPolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub subsample: Option<SubsampleConfig>,
    #[serde(default)]
    pub hybrid: HybridWeights,
    /// Price-of-fairness levels, strictly descending in (0, 1].
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Lambda used by `cv-gamma`.
    #[serde(default)]
    pub lambda: f64,
    /// Fixed ridge weight for `pof`; chosen by cross-validation at lambda 0 when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub constraint: ConstraintConfig,
}

fn default_pairs() -> PairPolicy {
    PairPolicy::TwiceMinority
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<ModeChoice>,
    pub penalty: Option<PenaltyChoice>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| invalid(format!("invalid config: {}", e.message())))
    }

    pub fn from_json_str(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("invalid config: {e}")))
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        cfg.map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.dataset {
            self.dataset = Some(p.clone());
            self.synthetic = None;
        }
        if let Some(p) = &o.schema {
            self.schema = Some(p.clone());
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(p) = o.penalty {
            self.penalty = p;
        }
    }

    /// Checks everything that can be checked without touching the data.
    pub fn validate(&self) -> CliResult<()> {
        match (&self.dataset, &self.schema, &self.synthetic) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            (Some(_), None, None) => return Err(invalid("dataset requires a schema file")),
            _ => return Err(invalid("config must set either dataset and schema, or [synthetic]")),
        }
        if let Some(s) = &self.synthetic {
            if s.n < 2 || s.dim == 0 {
                return Err(invalid("synthetic data needs n >= 2 and dim >= 1"));
            }
        }
        if self.folds < 2 {
            return Err(invalid(format!("folds must be >= 2, got {}", self.folds)));
        }
        let lambdas = self.lambdas.values();
        if lambdas.is_empty() || lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(invalid("lambda grid must be non-empty, finite and >= 0"));
        }
        if lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("lambda grid must be strictly ascending"));
        }
        self.gamma_grid()?;
        if self.alphas.is_empty()
            || self.alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0))
            || self.alphas.windows(2).any(|w| w[0] <= w[1])
        {
            return Err(invalid("alphas must be strictly descending values in (0, 1]"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(invalid("lambda must be finite and >= 0"));
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g >= 0.0) {
                return Err(invalid("gamma must be finite and >= 0"));
            }
        }
        if let Some(s) = self.subsample {
            if !(s.fraction > 0.0 && s.fraction <= 1.0) || s.repeats == 0 {
                return Err(invalid("subsample needs fraction in (0, 1] and repeats >= 1"));
            }
        }
        let h = self.hybrid;
        if !(h.positive.is_finite() && h.negative.is_finite() && h.positive >= 0.0 && h.negative >= 0.0) {
            return Err(invalid("hybrid weights must be finite and >= 0"));
        }
        if let Some(DistanceWeightKind::Constant(c)) = self.weight {
            if !c.is_finite() {
                return Err(invalid("constant weight must be finite"));
            }
        }
        if self.pairs == PairPolicy::Fixed(0) {
            return Err(invalid("pair count must be >= 1"));
        }
        let c = self.constraint;
        if !(c.rel_tol > 0.0 && c.rel_tol < 1.0 && c.lambda_max > 0.0 && c.max_iterations > 0) {
            return Err(invalid("constraint needs rel_tol in (0, 1), lambda_max > 0, max_iterations >= 1"));
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_iterations == 0 {
            return Err(invalid("solver needs tolerance > 0 and max_iterations >= 1"));
        }
        Ok(())
    }

    pub fn gamma_grid(&self) -> CliResult<GammaGrid> {
        Ok(GammaGrid::new(self.gammas.values())?)
    }

    /// The config with every grid spelled out and the synthetic seed filled in.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        c.lambdas = GridSpec::Values(self.lambdas.values());
        c.gammas = GridSpec::Values(self.gammas.values());
        if let Some(s) = &mut c.synthetic {
            s.seed = Some(s.seed.unwrap_or(self.seed));
        }
        c
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            ..Default::default()
        }
    }

    fn experiment(&self, task: Task, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            folds: self.folds,
            seed,
            weight_kind: self.weight.unwrap_or(DistanceWeightKind::for_task(task)),
            pairs: self.pairs,
            hybrid: self.hybrid,
            solver: self.solver_config(),
            constraint: self.constraint,
        }
    }

    /// Penalty kinds to run on a dataset of `task`.
    pub fn penalty_kinds(&self, task: Task) -> CliResult<Vec<PenaltyKind>> {
        let kind = match self.penalty {
            PenaltyChoice::All => return Ok(PenaltyKind::ALL.into_iter().filter(|k| k.applies_to(task)).collect()),
            PenaltyChoice::Individual => PenaltyKind::Individual,
            PenaltyChoice::Group => PenaltyKind::Group,
            PenaltyChoice::Hybrid => PenaltyKind::Hybrid,
        };
        if !kind.applies_to(task) {
            return Err(FairError::HybridRequiresBinaryLabels.into());
        }
        Ok(vec![kind])
    }

    /// Loads the full dataset named by the config.
    pub fn load_dataset(&self) -> CliResult<Dataset> {
        if let Some(s) = &self.synthetic {
            return Ok(generate(&s.spec(self.seed)));
        }
        let (Some(path), Some(schema)) = (&self.dataset, &self.schema) else {
            return Err(invalid("config must set either dataset and schema, or [synthetic]"));
        };
        if !schema.exists() {
            return Err(invalid(format!("schema file not found: {}", schema.display())));
        }
        if !path.exists() {
            return Err(invalid(format!("dataset file not found: {}", path.display())));
        }
        let schema = Schema::load(schema)?;
        Ok(load_csv(path, &schema)?)
    }

    /// The dataset for repeat `r`, subsampled when configured.
    fn working_data(&self, full: &Dataset, r: usize) -> CliResult<Dataset> {
        match self.subsample {
            Some(s) if s.fraction < 1.0 => {
                Ok(subsample(full, s.fraction, derive_seed(self.seed, SUBSAMPLE_STREAM + r as u64))?)
            }
            _ => Ok(full.clone()),
        }
    }

    fn repeats(&self) -> usize {
        self.subsample.map_or(1, |s| s.repeats)
    }
}

/// A frontier CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub lambda: f64,
    pub gamma: f64,
    pub train_acc_loss: f64,
    pub test_acc_loss: f64,
    pub train_fair: f64,
    pub test_fair: f64,
}

impl From<&FrontierPoint> for FrontierRow {
    fn from(p: &FrontierPoint) -> Self {
        Self {
            lambda: p.lambda,
            gamma: p.gamma,
            train_acc_loss: p.train_acc_loss,
            test_acc_loss: p.test_acc_loss,
            train_fair: p.train_fair,
            test_fair: p.test_fair,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierDocument {
    pub config: RunConfig,
    pub seed: u64,
    pub penalty: PenaltyKind,
    pub mode: ModelMode,
    pub points: Vec<FrontierPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PofDocument {
    pub config: RunConfig,
    pub seed: u64,
    pub penalty: PenaltyKind,
    pub mode: ModelMode,
    pub gamma: f64,
    pub points: Vec<PoFPoint>,
}

#[derive(Serialize)]
struct PofRow<'a> {
    alpha: f64,
    pof: f64,
    lambda: f64,
    achieved_ratio: f64,
    warning: &'a str,
}

#[derive(Serialize)]
struct CvRow {
    kind: &'static str,
    gamma: f64,
    total_loss: f64,
}

pub fn frontier_stem(kind: PenaltyKind, mode: ModelMode) -> String {
    format!("frontier_{}_{}", kind.name(), mode.name())
}

pub fn pof_stem(kind: PenaltyKind, mode: ModelMode) -> String {
    format!("pof_{}_{}", kind.name(), mode.name())
}

pub fn cv_stem(kind: PenaltyKind, mode: ModelMode) -> String {
    format!("cv_{}_{}", kind.name(), mode.name())
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| invalid(format!("csv encoding failed: {e}")))?;
    }
    w.into_inner().map_err(|e| invalid(format!("csv encoding failed: {e}")))
}

fn json_bytes<T: Serialize>(doc: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(doc).map_err(|e| invalid(format!("json encoding failed: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes every `(path, bytes)` pair, creating the output directory.
fn write_all(out: &Path, files: Vec<(PathBuf, Vec<u8>)>) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
        info!("wrote {}", path.display());
        written.push(path);
    }
    Ok(written)
}

fn combos(cfg: &RunConfig, task: Task) -> CliResult<Vec<(PenaltyKind, ModelMode)>> {
    let kinds = cfg.penalty_kinds(task)?;
    Ok(kinds.iter().flat_map(|&k| cfg.mode.modes().into_iter().map(move |m| (k, m))).collect())
}

/// Cross-validated frontier for every selected (penalty, mode) combination.
/// Writes `frontier_<penalty>_<mode>.csv` and `.json` per combination.
pub fn cmd_frontier(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let full = cfg.load_dataset()?;
    let combos = combos(cfg, full.task())?;
    let lambdas = cfg.lambdas.values();
    let grid = cfg.gamma_grid()?;
    let repeats = cfg.repeats();

    let mut runs: Vec<Vec<Vec<FrontierPoint>>> = vec![Vec::with_capacity(repeats); combos.len()];
    for r in 0..repeats {
        let data = cfg.working_data(&full, r)?;
        let seed = if repeats == 1 { cfg.seed } else { derive_seed(cfg.seed, REPEAT_STREAM + r as u64) };
        let plan = CvPlan::build(&data, &cfg.experiment(data.task(), seed))?;
        for (slot, &(kind, mode)) in combos.iter().enumerate() {
            runs[slot].push(sweep_lambda_frontier(&plan, &lambdas, kind, mode, &grid)?);
        }
    }

    let resolved = cfg.resolved();
    let mut files = Vec::new();
    for ((kind, mode), run) in combos.into_iter().zip(runs) {
        let points = experiment::average_frontiers(&run)?;
        if points.iter().any(|p| !p.converged) {
            warn!("{} {}: some solves did not converge", kind.name(), mode.name());
        }
        let stem = frontier_stem(kind, mode);
        files.push((cfg.out.join(format!("{stem}.csv")), csv_bytes(points.iter().map(FrontierRow::from))?));
        let doc = FrontierDocument { config: resolved.clone(), seed: cfg.seed, penalty: kind, mode, points };
        files.push((cfg.out.join(format!("{stem}.json")), json_bytes(&doc)?));
    }
    write_all(&cfg.out, files)
}

/// Fails when PoF decreases as alpha decreases, or drops below 1, by more
/// than `tol` (relative). Either means the constrained solves went wrong.
pub fn check_pof_monotone(points: &[PoFPoint], tol: f64) -> CliResult<()> {
    for p in points {
        if !p.pof.is_finite() || p.pof < 1.0 - tol {
            return Err(CliError::Numerical(format!("PoF {} at alpha {} is below 1", p.pof, p.alpha)));
        }
    }
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.alpha < a.alpha && b.pof < a.pof - tol * a.pof.abs().max(1.0) {
            return Err(CliError::Numerical(format!(
                "PoF not monotone: {} at alpha {} but {} at alpha {}",
                a.pof, a.alpha, b.pof, b.alpha
            )));
        }
    }
    Ok(())
}

/// Validates `doc` and writes `pof_<penalty>_<mode>.csv` and `.json` into `out`.
/// Nothing is written when validation fails.
pub fn emit_pof(out: &Path, docs: &[PofDocument]) -> CliResult<Vec<PathBuf>> {
    for doc in docs {
        check_pof_monotone(&doc.points, POF_MONOTONE_TOL)
            .map_err(|e| CliError::Numerical(format!("{} {}: {e}", doc.penalty.name(), doc.mode.name())))?;
    }
    let mut files = Vec::new();
    for doc in docs {
        let stem = pof_stem(doc.penalty, doc.mode);
        let rows = doc.points.iter().map(|p| PofRow {
            alpha: p.alpha,
            pof: p.pof,
            lambda: p.lambda,
            achieved_ratio: p.achieved_ratio,
            warning: p.warning.as_deref().unwrap_or(""),
        });
        files.push((out.join(format!("{stem}.csv")), csv_bytes(rows)?));
        files.push((out.join(format!("{stem}.json")), json_bytes(doc)?));
    }
    write_all(out, files)
}

/// Dataset normalized over all of its rows, with cross pairs drawn from all rows.
fn in_sample(cfg: &RunConfig, data: &Dataset) -> CliResult<(Dataset, CrossPairSet)> {
    let all = data.all_indices();
    let stats = fit_normalization(data, &all)?;
    let norm = apply_normalization(data, &stats)?;
    let weight = cfg.weight.unwrap_or(DistanceWeightKind::for_task(data.task()));
    let pairs =
        sample_cross_pairs(&norm, &all, cfg.pairs.count(), weight, derive_seed(cfg.seed, IN_SAMPLE_PAIR_STREAM))?;
    Ok((norm, pairs))
}

/// In-sample Price of Fairness over the configured alphas.
pub fn cmd_pof(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let data = cfg.working_data(&cfg.load_dataset()?, 0)?;
    let combos = combos(cfg, data.task())?;
    let (norm, pairs) = in_sample(cfg, &data)?;
    let all = norm.all_indices();
    let solver = cfg.solver_config();
    let resolved = cfg.resolved();

    let plan = match cfg.gamma {
        Some(_) => None,
        None => Some(CvPlan::build(&data, &cfg.experiment(data.task(), cfg.seed))?),
    };
    let grid = cfg.gamma_grid()?;
    let mut docs = Vec::with_capacity(combos.len());
    for (kind, mode) in combos {
        let gamma = match (&plan, cfg.gamma) {
            (_, Some(g)) => g,
            (Some(plan), None) => select_gamma_cv(plan, 0.0, kind, mode, &grid)?.selected_gamma(),
            (None, None) => unreachable!("plan exists whenever gamma is unset"),
        };
        let points =
            compute_pof(&norm, &all, &pairs, &cfg.alphas, kind, mode, gamma, cfg.hybrid, &solver, &cfg.constraint)?;
        for p in &points {
            if let Some(w) = &p.warning {
                warn!("{} {}: {w}", kind.name(), mode.name());
                break;
            }
        }
        info!(
            "{} {}: gamma {gamma:.3e}, PoF at alpha {} = {:.6}",
            kind.name(),
            mode.name(),
            points.last().map_or(1.0, |p| p.alpha),
            points.last().map_or(1.0, |p| p.pof)
        );
        docs.push(PofDocument { config: resolved.clone(), seed: cfg.seed, penalty: kind, mode, gamma, points });
    }
    emit_pof(&cfg.out, &docs)
}

/// Cross-validated choice of gamma at `cfg.lambda`. Each `cv_<penalty>_<mode>.csv`
/// has one `grid` row per candidate followed by one `selected` row.
pub fn cmd_cv_gamma(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let data = cfg.working_data(&cfg.load_dataset()?, 0)?;
    let combos = combos(cfg, data.task())?;
    let grid = cfg.gamma_grid()?;
    let plan = CvPlan::build(&data, &cfg.experiment(data.task(), cfg.seed))?;
    let mut files = Vec::new();
    for (kind, mode) in combos {
        let report = select_gamma_cv(&plan, cfg.lambda, kind, mode, &grid)?;
        info!("{} {}: selected gamma {:.3e}", kind.name(), mode.name(), report.selected_gamma());
        let mut rows: Vec<CvRow> = report
            .gammas
            .iter()
            .zip(&report.totals)
            .map(|(&gamma, &total_loss)| CvRow { kind: "grid", gamma, total_loss })
            .collect();
        rows.push(CvRow {
            kind: "selected",
            gamma: report.selected_gamma(),
            total_loss: report.totals[report.selected],
        });
        files.push((cfg.out.join(format!("{}.csv", cv_stem(kind, mode))), csv_bytes(rows)?));
    }
    write_all(&cfg.out, files)
}

/// Penalty values of a stored model on the (normalized) dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyReport {
    pub values: Vec<(PenaltyKind, f64)>,
    pub loss: LossKind,
    pub accuracy_loss: f64,
}

impl fmt::Display for PenaltyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (kind, v) in &self.values {
            let label = match kind {
                PenaltyKind::Individual => "f1",
                PenaltyKind::Group => "f2",
                PenaltyKind::Hybrid => "f3",
            };
            writeln!(f, "{label} ({}) = {v:e}", kind.name())?;
        }
        write!(f, "{} = {:e}", self.loss.name(), self.accuracy_loss)
    }
}

pub fn load_model(path: &Path) -> CliResult<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read model {}: {e}", path.display())))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| invalid(format!("invalid model {}: {e}", path.display())))?;
    Ok(ModelParams::try_from(file)?)
}

/// Evaluates every selected penalty and the accuracy loss of `params`.
/// Features are normalized over all rows, as in `pof`.
pub fn cmd_penalty_eval(cfg: &RunConfig, params: &ModelParams) -> CliResult<PenaltyReport> {
    cfg.validate()?;
    let data = cfg.load_dataset()?;
    let kinds = cfg.penalty_kinds(data.task())?;
    if params.dim() != data.dim() {
        return Err(FairError::DimensionMismatch { expected: data.dim(), actual: params.dim() }.into());
    }
    let (norm, pairs) = in_sample(cfg, &data)?;
    let mut values = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let form = fairness::build_penalty_form_with(&pairs, &norm, kind, params.mode(), cfg.hybrid)?;
        values.push((kind, eval_penalty(&form, params)?));
    }
    let loss = LossKind::for_task(norm.task());
    let accuracy_loss = accuracy_loss(params, &norm, &norm.all_indices(), loss)?;
    Ok(PenaltyReport { values, loss, accuracy_loss })
}

/// Same pairs and normalized data `cmd_penalty_eval` uses, for cross-checks.
pub fn penalty_eval_inputs(cfg: &RunConfig) -> CliResult<(Dataset, CrossPairSet)> {
    let data = cfg.load_dataset()?;
    in_sample(cfg, &data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(alpha: f64, pof: f64) -> PoFPoint {
        PoFPoint { alpha, pof, achieved_ratio: alpha, lambda: 0.0, warning: None }
    }

    #[test]
    fn default_config_grids() {
        let c = RunConfig::default();
        assert_eq!(c.lambdas.values().len(), 25);
        assert_eq!(c.lambdas.values()[0], 0.0);
        assert_eq!(c.gammas.values().len(), 13);
        assert_eq!(c.folds, 10);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = RunConfig::from_toml_str("seed = 1\nfoo = 2\n").unwrap_err();
        assert!(e.to_string().contains("foo"), "{e}");
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::from_toml_str("seed = 1\nmode = \"single\"\n").unwrap();
        c.apply(&Overrides { seed: Some(9), mode: Some(ModeChoice::Both), ..Default::default() });
        assert_eq!(c.seed, 9);
        assert_eq!(c.mode, ModeChoice::Both);
    }

    #[test]
    fn grid_spec_forms() {
        let c =
            RunConfig::from_toml_str("lambdas = [0.0, 1.0]\ngammas = { lo = 0.1, hi = 10.0, count = 3 }\n").unwrap();
        assert_eq!(c.lambdas.values(), vec![0.0, 1.0]);
        let g = c.gammas.values();
        assert_eq!(g.len(), 3);
        assert!((g[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_catches_bad_values() {
        let base = "[synthetic]\ntask = \"linear\"\nn = 20\ndim = 2\n";
        assert!(RunConfig::from_toml_str(base).unwrap().validate().is_ok());
        for extra in ["folds = 1\n", "alphas = [0.5, 1.0]\n", "lambdas = [1.0, 0.5]\n", "gammas = [0.0]\n"] {
            let c = RunConfig::from_toml_str(&format!("{extra}{base}")).unwrap();
            assert_eq!(c.validate().unwrap_err().exit_code(), 1, "{extra}");
        }
        assert!(RunConfig::default().validate().is_err());
    }

    #[test]
    fn hybrid_on_linear_rejected() {
        let c = RunConfig { penalty: PenaltyChoice::Hybrid, ..Default::default() };
        assert_eq!(c.penalty_kinds(Task::Linear).unwrap_err().to_string(), "hybrid requires binary labels");
        let all = RunConfig::default();
        assert_eq!(all.penalty_kinds(Task::Linear).unwrap().len(), 2);
        assert_eq!(all.penalty_kinds(Task::Logistic).unwrap().len(), 3);
    }

    #[test]
    fn pof_guard() {
        assert!(check_pof_monotone(&[point(1.0, 1.0), point(0.5, 1.2), point(0.1, 1.2)], 1e-9).is_ok());
        let e = check_pof_monotone(&[point(1.0, 1.0), point(0.5, 1.3), point(0.1, 1.2)], 1e-9).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(check_pof_monotone(&[point(1.0, 0.9)], 1e-9).is_err());
    }

    #[test]
    fn numerical_errors_map_to_exit_two() {
        assert_eq!(CliError::from(FairError::SingularSystem).exit_code(), 2);
        assert_eq!(CliError::from(FairError::EmptyIndexSet).exit_code(), 1);
    }
}

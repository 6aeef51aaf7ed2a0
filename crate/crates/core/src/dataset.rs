//! Tabular data: loading, normalization, folds and cross-pair sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::fairness::DistanceWeightKind;

/// Protected-group membership.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    One,
    Two,
}

impl Group {
    pub fn id(self) -> u8 {
        match self {
            Group::One => 1,
            Group::Two => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Group::One),
            2 => Ok(Group::Two),
            other => Err(FairError::InvalidGroup(other)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Linear,
    Logistic,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Linear => "linear",
            Task::Logistic => "logistic",
        }
    }
}

/// Features, labels and group membership for `n` rows.
///
/// Features are stored row-major. The struct is immutable once built; all
/// transformations return new values.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<f64>,
    groups: Vec<Group>,
    task: Task,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from row vectors, checking the structural invariants.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<f64>, groups: Vec<Group>, task: Task) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let names = (0..dim).map(|j| format!("x{j}")).collect();
        let mut features = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(FairError::InvalidData(format!("row {i} has {} features, expected {dim}", row.len())));
            }
            features.extend_from_slice(row);
        }
        Self::from_parts(features, dim, labels, groups, task, names)
    }

    pub(crate) fn from_parts(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<f64>,
        groups: Vec<Group>,
        task: Task,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        if groups.len() != n || features.len() != n * dim {
            return Err(FairError::InvalidData(format!(
                "inconsistent lengths: {n} labels, {} groups, {} feature cells for dim {dim}",
                groups.len(),
                features.len()
            )));
        }
        if feature_names.len() != dim {
            return Err(FairError::InvalidData("feature name count does not match dim".into()));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(FairError::InvalidData(format!(
                "non-finite feature at row {}, column {}",
                pos / dim.max(1),
                pos % dim.max(1)
            )));
        }
        if let Some(i) = labels.iter().position(|v| !v.is_finite()) {
            return Err(FairError::InvalidData(format!("non-finite label at row {i}")));
        }
        if task == Task::Logistic {
            if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
                return Err(FairError::InvalidData(format!(
                    "logistic label at row {i} is {}, expected -1 or +1",
                    labels[i]
                )));
            }
        }
        for g in [Group::One, Group::Two] {
            if !groups.contains(&g) {
                return Err(FairError::EmptyGroup(g.id()));
            }
        }
        Ok(Self { features, dim, labels, groups, task, feature_names })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn group(&self, i: usize) -> Group {
        self.groups[i]
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Splits `indices` by group, preserving order.
    pub fn split_by_group(&self, indices: &[usize]) -> (Vec<usize>, Vec<usize>) {
        indices.iter().partition(|&&i| self.groups[i] == Group::One)
    }

    /// Copies the given rows into a new dataset. Both groups must survive.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self::from_parts(
            features,
            self.dim,
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.groups[i]).collect(),
            self.task,
            self.feature_names.clone(),
        )
    }
}

/// Column roles for [`load_csv`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub target: String,
    pub protected: String,
    pub task: Task,
    /// Raw target value mapped to +1 for logistic tasks; everything else maps to -1.
    #[serde(default)]
    pub positive_label: Option<String>,
    /// Raw protected value that becomes group 1. Defaults to the
    /// lexicographically smaller of the two values.
    #[serde(default)]
    pub group_one: Option<String>,
}

impl Schema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(text).map_err(|e| FairError::Schema(e.message().to_string()))?;
        if schema.task == Task::Logistic && schema.positive_label.is_none() {
            return Err(FairError::Schema("logistic task requires positive_label".into()));
        }
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| FairError::Io { path: path.into(), source })?;
        Self::from_toml_str(&text)
    }
}

fn is_missing(cell: &str) -> bool {
    let cell = cell.trim();
    cell.is_empty() || cell == "NA"
}

fn same_label(raw: &str, positive: &str) -> bool {
    let (raw, positive) = (raw.trim(), positive.trim());
    if raw == positive {
        return true;
    }
    matches!((raw.parse::<f64>(), positive.parse::<f64>()), (Ok(a), Ok(b)) if a == b)
}

/// Loads a comma-separated file with a header row.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|source| FairError::Io { path: path.into(), source })?;
    load_csv_reader(file, schema).map_err(|e| match e {
        FairError::Csv { message, .. } => FairError::Csv { path: path.into(), message },
        other => other,
    })
}

/// Same as [`load_csv`] over any reader.
///
/// Non-numeric feature columns are expanded to one indicator per level.
/// Columns with missing cells get an extra `<name>_missing` indicator,
/// appended after all other features; numeric gaps are filled with the
/// column's observed mean.
pub fn load_csv_reader<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let csv_err = |e: csv::Error| FairError::Csv { path: "<reader>".into(), message: e.to_string() };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in rdr.records() {
        rows.push(record.map_err(csv_err)?.iter().map(str::to_string).collect());
    }

    let column =
        |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| FairError::MissingColumn(name.to_string()));
    let target_col = column(&schema.target)?;
    let protected_col = column(&schema.protected)?;

    // Protected attribute.
    let mut levels = BTreeSet::new();
    for (r, row) in rows.iter().enumerate() {
        let v = &row[protected_col];
        if is_missing(v) {
            return Err(FairError::InvalidData(format!("missing protected value at row {}", r + 1)));
        }
        levels.insert(v.clone());
    }
    if levels.len() > 2 {
        return Err(FairError::ProtectedNotBinary(levels.len()));
    }
    let first = match &schema.group_one {
        Some(value) if levels.contains(value) => value.clone(),
        Some(value) => return Err(FairError::Schema(format!("group_one value `{value}` not present"))),
        None => levels.iter().next().cloned().ok_or(FairError::EmptyGroup(1))?,
    };
    if levels.len() < 2 {
        return Err(FairError::EmptyGroup(if levels.contains(&first) { 2 } else { 1 }));
    }
    let groups: Vec<Group> =
        rows.iter().map(|row| if row[protected_col] == first { Group::One } else { Group::Two }).collect();

    // Target.
    let mut labels = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let raw = &row[target_col];
        if is_missing(raw) {
            return Err(FairError::InvalidData(format!("missing target at row {}", r + 1)));
        }
        let y = match schema.task {
            Task::Linear => raw.parse::<f64>().map_err(|_| FairError::UnparseableCell {
                column: schema.target.clone(),
                row: r + 1,
                value: raw.clone(),
            })?,
            Task::Logistic => {
                let positive = schema.positive_label.as_deref().unwrap_or_default();
                if same_label(raw, positive) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        labels.push(y);
    }

    // Features.
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut missing_indicators: Vec<(String, Vec<f64>)> = Vec::new();
    for (c, name) in headers.iter().enumerate() {
        if c == target_col || c == protected_col {
            continue;
        }
        let cells: Vec<&str> = rows.iter().map(|row| row[c].as_str()).collect();
        let missing: Vec<bool> = cells.iter().map(|v| is_missing(v)).collect();
        let parsed: Vec<Option<f64>> =
            cells.iter().zip(&missing).map(|(v, &m)| if m { None } else { v.parse::<f64>().ok() }).collect();
        let present = missing.iter().filter(|&&m| !m).count();
        let numeric = parsed.iter().filter(|p| p.is_some()).count();

        if numeric == present {
            let mean = if present > 0 { parsed.iter().flatten().sum::<f64>() / present as f64 } else { 0.0 };
            columns.push((name.clone(), parsed.iter().map(|p| p.unwrap_or(mean)).collect()));
        } else if numeric == 0 {
            let levels: BTreeSet<&str> = cells.iter().zip(&missing).filter(|(_, &m)| !m).map(|(v, _)| *v).collect();
            for level in levels {
                let values = cells.iter().map(|v| if *v == level { 1.0 } else { 0.0 }).collect();
                columns.push((format!("{name}={level}"), values));
            }
        } else {
            let r = parsed.iter().zip(&missing).position(|(p, &m)| !m && p.is_none()).unwrap_or(0);
            return Err(FairError::UnparseableCell { column: name.clone(), row: r + 1, value: cells[r].to_string() });
        }
        if missing.iter().any(|&m| m) {
            missing_indicators
                .push((format!("{name}_missing"), missing.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()));
        }
    }
    columns.extend(missing_indicators);

    let dim = columns.len();
    let mut features = vec![0.0; rows.len() * dim];
    for (j, (_, values)) in columns.iter().enumerate() {
        for (i, v) in values.iter().enumerate() {
            features[i * dim + j] = *v;
        }
    }
    let names = columns.into_iter().map(|(n, _)| n).collect();
    Dataset::from_parts(features, dim, labels, groups, schema.task, names)
}

/// Location/scale of a standardized variable. `std == 0` marks a constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
        let mean = sum / count as f64;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Moments { mean, std: var.sqrt() }
    }

    pub fn standardize(&self, v: f64) -> f64 {
        if self.std > 0.0 {
            (v - self.mean) / self.std
        } else {
            0.0
        }
    }

    pub fn restore(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub features: Vec<Moments>,
    /// Present only for linear tasks.
    pub target: Option<Moments>,
}

impl NormalizationStats {
    /// Maps a standardized feature row back to the original scale. Constant
    /// columns come back as their mean.
    pub fn invert_row(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.features).map(|(&v, m)| m.restore(v)).collect()
    }
}

/// Population mean/std of every feature (and the linear target) over `train_indices`.
pub fn fit_normalization(data: &Dataset, train_indices: &[usize]) -> Result<NormalizationStats> {
    if train_indices.is_empty() {
        return Err(FairError::EmptyIndexSet);
    }
    let features = (0..data.dim()).map(|j| Moments::of(train_indices.iter().map(|&i| data.row(i)[j]))).collect();
    let target = match data.task() {
        Task::Linear => Some(Moments::of(train_indices.iter().map(|&i| data.label(i)))),
        Task::Logistic => None,
    };
    Ok(NormalizationStats { features, target })
}

/// Standardizes every row with `stats`. Linear targets are standardized and
/// then clamped to [-1, 1].
pub fn apply_normalization(data: &Dataset, stats: &NormalizationStats) -> Result<Dataset> {
    if stats.features.len() != data.dim() {
        return Err(FairError::DimensionMismatch { expected: data.dim(), actual: stats.features.len() });
    }
    let dim = data.dim();
    let features =
        data.features.iter().enumerate().map(|(cell, &v)| stats.features[cell % dim].standardize(v)).collect();
    let labels = match (data.task(), &stats.target) {
        (Task::Linear, Some(m)) => data.labels.iter().map(|&y| m.standardize(y).clamp(-1.0, 1.0)).collect(),
        (Task::Linear, None) => {
            return Err(FairError::InvalidData("linear task needs target statistics".into()));
        }
        (Task::Logistic, _) => data.labels.clone(),
    };
    Dataset::from_parts(features, dim, labels, data.groups.clone(), data.task, data.feature_names.clone())
}

/// Assignment of rows to `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

fn check_fold_args(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(FairError::InvalidFolds(format!("need k >= 2, got {k}")));
    }
    if k > n {
        return Err(FairError::InvalidFolds(format!("k = {k} exceeds n = {n}")));
    }
    Ok(())
}

fn deal(order: &[usize], n: usize, k: usize, seed: u64) -> FoldPlan {
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    FoldPlan { k, assignment, seed }
}

/// Random balanced partition of `0..n` into `k` folds.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    check_fold_args(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(deal(&order, n, k, seed))
}

/// Balanced partition stratified by group, and by label for logistic tasks.
///
/// Strata are shuffled independently and dealt round-robin in sequence, so
/// fold sizes still differ by at most one and every stratum with at least
/// `k` members reaches every fold.
pub fn make_stratified_folds(data: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    check_fold_args(data.len(), k)?;
    let mut strata: BTreeMap<(Group, i8), Vec<usize>> = BTreeMap::new();
    for i in 0..data.len() {
        let label_key = match data.task() {
            Task::Logistic => data.label(i) as i8,
            Task::Linear => 0,
        };
        strata.entry((data.group(i), label_key)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(data.len());
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        order.extend_from_slice(members);
    }
    Ok(deal(&order, data.len(), k, seed))
}

/// Sampled cross-group pairs `(i, j)` with `group(i) = 1`, `group(j) = 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossPairSet {
    pub pairs: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl CrossPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.pairs.iter().copied().zip(self.weights.iter().copied())
    }

    /// Recomputes the weights from another dataset's labels, keeping the pairs.
    pub fn reweighted(&self, data: &Dataset, kind: DistanceWeightKind) -> Self {
        let weights = self.pairs.iter().map(|&(i, j)| kind.weight(data.label(i), data.label(j))).collect();
        CrossPairSet { pairs: self.pairs.clone(), weights, seed: self.seed }
    }
}

/// Default pair budget: twice the minority group size.
pub fn default_pair_count(n1: usize, n2: usize) -> usize {
    2 * n1.min(n2)
}

/// Samples `min(count, n1 * n2)` distinct cross pairs uniformly without
/// replacement from the rows in `indices`. `count = None` uses
/// [`default_pair_count`]. Pairs are returned sorted.
pub fn sample_cross_pairs(
    data: &Dataset,
    indices: &[usize],
    count: Option<usize>,
    weight_kind: DistanceWeightKind,
    seed: u64,
) -> Result<CrossPairSet> {
    let (first, second) = data.split_by_group(indices);
    if first.is_empty() {
        return Err(FairError::EmptyGroup(1));
    }
    if second.is_empty() {
        return Err(FairError::EmptyGroup(2));
    }
    let total = first.len() * second.len();
    let wanted = count.unwrap_or_else(|| default_pair_count(first.len(), second.len())).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, total, wanted).into_vec();
    picks.sort_unstable();
    let pairs: Vec<(usize, usize)> =
        picks.into_iter().map(|p| (first[p / second.len()], second[p % second.len()])).collect();
    let weights = pairs.iter().map(|&(i, j)| weight_kind.weight(data.label(i), data.label(j))).collect();
    Ok(CrossPairSet { pairs, weights, seed })
}

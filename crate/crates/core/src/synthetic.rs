//! Seeded two-group datasets for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, Group, Task};
use crate::model::sigmoid;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub task: Task,
    pub n: usize,
    pub dim: usize,
    /// Standard deviation of additive label noise (linear task) or scale of
    /// the latent score noise (logistic task).
    pub noise: f64,
    /// Mean shift added to group-2 features.
    pub feature_shift: f64,
    /// Offset added to the group-2 latent target.
    pub label_shift: f64,
    /// Probability that a row belongs to group 1.
    pub group_one_fraction: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn linear() -> Self {
        Self {
            task: Task::Linear,
            n: 200,
            dim: 5,
            noise: 0.5,
            feature_shift: 0.5,
            label_shift: 0.5,
            group_one_fraction: 0.6,
            seed: 0,
        }
    }

    pub fn logistic() -> Self {
        Self { task: Task::Logistic, noise: 1.0, ..Self::linear() }
    }
}

/// Draws a dataset from a random linear model. The first row of each group
/// is forced so both groups are always present.
pub fn generate(spec: &SyntheticSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let beta: Vec<f64> =
        (0..spec.dim).map(|_| rng.sample::<f64, _>(StandardNormal) / (spec.dim.max(1) as f64).sqrt()).collect();
    let mut rows = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    let mut groups = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let group = match i {
            0 => Group::One,
            1 => Group::Two,
            _ if rng.random_bool(spec.group_one_fraction) => Group::One,
            _ => Group::Two,
        };
        let shift = if group == Group::Two { spec.feature_shift } else { 0.0 };
        let x: Vec<f64> = (0..spec.dim).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect();
        let mut score: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
        if group == Group::Two {
            score += spec.label_shift;
        }
        let eps: f64 = StandardNormal.sample(&mut rng);
        let y = match spec.task {
            Task::Linear => score + spec.noise * eps,
            Task::Logistic => {
                let p = sigmoid(2.0 * score / spec.noise.max(1e-12));
                if rng.random_bool(p.clamp(0.0, 1.0)) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        rows.push(x);
        labels.push(y);
        groups.push(group);
    }
    Dataset::new(rows, labels, groups, spec.task).expect("synthetic data satisfies dataset invariants")
}

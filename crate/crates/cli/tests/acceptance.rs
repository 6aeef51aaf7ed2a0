//! Acceptance criteria, one line per criterion. Exits nonzero when any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fairreg::experiment::{default_lambda_grid, ConstraintConfig};
use fairreg::fairness::{build_penalty_form_with, eval_penalty_bruteforce_with};
use fairreg::synthetic::{generate, SyntheticSpec};
use fairreg::*;
use fairreg_cli::{cmd_frontier, RunConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within(limit: Duration, start: Instant) -> std::result::Result<Duration, String> {
    let t = start.elapsed();
    if t > limit {
        Err(format!("took {t:.2?}, limit {limit:?}"))
    } else {
        Ok(t)
    }
}

fn random_dataset(rng: &mut ChaCha8Rng, task: Task, max_n: usize, max_d: usize) -> Dataset {
    let n = rng.random_range(4..=max_n);
    let d = rng.random_range(1..=max_d);
    let rows = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let groups = (0..n)
        .map(|i| match i {
            0 => Group::One,
            1 => Group::Two,
            _ if rng.random_bool(0.5) => Group::One,
            _ => Group::Two,
        })
        .collect();
    let labels = (0..n)
        .map(|_| match task {
            Task::Linear => rng.random_range(-1.0..1.0),
            Task::Logistic => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect();
    Dataset::new(rows, labels, groups, task).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, mode: ModelMode, dim: usize, scale: f64) -> ModelParams {
    let layout = ParamLayout::new(mode, dim);
    let theta: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-scale..scale)).collect();
    ModelParams::from_unified(layout, &theta).unwrap()
}

fn random_pairs(rng: &mut ChaCha8Rng, data: &Dataset, weight: DistanceWeightKind) -> CrossPairSet {
    let (a, b) = data.split_by_group(&data.all_indices());
    let count = rng.random_range(1..=a.len() * b.len());
    sample_cross_pairs(data, &data.all_indices(), Some(count), weight, rng.random()).unwrap()
}

/// Hybrid weights that switch off buckets without pairs.
fn live_buckets(pairs: &CrossPairSet, data: &Dataset) -> HybridWeights {
    let has = |t: f64| pairs.pairs.iter().any(|&(i, j)| data.label(i) == t && data.label(j) == t);
    HybridWeights { positive: if has(1.0) { 1.0 } else { 0.0 }, negative: if has(-1.0) { 1.0 } else { 0.0 } }
}

fn task_of(i: usize) -> Task {
    if i.is_multiple_of(2) {
        Task::Linear
    } else {
        Task::Logistic
    }
}

fn normalized(data: &Dataset) -> Dataset {
    let all = data.all_indices();
    apply_normalization(data, &fit_normalization(data, &all).unwrap()).unwrap()
}

fn c1_penalty_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut checks = 0;
    for i in 0..200 {
        let task = task_of(i);
        let data = random_dataset(&mut rng, task, 40, 6);
        let pairs = random_pairs(&mut rng, &data, DistanceWeightKind::for_task(task));
        let hybrid = live_buckets(&pairs, &data);
        for mode in ModelMode::ALL {
            let params = random_params(&mut rng, mode, data.dim(), 2.0);
            for kind in PenaltyKind::ALL.into_iter().filter(|k| k.applies_to(task)) {
                let form = ok(build_penalty_form_with(&pairs, &data, kind, mode, hybrid))?;
                let fast = ok(eval_penalty(&form, &params))?;
                let slow = ok(eval_penalty_bruteforce_with(&pairs, &data, kind, &params, hybrid))?;
                let rel = (fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE);
                if slow != 0.0 || fast != 0.0 {
                    worst = worst.max(rel);
                }
                ensure!(
                    rel <= 1e-10 || (fast == 0.0 && slow == 0.0),
                    "instance {i} {kind:?} {mode:?}: {fast} vs {slow}"
                );
                checks += 1;
            }
        }
    }
    let t = within(Duration::from_secs(5), start)?;
    Ok(format!("{checks} evaluations on 200 instances, max rel err {worst:.1e}, {t:.2?}"))
}

fn c2_jensen() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..500 {
        let task = task_of(i);
        let weight = if i % 4 < 2 { DistanceWeightKind::Gaussian } else { DistanceWeightKind::Indicator };
        let data = random_dataset(&mut rng, task, 40, 6);
        let pairs = random_pairs(&mut rng, &data, weight);
        let mode = ModelMode::ALL[rng.random_range(0..2)];
        let params = random_params(&mut rng, mode, data.dim(), 2.0);
        let f1 = ok(eval_penalty(&ok(build_penalty_form(&pairs, &data, PenaltyKind::Individual, mode))?, &params))?;
        let f2 = ok(eval_penalty(&ok(build_penalty_form(&pairs, &data, PenaltyKind::Group, mode))?, &params))?;
        let excess = (f2 - f1) / f1.max(1.0);
        worst = worst.max(excess);
        ensure!(excess <= 1e-12, "draw {i}: f2 {f2} > f1 {f1}");
    }
    Ok(format!("500 draws, max (f2 - f1)/max(f1, 1) = {worst:.1e}"))
}

fn c3_constant_minimizer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let task = task_of(i);
        let data = random_dataset(&mut rng, task, 40, 6);
        let pairs = random_pairs(&mut rng, &data, DistanceWeightKind::for_task(task));
        let hybrid = live_buckets(&pairs, &data);
        let c = rng.random_range(-5.0..5.0);
        for mode in ModelMode::ALL {
            let params = ModelParams::constant(mode, data.dim(), c);
            for kind in PenaltyKind::ALL.into_iter().filter(|k| k.applies_to(task)) {
                let form = ok(build_penalty_form_with(&pairs, &data, kind, mode, hybrid))?;
                let fast = ok(eval_penalty(&form, &params))?;
                let slow = ok(eval_penalty_bruteforce_with(&pairs, &data, kind, &params, hybrid))?;
                worst = worst.max(fast.abs()).max(slow.abs());
                ensure!(
                    fast.abs() <= 1e-12 && slow.abs() <= 1e-12,
                    "dataset {i} {kind:?} {mode:?} c={c}: {fast}, {slow}"
                );
            }
        }
    }
    Ok(format!("100 datasets, max penalty {worst:.1e}"))
}

fn c4_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    let mut combos = Vec::new();
    for task in [Task::Linear, Task::Logistic] {
        for kind in PenaltyKind::ALL.into_iter().filter(|k| k.applies_to(task)) {
            for mode in ModelMode::ALL {
                for lambda in [0.0, 1.0, 100.0] {
                    for gamma in [0.0, 0.1] {
                        combos.push((task, kind, mode, lambda, gamma));
                    }
                }
            }
        }
    }
    for i in 0..100 {
        let (task, kind, mode, lambda, gamma) = combos[i % combos.len()];
        let data = random_dataset(&mut rng, task, 40, 6);
        let pairs = random_pairs(&mut rng, &data, DistanceWeightKind::for_task(task));
        let form = ok(build_penalty_form_with(&pairs, &data, kind, mode, live_buckets(&pairs, &data)))?;
        let idx = data.all_indices();
        let obj = ok(Objective::new(&data, &idx, LossKind::for_task(task), &form, lambda, gamma))?;
        let params = random_params(&mut rng, mode, data.dim(), 1.0);
        let err = ok(finite_difference_check(&obj, &params, 1e-5))?;
        worst = worst.max(err);
        ensure!(err <= 1e-5, "objective {i} ({task:?} {kind:?} {mode:?} lambda {lambda} gamma {gamma}): {err:e}");
    }
    Ok(format!("100 objectives over {} configurations, max rel err {worst:.1e}", combos.len()))
}

fn c5_solver_agreement() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let data =
            generate(&SyntheticSpec { n: 120, dim: 1 + (i as usize % 6), seed: 5000 + i, ..SyntheticSpec::linear() });
        let data = normalized(&data);
        let pairs = ok(sample_cross_pairs(&data, &data.all_indices(), None, DistanceWeightKind::Gaussian, i))?;
        let mode = ModelMode::ALL[(i % 2) as usize];
        let kind = if i % 4 < 2 { PenaltyKind::Individual } else { PenaltyKind::Group };
        let lambda = [0.0, 0.5, 10.0][(i % 3) as usize];
        let gamma = 10f64.powf(rng.random_range(-3.0..0.0));
        let form = ok(build_penalty_form(&pairs, &data, kind, mode))?;
        let idx = data.all_indices();
        let obj = ok(Objective::new(&data, &idx, LossKind::MeanSquaredError, &form, lambda, gamma))?;
        let exact = ok(solve_linear_closed_form(&obj))?;
        let smooth = ok(solve_smooth(&obj, &ModelParams::zeros(mode, data.dim()), &SolverConfig::default()))?;
        let gap = (exact.params.to_unified() - smooth.params.to_unified()).norm();
        worst = worst.max(gap);
        ensure!(smooth.converged && gap <= 1e-6, "objective {i}: |dtheta| = {gap:e}");
    }
    let t = within(Duration::from_secs(10), start)?;
    Ok(format!("20 objectives, max |dtheta| {worst:.1e}, {t:.2?}"))
}

fn c6_limit() -> Outcome {
    let mut notes = Vec::new();
    for (task, seed) in [(Task::Linear, 61), (Task::Logistic, 62)] {
        let base = if task == Task::Linear { SyntheticSpec::linear() } else { SyntheticSpec::logistic() };
        let data = normalized(&generate(&SyntheticSpec { n: 200, dim: 5, seed, ..base }));
        let idx = data.all_indices();
        let pairs = ok(sample_cross_pairs(&data, &idx, None, DistanceWeightKind::for_task(task), seed))?;
        let loss = LossKind::for_task(task);
        let constant = ok(accuracy_loss(&ok(best_constant_predictor(&data, &idx, loss))?, &data, &idx, loss))?;
        for mode in ModelMode::ALL {
            let form = ok(build_penalty_form(&pairs, &data, PenaltyKind::Individual, mode))?;
            let fit = |lambda| {
                let obj = Objective::new(&data, &idx, loss, &form, lambda, 0.0)?;
                solve(&obj, &ModelParams::zeros(mode, data.dim()), &SolverConfig::default())
            };
            let free = ok(fit(0.0))?;
            let tight = ok(fit(1e6))?;
            let f0 = ok(eval_penalty(&form, &free.params))?;
            let f = ok(eval_penalty(&form, &tight.params))?;
            let acc = ok(accuracy_loss(&tight.params, &data, &idx, loss))?;
            ensure!(f <= 1e-6 * f0, "{task:?} {mode:?}: penalty {f:e} vs lambda-0 penalty {f0:e}");
            let rel = (acc - constant).abs() / constant;
            ensure!(rel <= 0.01, "{task:?} {mode:?}: loss {acc} vs best constant {constant}");
            notes.push(format!("{}/{} f ratio {:.1e} loss gap {:.1e}", task.name(), mode.name(), f / f0, rel));
        }
    }
    Ok(notes.join("; "))
}

fn c7_monotone_path() -> Outcome {
    let lambdas = default_lambda_grid();
    let mut worst = 0.0f64;
    let mut paths = 0;
    for (task, seed) in [(Task::Linear, 71), (Task::Logistic, 72)] {
        let base = if task == Task::Linear { SyntheticSpec::linear() } else { SyntheticSpec::logistic() };
        let data = normalized(&generate(&SyntheticSpec { seed, ..base }));
        let idx = data.all_indices();
        let pairs = ok(sample_cross_pairs(&data, &idx, None, DistanceWeightKind::for_task(task), seed))?;
        for kind in PenaltyKind::ALL.into_iter().filter(|k| k.applies_to(task)) {
            for mode in ModelMode::ALL {
                let path = ok(experiment::regularization_path(
                    &data,
                    &idx,
                    &pairs,
                    &lambdas,
                    kind,
                    mode,
                    0.0,
                    HybridWeights::default(),
                    &SolverConfig::default(),
                ))?;
                for w in path.windows(2) {
                    let (a, b) = (&w[0], &w[1]);
                    worst = worst.max(b.penalty - a.penalty).max(a.loss - b.loss);
                    ensure!(
                        b.penalty <= a.penalty + 1e-9,
                        "{task:?} {kind:?} {mode:?}: penalty rises at lambda {}",
                        b.lambda
                    );
                    ensure!(b.loss >= a.loss - 1e-9, "{task:?} {kind:?} {mode:?}: loss falls at lambda {}", b.lambda);
                }
                paths += 1;
            }
        }
    }
    Ok(format!("{paths} paths of {} points, worst violation {worst:.1e}", lambdas.len()))
}

/// PoF of a one-feature single model under a penalty `k w^2`: with
/// `L(w) = var(y) - 2 w cov + w^2 (var(x) + gamma)` the constrained optimum
/// is `sqrt(alpha) w*`.
fn analytic_pof(x: &[f64], y: &[f64], gamma: f64, alpha: f64) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let vx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let curv = vx + gamma;
    let w = cov / curv;
    let s = alpha.sqrt();
    (vy - (2.0 * s - alpha) * w * w * curv) / (vy - w * w * curv)
}

fn c8_pof() -> Outcome {
    let alphas = [1.0, 0.8, 0.6, 0.4, 0.25, 0.1, 0.05];
    let mut curves = 0;
    for (task, seed) in [(Task::Linear, 81), (Task::Logistic, 82)] {
        let base = if task == Task::Linear { SyntheticSpec::linear() } else { SyntheticSpec::logistic() };
        let data = normalized(&generate(&SyntheticSpec { seed, ..base }));
        let idx = data.all_indices();
        let pairs = ok(sample_cross_pairs(&data, &idx, None, DistanceWeightKind::for_task(task), seed))?;
        for kind in PenaltyKind::ALL.into_iter().filter(|k| k.applies_to(task)) {
            for mode in ModelMode::ALL {
                let curve = ok(compute_pof(
                    &data,
                    &idx,
                    &pairs,
                    &alphas,
                    kind,
                    mode,
                    0.01,
                    HybridWeights::default(),
                    &SolverConfig::default(),
                    &ConstraintConfig::default(),
                ))?;
                ensure!(curve[0].pof == 1.0, "{task:?} {kind:?} {mode:?}: PoF(1) = {}", curve[0].pof);
                ensure!(curve.iter().all(|p| p.pof >= 1.0 - 1e-9), "{task:?} {kind:?} {mode:?}: PoF below 1");
                ensure!(curve.windows(2).all(|w| w[1].pof >= w[0].pof), "{task:?} {kind:?} {mode:?}: PoF not monotone");
                curves += 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let n = 60;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let groups: Vec<Group> = (0..n).map(|i| if i % 3 == 0 { Group::One } else { Group::Two }).collect();
    let y: Vec<f64> = x
        .iter()
        .zip(&groups)
        .map(|(v, g)| {
            (0.5 * v + if *g == Group::Two { 0.3 } else { -0.2 } + rng.random_range(-0.2..0.2)).clamp(-1.0, 1.0)
        })
        .collect();
    let data = ok(Dataset::new(x.iter().map(|v| vec![*v]).collect(), y.clone(), groups, Task::Linear))?;
    let idx = data.all_indices();
    let pairs = ok(sample_cross_pairs(&data, &idx, Some(usize::MAX), DistanceWeightKind::Gaussian, 0))?;
    let mut gaps = Vec::new();
    for gamma in [0.0, 0.1] {
        let oracle = analytic_pof(&x, &y, gamma, 0.25);
        for kind in [PenaltyKind::Individual, PenaltyKind::Group] {
            let curve = ok(compute_pof(
                &data,
                &idx,
                &pairs,
                &[1.0, 0.25],
                kind,
                ModelMode::SingleModel,
                gamma,
                HybridWeights::default(),
                &SolverConfig::default(),
                &ConstraintConfig::default(),
            ))?;
            let gap = (curve[1].pof - oracle).abs();
            ensure!(gap <= 1e-3, "analytic {kind:?} gamma {gamma}: PoF(0.25) {} vs oracle {oracle}", curve[1].pof);
            gaps.push(gap);
        }
    }
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    Ok(format!("{curves} curves satisfy the contract; analytic PoF(0.25) max gap {worst:.1e}"))
}

/// Feature map of a row in the unified parameter space.
fn features(row: &[f64], group: Group, mode: ModelMode) -> DVector<f64> {
    let d = row.len();
    match mode {
        ModelMode::SingleModel => DVector::from_iterator(d + 1, row.iter().copied().chain([1.0])),
        ModelMode::SeparateModels => {
            let mut z = DVector::zeros(2 * (d + 1));
            let off = if group == Group::One { 0 } else { d + 1 };
            for (k, v) in row.iter().chain([&1.0]).enumerate() {
                z[off + k] = *v;
            }
            z
        }
    }
}

fn c9_cv_fidelity() -> Outcome {
    let data = generate(&SyntheticSpec { n: 60, dim: 50, noise: 0.5, seed: 909, ..SyntheticSpec::linear() });
    let cfg = ExperimentConfig { seed: 99, ..ExperimentConfig::for_task(Task::Linear) };
    let plan = ok(CvPlan::build(&data, &cfg))?;
    let grid = GammaGrid::default();
    let mut notes = Vec::new();
    for mode in ModelMode::ALL {
        for lambda in [0.0, 0.5] {
            let report = ok(select_gamma_cv(&plan, lambda, PenaltyKind::Individual, mode, &grid))?;
            let mut table = vec![0.0; grid.values().len()];
            for ctx in &plan.contexts {
                let z = |i: usize| features(ctx.data.row(i), ctx.data.group(i), mode);
                let p = z(0).len();
                let mut gram = DMatrix::zeros(p, p);
                let mut rhs = DVector::zeros(p);
                for &i in &ctx.train {
                    let zi = z(i);
                    gram += &zi * zi.transpose();
                    rhs += &zi * ctx.data.label(i);
                }
                gram /= ctx.train.len() as f64;
                rhs /= ctx.train.len() as f64;
                let mut a = DMatrix::zeros(p, p);
                for ((i, j), w) in ctx.train_pairs.iter() {
                    let u = features(ctx.data.row(i), Group::One, mode) - features(ctx.data.row(j), Group::Two, mode);
                    a += &u * u.transpose() * w;
                }
                a /= ctx.train_pairs.len() as f64;
                for (jg, &gamma) in grid.values().iter().enumerate() {
                    let mut m = &gram + &a * lambda;
                    for k in 0..p {
                        if (k + 1) % (data.dim() + 1) != 0 {
                            m[(k, k)] += gamma;
                        }
                    }
                    let theta = m.lu().solve(&rhs).ok_or("oracle system singular")?;
                    let pred = |i: usize| z(i).dot(&theta);
                    let mse = ctx.test.iter().map(|&i| (pred(i) - ctx.data.label(i)).powi(2)).sum::<f64>()
                        / ctx.test.len() as f64;
                    let fair = ctx.test_pairs.iter().map(|((i, j), w)| w * (pred(i) - pred(j)).powi(2)).sum::<f64>()
                        / ctx.test_pairs.len() as f64;
                    table[jg] += mse + lambda * fair;
                }
            }
            let mut best = 0;
            for (j, v) in table.iter().enumerate() {
                if *v < table[best] {
                    best = j;
                }
            }
            let drift = table.iter().zip(&report.totals).map(|(a, b)| (a - b).abs() / a).fold(0.0, f64::max);
            ensure!(
                report.selected == best,
                "{mode:?} lambda {lambda}: library picked index {} ({:e}), oracle {best} ({:e})",
                report.selected,
                report.selected_gamma(),
                grid.values()[best]
            );
            notes.push(format!("{}/lambda {lambda}: index {best} (table drift {drift:.0e})", mode.name()));
        }
    }
    Ok(notes.join("; "))
}

fn c10_separate_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..50u64 {
        let dim = rng.random_range(1..=5);
        let data = normalized(&generate(&SyntheticSpec {
            n: rng.random_range(40..=100),
            dim,
            group_one_fraction: 0.5,
            seed: 10_000 + i,
            ..SyntheticSpec::linear()
        }));
        let idx = data.all_indices();
        let pairs = ok(sample_cross_pairs(&data, &idx, None, DistanceWeightKind::Gaussian, i))?;
        let kind = if i % 2 == 0 { PenaltyKind::Individual } else { PenaltyKind::Group };
        for lambda in [0.1, 10.0] {
            let mut best = [0.0; 2];
            for (slot, mode) in ModelMode::ALL.into_iter().enumerate() {
                let form = ok(build_penalty_form(&pairs, &data, kind, mode))?;
                let obj = ok(Objective::new(&data, &idx, LossKind::MeanSquaredError, &form, lambda, 0.0))?;
                best[slot] = ok(solve_linear_closed_form(&obj))?.objective;
            }
            worst = worst.max(best[1] - best[0]);
            ensure!(
                best[1] <= best[0] + 1e-8,
                "instance {i} lambda {lambda}: separate {} > single {}",
                best[1],
                best[0]
            );
        }
    }
    Ok(format!("50 instances x 2 lambdas, max (separate - single) {worst:.1e}"))
}

fn c11_determinism() -> Outcome {
    let dir = ok(tempfile::TempDir::new())?;
    let mut cfg =
        ok(RunConfig::from_toml_str("seed = 7\nfolds = 5\n[synthetic]\ntask = \"logistic\"\nn = 150\ndim = 4\n"))?;
    let mut outputs = Vec::new();
    for (run, threads) in [(0, 1), (1, 4)] {
        cfg.out = dir.path().join(format!("run{run}"));
        let pool = ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build())?;
        let files = pool.install(|| cmd_frontier(&cfg)).map_err(|e| e.to_string())?;
        let mut csvs: Vec<_> = files.into_iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).collect();
        csvs.sort();
        outputs
            .push(csvs.iter().map(|p| (p.file_name().unwrap().to_owned(), fs::read(p).unwrap())).collect::<Vec<_>>());
    }
    ensure!(outputs[0].len() == 6, "expected 6 CSV files, got {}", outputs[0].len());
    ensure!(outputs[0] == outputs[1], "CSV bytes differ between runs");
    let bytes: usize = outputs[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!("6 CSV files ({bytes} bytes) identical across two runs with 1 and 4 workers"))
}

fn c12_individual_above_group() -> Outcome {
    let start = Instant::now();
    let raw = generate(&SyntheticSpec { n: 300, dim: 5, label_shift: 1.0, seed: 1212, ..SyntheticSpec::linear() });
    let data = normalized(&raw);
    let idx = data.all_indices();
    let pairs = ok(sample_cross_pairs(&data, &idx, None, DistanceWeightKind::Gaussian, 12))?;
    let lambdas = default_lambda_grid();
    let solver = SolverConfig::default();
    let tight = ConstraintConfig { rel_tol: 1e-10, max_iterations: 400, lambda_max: 1e8 };
    let mut compared = 0;
    let mut margin = f64::INFINITY;
    for mode in ModelMode::ALL {
        let ind = ok(experiment::regularization_path(
            &data,
            &idx,
            &pairs,
            &lambdas,
            PenaltyKind::Individual,
            mode,
            0.0,
            HybridWeights::default(),
            &solver,
        ))?;
        let grp0 = ok(experiment::regularization_path(
            &data,
            &idx,
            &pairs,
            &[0.0],
            PenaltyKind::Group,
            mode,
            0.0,
            HybridWeights::default(),
            &solver,
        ))?;
        let (f2_star, l_star) = (grp0[0].penalty, grp0[0].regularized_loss);
        // group optimum at fairness level f1 for every individual point
        let mut alphas: Vec<f64> = Vec::new();
        for p in &ind {
            let a = p.penalty / f2_star;
            if a < 1.0 && alphas.last().is_none_or(|&last| a < last) {
                alphas.push(a);
            }
        }
        let mut with_one = vec![1.0];
        with_one.extend(&alphas);
        let curve = ok(compute_pof(
            &data,
            &idx,
            &pairs,
            &with_one,
            PenaltyKind::Group,
            mode,
            0.0,
            HybridWeights::default(),
            &solver,
            &tight,
        ))?;
        for p in &ind {
            let a = p.penalty / f2_star;
            let g = if a >= 1.0 {
                l_star
            } else {
                // alphas only shrink along the path, so the first level at or below `a` is this one
                let q = curve.iter().find(|q| q.alpha <= a).ok_or("missing PoF level")?;
                q.pof * l_star
            };
            ensure!(
                g <= p.regularized_loss + 1e-9,
                "{mode:?} lambda {}: group {g} > individual {}",
                p.lambda,
                p.regularized_loss
            );
            margin = margin.min(p.regularized_loss - g);
            compared += 1;
        }
    }

    // cross-validated sweep on the same data for the runtime budget
    let plan = ok(CvPlan::build(&raw, &ExperimentConfig::for_task(Task::Linear)))?;
    let grid = GammaGrid::default();
    for kind in [PenaltyKind::Individual, PenaltyKind::Group] {
        for mode in ModelMode::ALL {
            ok(sweep_lambda_frontier(&plan, &lambdas, kind, mode, &grid))?;
        }
    }
    let t = within(Duration::from_secs(120), start)?;
    Ok(format!("{compared} fairness levels, min slack {margin:.1e}; with 4 CV sweeps {t:.2?}"))
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--list`; nothing to list here
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [Criterion; 12] = [
        ("penalty oracle equivalence", c1_penalty_oracle),
        ("group penalty never exceeds individual", c2_jensen),
        ("constant predictor has zero penalty", c3_constant_minimizer),
        ("gradient matches finite differences", c4_gradients),
        ("iterative and closed-form solvers agree", c5_solver_agreement),
        ("large lambda approaches best constant", c6_limit),
        ("in-sample path is monotone", c7_monotone_path),
        ("price of fairness contract", c8_pof),
        ("cross-validated gamma matches oracle table", c9_cv_fidelity),
        ("separate models dominate single model", c10_separate_dominance),
        ("frontier output is deterministic", c11_determinism),
        ("individual frontier lies above group frontier", c12_individual_above_group),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("[PASS] {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {:>2}. {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

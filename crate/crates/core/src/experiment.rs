//! Seeded experiments: train on (optionally transformed) synthetic data,
//! score on a shared held-out test set, and tabulate per-seed and aggregate
//! rows.
//!
//! Seed derivation for replicate `s` with data seed `d`:
//! - test set: generated once from the untransformed spec with seed `d + 1`
//!   and `round(0.2 * n_positive)` positives (same ratio);
//! - training data: seed `mix64(mix64(d) ^ s)`;
//! - transform: seed `mix64(training data seed)`;
//! - trainer (init and shuffling): seed `s`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate, transform, DataSpec, LabeledBatch, TransformKind, TransformSpec};
use crate::error::{Error, Result};
use crate::loss::{LossKind, LossSpec};
use crate::metrics::{ClassifierMetrics, DEFAULT_THRESHOLD};
use crate::rng::mix64;
use crate::trainer::{evaluate, train, ModelSpec, TrainSpec};

pub const DEFAULT_REPLICATE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const TEST_FRACTION: f64 = 0.2;

pub const CSV_HEADER: &str = "loss,ratio,transform,alpha,beta,gamma,seed,precision,recall,f1,accuracy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub transform: TransformSpec,
    pub loss: LossSpec,
    pub model: ModelSpec,
    pub train: TrainSpec,
    pub eval_threshold: f64,
    pub replicate_seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSpec::default(),
            transform: TransformSpec::default(),
            loss: LossSpec::default(),
            model: ModelSpec::default(),
            train: TrainSpec::default(),
            eval_threshold: DEFAULT_THRESHOLD,
            replicate_seeds: DEFAULT_REPLICATE_SEEDS.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicate_seeds.is_empty() {
            return Err(Error::Config("replicate_seeds must not be empty".into()));
        }
        if !(self.eval_threshold > 0.0 && self.eval_threshold < 1.0) {
            return Err(Error::InvalidParameter {
                name: "eval_threshold",
                value: self.eval_threshold,
                reason: "must lie strictly between 0 and 1",
            });
        }
        self.data.validate()?;
        self.loss.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn test_spec(&self) -> DataSpec {
        DataSpec {
            n_positive: ((self.data.n_positive as f64 * TEST_FRACTION).round() as usize).max(1),
            seed: self.data.seed.wrapping_add(1),
            ..self.data.clone()
        }
    }

    pub fn train_data_seed(&self, replicate: u64) -> u64 {
        mix64(mix64(self.data.seed) ^ replicate)
    }

    /// Training set for one replicate, transformed per the config.
    pub fn training_data(&self, replicate: u64) -> Result<LabeledBatch> {
        let seed = self.train_data_seed(replicate);
        let base = generate(&DataSpec {
            seed,
            ..self.data.clone()
        })?;
        transform(&base, &self.transform, mix64(seed), self.data.jitter_sigma)
    }
}

/// Seed column of a result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedTag {
    Seed(u64),
    Mean,
    Std,
}

impl std::fmt::Display for SeedTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeedTag::Seed(s) => write!(f, "{s}"),
            SeedTag::Mean => f.write_str("mean"),
            SeedTag::Std => f.write_str("std"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub loss: LossKind,
    pub ratio: f64,
    pub transform: TransformKind,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub seed: SeedTag,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl ResultRow {
    fn new(config: &ExperimentConfig, seed: SeedTag, m: ClassifierMetrics) -> Self {
        Self {
            loss: config.loss.kind,
            ratio: config.data.ratio,
            transform: config.transform.kind,
            alpha: config.loss.alpha,
            beta: config.loss.beta,
            gamma: config.loss.gamma,
            seed,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            accuracy: m.accuracy,
        }
    }

    pub fn metrics(&self) -> ClassifierMetrics {
        ClassifierMetrics {
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
            accuracy: self.accuracy,
        }
    }

    pub fn is_aggregate(&self) -> bool {
        !matches!(self.seed, SeedTag::Seed(_))
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.6},{},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6},{:.6}",
            self.loss,
            self.ratio,
            self.transform,
            self.alpha,
            self.beta,
            self.gamma,
            self.seed,
            self.precision,
            self.recall,
            self.f1,
            self.accuracy
        )
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(config: &ExperimentConfig, per_seed: &[ClassifierMetrics]) -> [ResultRow; 2] {
    let col = |f: fn(&ClassifierMetrics) -> f64| -> (f64, f64) {
        mean_std(&per_seed.iter().map(f).collect::<Vec<_>>())
    };
    let (p, r, f1, acc) = (
        col(|m| m.precision),
        col(|m| m.recall),
        col(|m| m.f1),
        col(|m| m.accuracy),
    );
    [
        ResultRow::new(
            config,
            SeedTag::Mean,
            ClassifierMetrics {
                precision: p.0,
                recall: r.0,
                f1: f1.0,
                accuracy: acc.0,
            },
        ),
        ResultRow::new(
            config,
            SeedTag::Std,
            ClassifierMetrics {
                precision: p.1,
                recall: r.1,
                f1: f1.1,
                accuracy: acc.1,
            },
        ),
    ]
}

/// Test-set metrics for one replicate seed.
pub fn run_replicate(config: &ExperimentConfig, test: &LabeledBatch, seed: u64) -> Result<ClassifierMetrics> {
    let inner = || -> Result<ClassifierMetrics> {
        let data = config.training_data(seed)?;
        let train_spec = TrainSpec {
            seed,
            ..config.train
        };
        let model = train(&data, &config.loss, &config.model, &train_spec)?;
        evaluate(&model, test, config.eval_threshold)
    };
    inner().map_err(|e| Error::AtSeed {
        seed,
        source: Box::new(e),
    })
}

/// Per-seed rows followed by `mean` and `std` rows.
pub fn run(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let test = generate(&config.test_spec())?;
    let per_seed = config
        .replicate_seeds
        .par_iter()
        .map(|&s| run_replicate(config, &test, s))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ResultRow> = config
        .replicate_seeds
        .iter()
        .zip(&per_seed)
        .map(|(&s, m)| ResultRow::new(config, SeedTag::Seed(s), *m))
        .collect();
    rows.extend(aggregate(config, &per_seed));
    sort_rows(&mut rows);
    Ok(rows)
}

/// Loss spec used when a sweep switches `config` to `kind`: the configured
/// hyperparameters when the kind matches, per-kind defaults otherwise.
pub fn loss_for_kind(config: &ExperimentConfig, kind: LossKind) -> LossSpec {
    if config.loss.kind == kind {
        config.loss
    } else {
        LossSpec {
            k: config.loss.k,
            log_base: config.loss.log_base,
            ..LossSpec::new(kind)
        }
    }
}

/// Every combination of loss kind and neg:pos ratio.
pub fn sweep(config: &ExperimentConfig, losses: &[LossKind], ratios: &[f64]) -> Result<Vec<ResultRow>> {
    if losses.is_empty() || ratios.is_empty() {
        return Err(Error::Config("sweep needs at least one loss and one ratio".into()));
    }
    let points: Vec<ExperimentConfig> = losses
        .iter()
        .flat_map(|&kind| {
            ratios.iter().map(move |&ratio| ExperimentConfig {
                loss: loss_for_kind(config, kind),
                data: DataSpec {
                    ratio,
                    ..config.data.clone()
                },
                ..config.clone()
            })
        })
        .collect();
    run_points(&points)
}

/// Tversky loss at each `alpha` with `beta = 1 - alpha`; rows ordered by alpha.
pub fn sweep_tversky(config: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<ResultRow>> {
    if config.loss.kind != LossKind::Tversky {
        return Err(Error::Config("sweep-tversky requires loss kind TL".into()));
    }
    if alphas.is_empty() {
        return Err(Error::Config("sweep-tversky needs at least one alpha".into()));
    }
    if let Some(&a) = alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: a,
            reason: "must lie strictly between 0 and 1",
        });
    }
    let points: Vec<ExperimentConfig> = alphas
        .iter()
        .map(|&alpha| ExperimentConfig {
            loss: LossSpec {
                alpha,
                beta: 1.0 - alpha,
                ..config.loss
            },
            ..config.clone()
        })
        .collect();
    run_points(&points)
}

fn run_points(points: &[ExperimentConfig]) -> Result<Vec<ResultRow>> {
    let per_point = points.par_iter().map(run).collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ResultRow> = per_point.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

/// Orders rows by (loss, ratio, alpha, seed), with `mean` and `std` after
/// the per-seed rows of their group.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.loss
            .cmp(&b.loss)
            .then(a.ratio.total_cmp(&b.ratio))
            .then(a.transform.name().cmp(b.transform.name()))
            .then(a.alpha.total_cmp(&b.alpha))
            .then(a.beta.total_cmp(&b.beta))
            .then(a.gamma.total_cmp(&b.gamma))
            .then(a.seed.cmp(&b.seed))
    });
}

pub fn write_csv<W: Write>(rows: &[ResultRow], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

pub fn to_csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}

/// Aggregate `mean` row of the given loss/ratio/alpha group.
pub fn mean_row(rows: &[ResultRow], loss: LossKind, ratio: f64) -> Option<&ResultRow> {
    rows.iter()
        .find(|r| r.loss == loss && r.ratio == ratio && r.seed == SeedTag::Mean)
}

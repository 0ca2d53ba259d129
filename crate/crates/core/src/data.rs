//! Seeded synthetic imbalanced datasets and class-distribution transforms.
//!
//! Three isotropic Gaussian clusters (sigma 0.5) generate the data:
//! positives around `(+1, ..., +1)`, easy negatives far away around
//! `(-2, ..., -2)`, and hard negatives near the positives around
//! `(+0.5, ..., +0.5)`. Examples are emitted in that order and every feature
//! draw comes from one [`Rng`] stream, so a spec fully determines the batch.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::OneHotLabel;
use crate::rng::Rng;

pub const CLUSTER_SIGMA: f64 = 0.5;
pub const POSITIVE_CENTER: f64 = 1.0;
pub const EASY_NEGATIVE_CENTER: f64 = -2.0;
pub const HARD_NEGATIVE_CENTER: f64 = 0.5;

/// Neg:pos ratio presets (CoNLL03, OntoNotes5.0, SQuAD 1.1, SQuAD 2.0, QUOREF).
pub const RATIO_PRESETS: [(&str, f64); 5] = [
    ("conll03", 4.98),
    ("ontonotes5", 8.18),
    ("squad1.1", 55.9),
    ("squad2.0", 82.0),
    ("quoref", 169.0),
];

pub fn ratio_preset(name: &str) -> Option<f64> {
    RATIO_PRESETS
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|&(_, r)| r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSpec {
    pub n_positive: usize,
    /// Negatives per positive.
    pub ratio: f64,
    pub easy_negative_fraction: f64,
    pub feature_dim: usize,
    pub seed: u64,
    pub jitter_sigma: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            n_positive: 200,
            ratio: 1.0,
            easy_negative_fraction: 0.9,
            feature_dim: 2,
            seed: 0,
            jitter_sigma: 0.1,
        }
    }
}

impl DataSpec {
    pub fn n_negative(&self) -> usize {
        (self.ratio * self.n_positive as f64).round() as usize
    }

    pub fn n_easy_negative(&self) -> usize {
        (self.easy_negative_fraction * self.n_negative() as f64).round() as usize
    }

    pub fn total(&self) -> usize {
        self.n_positive + self.n_negative()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_positive == 0 {
            return Err(Error::Config("n_positive must be at least 1".into()));
        }
        if !(self.ratio > 0.0 && self.ratio.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "ratio",
                value: self.ratio,
                reason: "must be positive",
            });
        }
        if !(0.0..=1.0).contains(&self.easy_negative_fraction) {
            return Err(Error::InvalidParameter {
                name: "easy_negative_fraction",
                value: self.easy_negative_fraction,
                reason: "must lie in [0, 1]",
            });
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be at least 1".into()));
        }
        if !(self.jitter_sigma >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "jitter_sigma",
                value: self.jitter_sigma,
                reason: "must be non-negative",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub negative: usize,
    pub positive: usize,
}

impl ClassCounts {
    pub fn recount(labels: &[OneHotLabel]) -> Self {
        let positive = labels.iter().filter(|y| y.is_positive()).count();
        Self {
            negative: labels.len() - positive,
            positive,
        }
    }

    pub fn total(&self) -> usize {
        self.negative + self.positive
    }

    pub fn positive_fraction(&self) -> f64 {
        self.positive as f64 / self.total() as f64
    }
}

/// Feature vectors with their labels. Counts are always kept in sync.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBatch {
    features: Vec<Vec<f64>>,
    labels: Vec<OneHotLabel>,
    counts: ClassCounts,
}

impl LabeledBatch {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<OneHotLabel>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: labels.len(),
            });
        }
        if let Some(first) = features.first() {
            let dim = first.len();
            if let Some(bad) = features.iter().position(|f| f.len() != dim) {
                return Err(Error::at_index(
                    bad,
                    Error::DimensionMismatch {
                        expected: dim,
                        got: features[bad].len(),
                    },
                ));
            }
        }
        let counts = ClassCounts::recount(&labels);
        Ok(Self {
            features,
            labels,
            counts,
        })
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[OneHotLabel] {
        &self.labels
    }

    pub fn counts(&self) -> ClassCounts {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn golds(&self) -> Vec<u8> {
        self.labels.iter().map(OneHotLabel::class).collect()
    }

    fn push(&mut self, x: Vec<f64>, y: OneHotLabel) {
        self.features.push(x);
        self.labels.push(y);
        if y.is_positive() {
            self.counts.positive += 1;
        } else {
            self.counts.negative += 1;
        }
    }

    fn indices_of(&self, positive: bool) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i].is_positive() == positive)
            .collect()
    }

    /// CSV with header `f0,...,f{d-1},label`; floats use 9 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.feature_dim())
            .map(|j| format!("f{j}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (x, y) in self.features.iter().zip(&self.labels) {
            let mut row: Vec<String> = x.iter().map(|v| format_sig(*v, 9)).collect();
            row.push(y.class().to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing header".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.last() != Some(&"label") {
            return Err(Error::Parse("last column must be `label`".into()));
        }
        let dim = cols.len() - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::Parse(format!(
                    "row {}: expected {} fields, got {}",
                    lineno + 1,
                    dim + 1,
                    fields.len()
                )));
            }
            let x = fields[..dim]
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            let y = match fields[dim] {
                "0" => OneHotLabel::NEGATIVE,
                "1" => OneHotLabel::POSITIVE,
                other => {
                    return Err(Error::Parse(format!(
                        "row {}: bad label `{other}`",
                        lineno + 1
                    )))
                }
            };
            features.push(x);
            labels.push(y);
        }
        Self::new(features, labels)
    }
}

/// `%.{sig}g`-style formatting: shortest of fixed or scientific notation with
/// `sig` significant digits and trailing zeros removed.
pub fn format_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn gaussian_point(rng: &mut Rng, center: f64, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| center + CLUSTER_SIGMA * rng.normal()).collect()
}

pub fn generate(spec: &DataSpec) -> Result<LabeledBatch> {
    spec.validate()?;
    let mut rng = Rng::seed_from_u64(spec.seed);
    let n_neg = spec.n_negative();
    let n_easy = spec.n_easy_negative();
    let total = spec.total();
    let mut features = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for _ in 0..spec.n_positive {
        features.push(gaussian_point(&mut rng, POSITIVE_CENTER, spec.feature_dim));
        labels.push(OneHotLabel::POSITIVE);
    }
    for i in 0..n_neg {
        let center = if i < n_easy {
            EASY_NEGATIVE_CENTER
        } else {
            HARD_NEGATIVE_CENTER
        };
        features.push(gaussian_point(&mut rng, center, spec.feature_dim));
        labels.push(OneHotLabel::NEGATIVE);
    }
    LabeledBatch::new(features, labels)
}

/// Class-distribution shift applied to a training set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    #[default]
    Original,
    AddPositive,
    AddNegative,
    DownsampleNegative,
    AddBoth,
}

impl TransformKind {
    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::Original => "original",
            TransformKind::AddPositive => "add_positive",
            TransformKind::AddNegative => "add_negative",
            TransformKind::DownsampleNegative => "downsample_negative",
            TransformKind::AddBoth => "add_both",
        }
    }
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            TransformKind::Original,
            TransformKind::AddPositive,
            TransformKind::AddNegative,
            TransformKind::DownsampleNegative,
            TransformKind::AddBoth,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown transform `{s}`")))
    }
}

/// Ratio of augmented to original size used by the five-way ablation.
pub const DEFAULT_GROWTH_FACTOR: f64 = 458_477.0 / 363_871.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformSpec {
    pub kind: TransformKind,
    /// Target positive fraction for the add/downsample kinds.
    pub target_fraction_positive: f64,
    /// Size multiplier for `add_both`.
    pub growth_factor: f64,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self {
            kind: TransformKind::Original,
            target_fraction_positive: 0.5,
            growth_factor: DEFAULT_GROWTH_FACTOR,
        }
    }
}

impl TransformSpec {
    pub fn new(kind: TransformKind, target_fraction_positive: f64) -> Self {
        Self {
            kind,
            target_fraction_positive,
            ..Self::default()
        }
    }
}

fn jittered_copies(
    batch: &mut LabeledBatch,
    positive: bool,
    count: usize,
    rng: &mut Rng,
    jitter_sigma: f64,
) {
    let pool = batch.indices_of(positive);
    for _ in 0..count {
        let src = pool[rng.below(pool.len())];
        let x: Vec<f64> = batch.features[src]
            .iter()
            .map(|v| v + jitter_sigma * rng.normal())
            .collect();
        batch.push(x, OneHotLabel::from_positive(positive));
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Infeasible(format!(
            "target positive fraction {f} must lie strictly between 0 and 1"
        )));
    }
    Ok(())
}

/// Applies a class-distribution transform. Augmentation duplicates uniformly
/// chosen examples of a class with Gaussian feature jitter and appends them;
/// downsampling drops uniformly chosen negatives and keeps the original order
/// of everything else.
pub fn transform(
    batch: &LabeledBatch,
    spec: &TransformSpec,
    seed: u64,
    jitter_sigma: f64,
) -> Result<LabeledBatch> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(jitter_sigma >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "jitter_sigma",
            value: jitter_sigma,
            reason: "must be non-negative",
        });
    }
    let mut rng = Rng::seed_from_u64(seed);
    let ClassCounts { negative, positive } = batch.counts();
    let f = spec.target_fraction_positive;
    let mut out = batch.clone();
    match spec.kind {
        TransformKind::Original => {}
        TransformKind::AddPositive => {
            check_fraction(f)?;
            if positive == 0 {
                return Err(Error::Infeasible("no positive templates".into()));
            }
            let target = (f * negative as f64 / (1.0 - f)).round() as usize;
            if target < positive {
                return Err(Error::Infeasible(format!(
                    "adding positives cannot lower the positive count from {positive} to {target}"
                )));
            }
            jittered_copies(&mut out, true, target - positive, &mut rng, jitter_sigma);
        }
        TransformKind::AddNegative => {
            check_fraction(f)?;
            if negative == 0 {
                return Err(Error::Infeasible("no negative templates".into()));
            }
            let target = (positive as f64 * (1.0 - f) / f).round() as usize;
            if target < negative {
                return Err(Error::Infeasible(format!(
                    "adding negatives cannot lower the negative count from {negative} to {target}"
                )));
            }
            jittered_copies(&mut out, false, target - negative, &mut rng, jitter_sigma);
        }
        TransformKind::DownsampleNegative => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Infeasible(format!(
                    "target positive fraction {f} must lie in (0, 1]"
                )));
            }
            let target = (positive as f64 * (1.0 - f) / f).round() as usize;
            if target > negative {
                return Err(Error::Infeasible(format!(
                    "downsampling cannot raise the negative count from {negative} to {target}"
                )));
            }
            let mut neg = batch.indices_of(false);
            rng.shuffle(&mut neg);
            let mut drop = vec![false; batch.len()];
            for &i in &neg[..negative - target] {
                drop[i] = true;
            }
            let (features, labels) = batch
                .features
                .iter()
                .zip(&batch.labels)
                .zip(&drop)
                .filter(|(_, &d)| !d)
                .map(|((x, y), _)| (x.clone(), *y))
                .unzip();
            out = LabeledBatch::new(features, labels)?;
        }
        TransformKind::AddBoth => {
            let g = spec.growth_factor;
            if !(g >= 1.0 && g.is_finite()) {
                return Err(Error::Infeasible(format!(
                    "growth factor {g} must be at least 1"
                )));
            }
            let extra_pos = (positive as f64 * (g - 1.0)).round() as usize;
            let extra_neg = (negative as f64 * (g - 1.0)).round() as usize;
            if (extra_pos > 0 && positive == 0) || (extra_neg > 0 && negative == 0) {
                return Err(Error::Infeasible("missing templates for a class".into()));
            }
            jittered_copies(&mut out, true, extra_pos, &mut rng, jitter_sigma);
            jittered_copies(&mut out, false, extra_neg, &mut rng, jitter_sigma);
        }
    }
    debug_assert_eq!(out.counts, ClassCounts::recount(&out.labels));
    Ok(out)
}

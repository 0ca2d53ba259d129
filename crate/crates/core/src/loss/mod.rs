//! Imbalance-aware binary classification losses.
//!
//! Every per-sample loss is exposed twice: a `*_value` function that only
//! evaluates the loss, and an operation returning [`LossValueGrad`] with the
//! closed-form derivative with respect to the positive-class probability
//! `p1`. The chain through `p0 = 1 - p1` is already folded in.
//!
//! Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any
//! logarithm. Dice-family ratios are never clamped: a zero denominator with
//! zero smoothing is reported as [`Error::Singular`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod multiclass;

/// Lower/upper clamp applied to probabilities entering a logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

/// Default smoothing for the dice family.
pub const DEFAULT_DICE_GAMMA: f64 = 1.0;

/// Default focusing exponent for focal loss.
pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;

/// Predicted distribution over {negative, positive} for one example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbPair {
    p0: f64,
    p1: f64,
}

impl ProbPair {
    /// Builds the pair `(1 - p1, p1)`.
    pub fn from_p1(p1: f64) -> Result<Self> {
        if p1.is_nan() {
            return Err(Error::NaN("p1"));
        }
        if !(0.0..=1.0).contains(&p1) {
            return Err(Error::InvalidProbability { p0: 1.0 - p1, p1 });
        }
        Ok(Self { p0: 1.0 - p1, p1 })
    }

    pub fn new(p0: f64, p1: f64) -> Result<Self> {
        if p0.is_nan() {
            return Err(Error::NaN("p0"));
        }
        if p1.is_nan() {
            return Err(Error::NaN("p1"));
        }
        let in_range = (0.0..=1.0).contains(&p0) && (0.0..=1.0).contains(&p1);
        if !in_range || (p0 + p1 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProbability { p0, p1 });
        }
        Ok(Self { p0, p1 })
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    fn clamped_p1(&self) -> f64 {
        self.p1.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }
}

/// Gold binary label in one-hot form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub struct OneHotLabel {
    positive: bool,
}

impl OneHotLabel {
    pub const NEGATIVE: Self = Self { positive: false };
    pub const POSITIVE: Self = Self { positive: true };

    pub fn new(y0: u8, y1: u8) -> Result<Self> {
        match (y0, y1) {
            (1, 0) => Ok(Self::NEGATIVE),
            (0, 1) => Ok(Self::POSITIVE),
            _ => Err(Error::InvalidLabel { y0, y1 }),
        }
    }

    pub fn from_positive(positive: bool) -> Self {
        Self { positive }
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn y0(&self) -> f64 {
        if self.positive {
            0.0
        } else {
            1.0
        }
    }

    pub fn y1(&self) -> f64 {
        if self.positive {
            1.0
        } else {
            0.0
        }
    }

    /// Class index: 0 negative, 1 positive.
    pub fn class(&self) -> u8 {
        u8::from(self.positive)
    }
}

impl From<OneHotLabel> for u8 {
    fn from(y: OneHotLabel) -> u8 {
        y.class()
    }
}

impl TryFrom<u8> for OneHotLabel {
    type Error = Error;

    fn try_from(class: u8) -> Result<Self> {
        match class {
            0 => Ok(Self::NEGATIVE),
            1 => Ok(Self::POSITIVE),
            _ => Err(Error::InvalidLabel {
                y0: 0,
                y1: class,
            }),
        }
    }
}

/// Loss family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "CE")]
    Ce,
    #[serde(rename = "WCE")]
    Wce,
    #[serde(rename = "DL_sample")]
    DlSample,
    #[serde(rename = "DL_set")]
    DlSet,
    #[serde(rename = "TL")]
    Tversky,
    #[serde(rename = "DSC_selfadj")]
    DscSelfAdj,
    #[serde(rename = "FL")]
    Focal,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Ce,
        LossKind::Wce,
        LossKind::DlSample,
        LossKind::DlSet,
        LossKind::Tversky,
        LossKind::DscSelfAdj,
        LossKind::Focal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Ce => "CE",
            LossKind::Wce => "WCE",
            LossKind::DlSample => "DL_sample",
            LossKind::DlSet => "DL_set",
            LossKind::Tversky => "TL",
            LossKind::DscSelfAdj => "DSC_selfadj",
            LossKind::Focal => "FL",
        }
    }

    /// Whether this kind consumes per-class weights.
    pub fn uses_class_weights(&self) -> bool {
        matches!(self, LossKind::Wce | LossKind::Focal)
    }

    pub fn is_dice_family(&self) -> bool {
        matches!(
            self,
            LossKind::DlSample | LossKind::DlSet | LossKind::Tversky | LossKind::DscSelfAdj
        )
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown loss kind `{s}`")))
    }
}

/// Logarithm base used by [`wce_class_coefficient`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Ten,
    Two,
    E,
}

impl LogBase {
    pub fn log(&self, x: f64) -> f64 {
        match self {
            LogBase::Ten => x.log10(),
            LogBase::Two => x.log2(),
            LogBase::E => x.ln(),
        }
    }
}

/// A loss kind plus its hyperparameters.
///
/// `alpha` is the Tversky false-positive weight or the self-adjusting decay
/// exponent; `beta` is the Tversky false-negative weight; `gamma` is the
/// dice-family smoothing constant or, for focal loss, the focusing exponent.
/// `k` only feeds the class-weight coefficient of WCE and FL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawLossSpec")]
pub struct LossSpec {
    pub kind: LossKind,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k: f64,
    pub detach_weight: bool,
    pub log_base: LogBase,
}

/// Deserialization form: omitted hyperparameters take the kind's defaults.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLossSpec {
    #[serde(default)]
    kind: Option<LossKind>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    k: Option<f64>,
    detach_weight: Option<bool>,
    log_base: Option<LogBase>,
}

impl From<RawLossSpec> for LossSpec {
    fn from(r: RawLossSpec) -> Self {
        let d = LossSpec::new(r.kind.unwrap_or(LossKind::Ce));
        Self {
            kind: d.kind,
            alpha: r.alpha.unwrap_or(d.alpha),
            beta: r.beta.unwrap_or(d.beta),
            gamma: r.gamma.unwrap_or(d.gamma),
            k: r.k.unwrap_or(d.k),
            detach_weight: r.detach_weight.unwrap_or(d.detach_weight),
            log_base: r.log_base.unwrap_or(d.log_base),
        }
    }
}

impl Default for LossSpec {
    fn default() -> Self {
        Self::new(LossKind::Ce)
    }
}

impl LossSpec {
    /// Spec with per-kind default hyperparameters.
    pub fn new(kind: LossKind) -> Self {
        let (alpha, beta, gamma) = match kind {
            LossKind::Tversky => (0.5, 0.5, DEFAULT_DICE_GAMMA),
            LossKind::DscSelfAdj => (1.0, 0.0, DEFAULT_DICE_GAMMA),
            LossKind::DlSample | LossKind::DlSet => (0.0, 0.0, DEFAULT_DICE_GAMMA),
            LossKind::Focal => (0.0, 0.0, DEFAULT_FOCAL_GAMMA),
            LossKind::Ce | LossKind::Wce => (0.0, 0.0, 0.0),
        };
        Self {
            kind,
            alpha,
            beta,
            gamma,
            k: 1.0,
            detach_weight: false,
            log_base: LogBase::Ten,
        }
    }

    pub fn tversky(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            ..Self::new(LossKind::Tversky)
        }
    }

    pub fn dsc_selfadj(alpha: f64, gamma: f64, detach_weight: bool) -> Self {
        Self {
            alpha,
            gamma,
            detach_weight,
            ..Self::new(LossKind::DscSelfAdj)
        }
    }

    pub fn focal(gamma_focus: f64) -> Self {
        Self {
            gamma: gamma_focus,
            ..Self::new(LossKind::Focal)
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg("gamma", self.gamma)?;
        match self.kind {
            LossKind::Tversky => {
                check_nonneg("alpha", self.alpha)?;
                check_nonneg("beta", self.beta)?;
            }
            LossKind::DscSelfAdj => check_nonneg("alpha", self.alpha)?,
            LossKind::Wce | LossKind::Focal if self.k.is_nan() || self.k <= 0.0 => {
                return Err(Error::InvalidParameter {
                    name: "k",
                    value: self.k,
                    reason: "must be positive",
                });
            }
            _ => {}
        }
        Ok(())
    }
}

/// Loss value and its derivative with respect to `p1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValueGrad {
    pub value: f64,
    pub dvalue_dp1: f64,
}

/// Batch loss value and the derivative of that value with respect to each
/// example's `p1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLossValueGrad {
    pub value: f64,
    pub grads: Vec<f64>,
}

/// Per-class multipliers for WCE and FL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub const UNIT: Self = Self {
        negative: 1.0,
        positive: 1.0,
    };

    pub fn for_label(&self, y: OneHotLabel) -> f64 {
        if y.is_positive() {
            self.positive
        } else {
            self.negative
        }
    }

    /// Weights from whole-dataset class counts.
    pub fn from_counts(n_negative: usize, n_positive: usize, k: f64, base: LogBase) -> Result<Self> {
        let total = n_negative + n_positive;
        Ok(Self {
            negative: wce_class_coefficient_with_base(total, n_negative, k, base)?,
            positive: wce_class_coefficient_with_base(total, n_positive, k, base)?,
        })
    }
}

fn check_nonneg(name: &'static str, value: f64) -> Result<()> {
    if value.is_nan() {
        return Err(Error::NaN(name));
    }
    if value < 0.0 {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be non-negative",
        });
    }
    Ok(())
}

fn ratio_grad(num: f64, dnum: f64, den: f64, dden: f64) -> f64 {
    // d/dp of 1 - num/den
    -(dnum * den - num * dden) / (den * den)
}

// ---- cross entropy -------------------------------------------------------

pub fn ce_value(p: ProbPair, y: OneHotLabel) -> f64 {
    let p1 = p.clamped_p1();
    if y.is_positive() {
        -p1.ln()
    } else {
        -(1.0 - p1).ln()
    }
}

/// Vanilla cross entropy `-sum_j y_j log p_j`.
pub fn ce_loss(p: ProbPair, y: OneHotLabel) -> LossValueGrad {
    let p1 = p.clamped_p1();
    LossValueGrad {
        value: ce_value(p, y),
        dvalue_dp1: -y.y1() / p1 + y.y0() / (1.0 - p1),
    }
}

pub fn wce_value(p: ProbPair, y: OneHotLabel, class_weight: f64) -> Result<f64> {
    check_nonneg("class_weight", class_weight)?;
    Ok(class_weight * ce_value(p, y))
}

/// Cross entropy scaled by a per-class weight.
pub fn wce_loss(p: ProbPair, y: OneHotLabel, class_weight: f64) -> Result<LossValueGrad> {
    check_nonneg("class_weight", class_weight)?;
    let ce = ce_loss(p, y);
    Ok(LossValueGrad {
        value: class_weight * ce.value,
        dvalue_dp1: class_weight * ce.dvalue_dp1,
    })
}

/// `lg((n_total - n_class) / n_class + k)` in base 10.
pub fn wce_class_coefficient(n_total: usize, n_class: usize, k: f64) -> Result<f64> {
    wce_class_coefficient_with_base(n_total, n_class, k, LogBase::Ten)
}

pub fn wce_class_coefficient_with_base(
    n_total: usize,
    n_class: usize,
    k: f64,
    base: LogBase,
) -> Result<f64> {
    if n_class == 0 || n_class > n_total {
        return Err(Error::InvalidParameter {
            name: "n_class",
            value: n_class as f64,
            reason: "must satisfy 0 < n_class <= n_total",
        });
    }
    if k.is_nan() {
        return Err(Error::NaN("k"));
    }
    let arg = (n_total - n_class) as f64 / n_class as f64 + k;
    if arg <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "k",
            value: k,
            reason: "logarithm argument must be positive",
        });
    }
    Ok(base.log(arg))
}

// ---- dice family ---------------------------------------------------------

/// Smoothed per-sample dice coefficient `(2 p1 y1 + g) / (p1 + y1 + g)`.
pub fn dice_coefficient_sample(p: ProbPair, y: OneHotLabel, gamma: f64) -> Result<f64> {
    check_nonneg("gamma", gamma)?;
    let den = p.p1 + y.y1() + gamma;
    if den == 0.0 {
        return Err(Error::Singular("dice denominator is zero (gamma = 0, p1 = y1 = 0)"));
    }
    Ok((2.0 * p.p1 * y.y1() + gamma) / den)
}

fn dl_sample_terms(p: ProbPair, y: OneHotLabel, gamma: f64) -> Result<(f64, f64)> {
    check_nonneg("gamma", gamma)?;
    let (p1, y1) = (p.p1, y.y1());
    let den = p1 * p1 + y1 * y1 + gamma;
    if den == 0.0 {
        return Err(Error::Singular("dice denominator is zero (gamma = 0, p1 = y1 = 0)"));
    }
    Ok((2.0 * p1 * y1 + gamma, den))
}

pub fn dl_sample_value(p: ProbPair, y: OneHotLabel, gamma: f64) -> Result<f64> {
    let (num, den) = dl_sample_terms(p, y, gamma)?;
    Ok(1.0 - num / den)
}

/// Dice loss with a squared denominator, `1 - (2 p1 y1 + g) / (p1^2 + y1^2 + g)`.
pub fn dl_sample_loss(p: ProbPair, y: OneHotLabel, gamma: f64) -> Result<LossValueGrad> {
    let (num, den) = dl_sample_terms(p, y, gamma)?;
    let (p1, y1) = (p.p1, y.y1());
    Ok(LossValueGrad {
        value: 1.0 - num / den,
        dvalue_dp1: ratio_grad(num, 2.0 * y1, den, 2.0 * p1),
    })
}

fn dl_set_terms(ps: &[ProbPair], ys: &[OneHotLabel], gamma: f64) -> Result<(f64, f64)> {
    if ps.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: ps.len(),
            right: ys.len(),
        });
    }
    if ps.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_nonneg("gamma", gamma)?;
    let mut inter = 0.0;
    let mut p_sq = 0.0;
    let mut y_sq = 0.0;
    for (p, y) in ps.iter().zip(ys) {
        inter += p.p1 * y.y1();
        p_sq += p.p1 * p.p1;
        y_sq += y.y1() * y.y1();
    }
    let den = p_sq + y_sq + gamma;
    if den == 0.0 {
        return Err(Error::Singular("set-level dice denominator is zero"));
    }
    Ok((2.0 * inter + gamma, den))
}

pub fn dl_set_value(ps: &[ProbPair], ys: &[OneHotLabel], gamma: f64) -> Result<f64> {
    let (num, den) = dl_set_terms(ps, ys, gamma)?;
    Ok(1.0 - num / den)
}

/// Dice loss computed once over the whole batch's sums.
pub fn dl_set_loss(ps: &[ProbPair], ys: &[OneHotLabel], gamma: f64) -> Result<BatchLossValueGrad> {
    let (num, den) = dl_set_terms(ps, ys, gamma)?;
    let grads = ps
        .iter()
        .zip(ys)
        .map(|(p, y)| ratio_grad(num, 2.0 * y.y1(), den, 2.0 * p.p1))
        .collect();
    Ok(BatchLossValueGrad {
        value: 1.0 - num / den,
        grads,
    })
}

fn tversky_terms(
    p: ProbPair,
    y: OneHotLabel,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<(f64, f64)> {
    check_nonneg("alpha", alpha)?;
    check_nonneg("beta", beta)?;
    check_nonneg("gamma", gamma)?;
    let (p0, p1, y0, y1) = (p.p0, p.p1, y.y0(), y.y1());
    let tp = p1 * y1;
    let den = tp + alpha * p1 * y0 + beta * p0 * y1 + gamma;
    if den <= 0.0 {
        return Err(Error::Singular("Tversky denominator is zero"));
    }
    Ok((tp + gamma, den))
}

pub fn tversky_value(p: ProbPair, y: OneHotLabel, alpha: f64, beta: f64, gamma: f64) -> Result<f64> {
    let (num, den) = tversky_terms(p, y, alpha, beta, gamma)?;
    Ok(1.0 - num / den)
}

/// Tversky loss; `alpha` penalizes false positives, `beta` false negatives.
pub fn tversky_loss(
    p: ProbPair,
    y: OneHotLabel,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<LossValueGrad> {
    let (num, den) = tversky_terms(p, y, alpha, beta, gamma)?;
    let (y0, y1) = (y.y0(), y.y1());
    Ok(LossValueGrad {
        value: 1.0 - num / den,
        dvalue_dp1: ratio_grad(num, y1, den, y1 + alpha * y0 - beta * y1),
    })
}

fn dsc_weight(p1: f64, alpha: f64) -> f64 {
    (1.0 - p1).powf(alpha)
}

fn dsc_selfadj_terms(p: ProbPair, y: OneHotLabel, alpha: f64, gamma: f64) -> Result<(f64, f64, f64)> {
    check_nonneg("alpha", alpha)?;
    check_nonneg("gamma", gamma)?;
    let q = dsc_weight(p.p1, alpha) * p.p1;
    let y1 = y.y1();
    let den = q + y1 + gamma;
    if den == 0.0 {
        return Err(Error::Singular("self-adjusting dice denominator is zero"));
    }
    Ok((q, 2.0 * q * y1 + gamma, den))
}

pub fn dsc_selfadj_value(p: ProbPair, y: OneHotLabel, alpha: f64, gamma: f64) -> Result<f64> {
    let (_, num, den) = dsc_selfadj_terms(p, y, alpha, gamma)?;
    Ok(1.0 - num / den)
}

/// Self-adjusting dice loss: dice with `p1` replaced by `(1 - p1)^alpha * p1`.
///
/// With `detach_weight` the decay factor `(1 - p1)^alpha` is held constant
/// when differentiating; the value is unaffected.
pub fn dsc_selfadj_loss(
    p: ProbPair,
    y: OneHotLabel,
    alpha: f64,
    gamma: f64,
    detach_weight: bool,
) -> Result<LossValueGrad> {
    let (_, num, den) = dsc_selfadj_terms(p, y, alpha, gamma)?;
    let p1 = p.p1;
    let w = dsc_weight(p1, alpha);
    let dq_dp = if detach_weight || alpha == 0.0 {
        w
    } else {
        w - alpha * p1 * (1.0 - p1).powf(alpha - 1.0)
    };
    let y1 = y.y1();
    Ok(LossValueGrad {
        value: 1.0 - num / den,
        dvalue_dp1: ratio_grad(num, 2.0 * y1 * dq_dp, den, dq_dp),
    })
}

// ---- focal ---------------------------------------------------------------

pub fn focal_value(p: ProbPair, y: OneHotLabel, gamma_focus: f64, class_weight: f64) -> Result<f64> {
    check_nonneg("gamma_focus", gamma_focus)?;
    check_nonneg("class_weight", class_weight)?;
    let p1 = p.clamped_p1();
    // Probability assigned to the gold class.
    let pt = if y.is_positive() { p1 } else { 1.0 - p1 };
    Ok(-class_weight * (1.0 - pt).powf(gamma_focus) * pt.ln())
}

/// Focal loss `-w (1 - p_t)^g log p_t`.
pub fn focal_loss(
    p: ProbPair,
    y: OneHotLabel,
    gamma_focus: f64,
    class_weight: f64,
) -> Result<LossValueGrad> {
    let value = focal_value(p, y, gamma_focus, class_weight)?;
    let p1 = p.clamped_p1();
    let (pt, dpt_dp1) = if y.is_positive() {
        (p1, 1.0)
    } else {
        (1.0 - p1, -1.0)
    };
    let modulator = (1.0 - pt).powf(gamma_focus);
    let dmod = if gamma_focus == 0.0 {
        0.0
    } else {
        -gamma_focus * (1.0 - pt).powf(gamma_focus - 1.0)
    };
    let dvalue_dpt = -class_weight * (dmod * pt.ln() + modulator / pt);
    Ok(LossValueGrad {
        value,
        dvalue_dp1: dvalue_dpt * dpt_dp1,
    })
}

// ---- dispatch ------------------------------------------------------------

/// Per-sample loss value for any kind. `DL_set` is evaluated as a singleton
/// batch. `class_weight` is ignored by kinds that do not use it.
///
/// This path touches value functions only.
pub fn sample_value(spec: &LossSpec, p: ProbPair, y: OneHotLabel, class_weight: f64) -> Result<f64> {
    match spec.kind {
        LossKind::Ce => Ok(ce_value(p, y)),
        LossKind::Wce => wce_value(p, y, class_weight),
        LossKind::DlSample => dl_sample_value(p, y, spec.gamma),
        LossKind::DlSet => dl_set_value(&[p], &[y], spec.gamma),
        LossKind::Tversky => tversky_value(p, y, spec.alpha, spec.beta, spec.gamma),
        LossKind::DscSelfAdj => dsc_selfadj_value(p, y, spec.alpha, spec.gamma),
        LossKind::Focal => focal_value(p, y, spec.gamma, class_weight),
    }
}

/// Per-sample loss value and analytic gradient for any kind.
pub fn sample_loss(spec: &LossSpec, p: ProbPair, y: OneHotLabel, class_weight: f64) -> Result<LossValueGrad> {
    match spec.kind {
        LossKind::Ce => Ok(ce_loss(p, y)),
        LossKind::Wce => wce_loss(p, y, class_weight),
        LossKind::DlSample => dl_sample_loss(p, y, spec.gamma),
        LossKind::DlSet => {
            let b = dl_set_loss(&[p], &[y], spec.gamma)?;
            Ok(LossValueGrad {
                value: b.value,
                dvalue_dp1: b.grads[0],
            })
        }
        LossKind::Tversky => tversky_loss(p, y, spec.alpha, spec.beta, spec.gamma),
        LossKind::DscSelfAdj => dsc_selfadj_loss(p, y, spec.alpha, spec.gamma, spec.detach_weight),
        LossKind::Focal => focal_loss(p, y, spec.gamma, class_weight),
    }
}

/// Mean loss over a batch, with the gradient of that mean with respect to
/// every example's `p1` (so per-sample gradients carry the `1/N` factor).
///
/// `DL_set` is routed to [`dl_set_loss`] and is not averaged.
pub fn batch_mean_loss(
    spec: &LossSpec,
    ps: &[ProbPair],
    ys: &[OneHotLabel],
    class_weights: Option<ClassWeights>,
) -> Result<BatchLossValueGrad> {
    if ps.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: ps.len(),
            right: ys.len(),
        });
    }
    if ps.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let weights = match (spec.kind.uses_class_weights(), class_weights) {
        (true, Some(w)) => w,
        (true, None) => {
            return Err(Error::Config(format!(
                "{} requires per-class weights",
                spec.kind
            )))
        }
        (false, Some(_)) => {
            return Err(Error::Config(format!(
                "{} does not take per-class weights",
                spec.kind
            )))
        }
        (false, None) => ClassWeights::UNIT,
    };
    if spec.kind == LossKind::DlSet {
        return dl_set_loss(ps, ys, spec.gamma);
    }
    let n = ps.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(ps.len());
    for (i, (p, y)) in ps.iter().zip(ys).enumerate() {
        let r = sample_loss(spec, *p, *y, weights.for_label(*y)).map_err(|e| Error::at_index(i, e))?;
        total += r.value;
        grads.push(r.dvalue_dp1 / n);
    }
    Ok(BatchLossValueGrad {
        value: total / n,
        grads,
    })
}

//! Deterministic mini-batch SGD for a logistic model or a one-hidden-layer
//! tanh network, driven by any [`LossSpec`].
//!
//! Parameter layout, flat:
//! - linear: `[w_0 .. w_{d-1}, b]`
//! - mlp: `[W1 (h x d, row-major), b1 (h), w2 (h), b2]`

use serde::{Deserialize, Serialize};

use crate::data::LabeledBatch;
use crate::error::{Error, Result};
use crate::loss::{batch_mean_loss, ClassWeights, LossSpec, OneHotLabel, ProbPair};
use crate::metrics::{confusion, harden, metrics_from_counts, ClassifierMetrics, DEFAULT_THRESHOLD};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    #[default]
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub arch: Arch,
    pub hidden_units: usize,
    pub activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            arch: Arch::Linear,
            hidden_units: 16,
            activation: Activation::Tanh,
        }
    }
}

impl ModelSpec {
    pub fn mlp(hidden_units: usize) -> Self {
        Self {
            arch: Arch::Mlp,
            hidden_units,
            activation: Activation::Tanh,
        }
    }

    pub fn param_count(&self, input_dim: usize) -> usize {
        match self.arch {
            Arch::Linear => input_dim + 1,
            Arch::Mlp => self.hidden_units * (input_dim + 2) + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arch == Arch::Mlp && self.hidden_units == 0 {
            return Err(Error::Config("mlp needs at least one hidden unit".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            init_scale: 0.1,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "learning_rate",
                value: self.learning_rate,
                reason: "must be positive",
            });
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "init_scale",
                value: self.init_scale,
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct EpochStats {
    pub mean_loss: f64,
    pub train_f1: f64,
}

impl From<(f64, f64)> for EpochStats {
    fn from((mean_loss, train_f1): (f64, f64)) -> Self {
        Self { mean_loss, train_f1 }
    }
}

impl From<EpochStats> for (f64, f64) {
    fn from(s: EpochStats) -> Self {
        (s.mean_loss, s.train_f1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct TrainedModel {
    model_spec: ModelSpec,
    input_dim: usize,
    parameters: Vec<f64>,
    history: Vec<EpochStats>,
}

/// On-disk JSON layout of a trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    arch: Arch,
    hidden_units: usize,
    parameters: Vec<f64>,
    history: Vec<EpochStats>,
}

impl From<TrainedModel> for ModelFile {
    fn from(m: TrainedModel) -> Self {
        Self {
            arch: m.model_spec.arch,
            hidden_units: m.model_spec.hidden_units,
            parameters: m.parameters,
            history: m.history,
        }
    }
}

impl TryFrom<ModelFile> for TrainedModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let n = f.parameters.len();
        let input_dim = match f.arch {
            Arch::Linear if n >= 2 => Some(n - 1),
            Arch::Mlp if f.hidden_units > 0 && (n - 1).is_multiple_of(f.hidden_units) && n > 1 => {
                ((n - 1) / f.hidden_units).checked_sub(2).filter(|&d| d > 0)
            }
            _ => None,
        }
        .ok_or_else(|| Error::Parse(format!("{n} parameters do not fit the architecture")))?;
        let spec = ModelSpec {
            arch: f.arch,
            hidden_units: f.hidden_units,
            activation: Activation::Tanh,
        };
        let mut m = TrainedModel::from_parameters(spec, input_dim, f.parameters)?;
        m.history = f.history;
        Ok(m)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl TrainedModel {
    pub fn from_parameters(model_spec: ModelSpec, input_dim: usize, parameters: Vec<f64>) -> Result<Self> {
        model_spec.validate()?;
        let expected = model_spec.param_count(input_dim);
        if parameters.len() != expected {
            return Err(Error::LengthMismatch {
                left: parameters.len(),
                right: expected,
            });
        }
        Ok(Self {
            model_spec,
            input_dim,
            parameters,
            history: Vec::new(),
        })
    }

    /// Seeded initialization: weights `init_scale * N(0, 1)`, biases zero.
    pub fn initialize(model_spec: ModelSpec, input_dim: usize, init_scale: f64, rng: &mut Rng) -> Result<Self> {
        model_spec.validate()?;
        let d = input_dim;
        let parameters = match model_spec.arch {
            Arch::Linear => (0..d)
                .map(|_| init_scale * rng.normal())
                .chain(std::iter::once(0.0))
                .collect(),
            Arch::Mlp => {
                let h = model_spec.hidden_units;
                let mut p = Vec::with_capacity(model_spec.param_count(d));
                p.extend((0..h * d).map(|_| init_scale * rng.normal()));
                p.extend(std::iter::repeat_n(0.0, h));
                p.extend((0..h).map(|_| init_scale * rng.normal()));
                p.push(0.0);
                p
            }
        };
        Self::from_parameters(model_spec, input_dim, parameters)
    }

    pub fn model_spec(&self) -> ModelSpec {
        self.model_spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn parameters(&self) -> &[f64] {
        &self.parameters
    }

    pub fn history(&self) -> &[EpochStats] {
        &self.history
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn logit(&self, x: &[f64]) -> f64 {
        let p = &self.parameters;
        let d = self.input_dim;
        match self.model_spec.arch {
            Arch::Linear => dot(&p[..d], x) + p[d],
            Arch::Mlp => {
                let h = self.model_spec.hidden_units;
                let (w1, rest) = p.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                let mut z = b2[0];
                for j in 0..h {
                    z += w2[j] * (dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh();
                }
                z
            }
        }
    }

    /// Adds `scale * d logit / d params` into `out`; returns the logit.
    fn accumulate_logit_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) -> f64 {
        let p = &self.parameters;
        let d = self.input_dim;
        match self.model_spec.arch {
            Arch::Linear => {
                for (o, xi) in out[..d].iter_mut().zip(x) {
                    *o += scale * xi;
                }
                out[d] += scale;
                dot(&p[..d], x) + p[d]
            }
            Arch::Mlp => {
                let h = self.model_spec.hidden_units;
                let w1 = &p[..h * d];
                let b1 = &p[h * d..h * d + h];
                let w2 = &p[h * d + h..h * d + 2 * h];
                let b2 = p[h * d + 2 * h];
                let mut z = b2;
                for j in 0..h {
                    let a = (dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh();
                    z += w2[j] * a;
                    let back = scale * w2[j] * (1.0 - a * a);
                    for (o, xi) in out[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *o += back * xi;
                    }
                    out[h * d + j] += back;
                    out[h * d + h + j] += scale * a;
                }
                out[h * d + 2 * h] += scale;
                z
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ProbPair> {
        self.check_dim(x)?;
        ProbPair::from_p1(sigmoid(self.logit(x)))
    }

    /// Batch loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        xs: &[&[f64]],
        ys: &[OneHotLabel],
        loss: &LossSpec,
        class_weights: Option<ClassWeights>,
    ) -> Result<(f64, Vec<f64>)> {
        let ps = xs
            .iter()
            .map(|x| self.forward(x))
            .collect::<Result<Vec<_>>>()?;
        let batch = batch_mean_loss(loss, &ps, ys, class_weights)?;
        let mut grad = vec![0.0; self.parameters.len()];
        for ((x, p), g) in xs.iter().zip(&ps).zip(&batch.grads) {
            // sigmoid'(z) = p1 (1 - p1); a saturated sigmoid passes no
            // gradient even where d loss / d p1 is unbounded.
            let slope = p.p1() * p.p0();
            if slope != 0.0 {
                let dz = g * slope;
                self.accumulate_logit_grad(x, dz, &mut grad);
            }
        }
        Ok((batch.value, grad))
    }

    /// Loss of the batch only, for finite-difference checks.
    pub fn loss_value(
        &self,
        xs: &[&[f64]],
        ys: &[OneHotLabel],
        loss: &LossSpec,
        class_weights: Option<ClassWeights>,
    ) -> Result<f64> {
        let ps = xs
            .iter()
            .map(|x| self.forward(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(batch_mean_loss(loss, &ps, ys, class_weights)?.value)
    }

    pub fn with_parameters(&self, parameters: Vec<f64>) -> Result<Self> {
        let mut m = Self::from_parameters(self.model_spec, self.input_dim, parameters)?;
        m.history = self.history.clone();
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-class weights for WCE/FL from whole-dataset counts; `None` for
/// kinds that do not use them.
pub fn class_weights_for(data: &LabeledBatch, loss: &LossSpec) -> Result<Option<ClassWeights>> {
    if !loss.kind.uses_class_weights() {
        return Ok(None);
    }
    let c = data.counts();
    ClassWeights::from_counts(c.negative, c.positive, loss.k, loss.log_base).map(Some)
}

pub fn train(
    data: &LabeledBatch,
    loss: &LossSpec,
    model_spec: &ModelSpec,
    train_spec: &TrainSpec,
) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    loss.validate()?;
    train_spec.validate()?;
    let weights = class_weights_for(data, loss)?;

    let mut rng = Rng::seed_from_u64(train_spec.seed);
    let mut model = TrainedModel::initialize(*model_spec, data.feature_dim(), train_spec.init_scale, &mut rng)?;

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut xs: Vec<&[f64]> = Vec::with_capacity(train_spec.batch_size);
    let mut ys = Vec::with_capacity(train_spec.batch_size);
    for epoch in 0..train_spec.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(train_spec.batch_size) {
            xs.clear();
            ys.clear();
            for &i in chunk {
                xs.push(&data.features()[i]);
                ys.push(data.labels()[i]);
            }
            let (value, grad) = model.loss_and_grad(&xs, &ys, loss, weights)?;
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    value,
                });
            }
            loss_sum += value * chunk.len() as f64;
            for (p, g) in model.parameters.iter_mut().zip(&grad) {
                *p -= train_spec.learning_rate * g;
            }
        }
        let train_f1 = evaluate(&model, data, DEFAULT_THRESHOLD)?.f1;
        model.history.push(EpochStats {
            mean_loss: loss_sum / n as f64,
            train_f1,
        });
    }
    Ok(model)
}

/// Hard predictions of `model` on every example.
pub fn predict(model: &TrainedModel, data: &LabeledBatch, threshold: f64) -> Result<Vec<u8>> {
    data.features()
        .iter()
        .map(|x| model.forward(x).map(|p| harden(p, threshold)))
        .collect()
}

pub fn evaluate(model: &TrainedModel, data: &LabeledBatch, threshold: f64) -> Result<ClassifierMetrics> {
    let preds = predict(model, data, threshold)?;
    Ok(metrics_from_counts(&confusion(&preds, &data.golds())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, DataSpec};
    use crate::loss::LossKind;
    use approx::assert_abs_diff_eq;

    fn linear(w: &[f64], b: f64) -> TrainedModel {
        let mut p = w.to_vec();
        p.push(b);
        TrainedModel::from_parameters(ModelSpec::default(), w.len(), p).unwrap()
    }

    #[test]
    fn forward_examples() {
        let zero = linear(&[0.0, 0.0], 0.0);
        assert_eq!(zero.forward(&[3.0, -7.0]).unwrap().p1(), 0.5);
        let m = linear(&[1.0, 0.0], 0.0);
        assert_eq!(m.forward(&[0.0, 5.0]).unwrap().p1(), 0.5);
        assert_abs_diff_eq!(m.forward(&[2.0, 0.0]).unwrap().p1(), 0.880797, epsilon = 1e-6);
        assert!(matches!(
            m.forward(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        let p = m.forward(&[0.3, 0.0]).unwrap();
        assert!((p.p0() + p.p1() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn mlp_parameter_count() {
        let spec = ModelSpec::mlp(16);
        assert_eq!(spec.param_count(2), 16 * 2 + 16 + 16 + 1);
        let mut rng = Rng::seed_from_u64(1);
        let m = TrainedModel::initialize(spec, 2, 0.1, &mut rng).unwrap();
        assert_eq!(m.parameters().len(), 65);
        assert!(TrainedModel::initialize(ModelSpec::mlp(0), 2, 0.1, &mut rng).is_err());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = generate(&DataSpec { n_positive: 20, seed: 2, ..DataSpec::default() }).unwrap();
        let ts = TrainSpec { epochs: 0, seed: 11, ..TrainSpec::default() };
        let m = train(&data, &LossSpec::default(), &ModelSpec::default(), &ts).unwrap();
        let mut rng = Rng::seed_from_u64(11);
        let init = TrainedModel::initialize(ModelSpec::default(), 2, 0.1, &mut rng).unwrap();
        assert_eq!(m.parameters(), init.parameters());
        assert!(m.history().is_empty());
    }

    #[test]
    fn separable_balanced_ce_reaches_high_f1() {
        let data = generate(&DataSpec {
            n_positive: 200,
            easy_negative_fraction: 1.0,
            seed: 5,
            ..DataSpec::default()
        })
        .unwrap();
        let m = train(&data, &LossSpec::default(), &ModelSpec::default(), &TrainSpec::default()).unwrap();
        assert!(m.history().last().unwrap().train_f1 >= 0.99);
    }

    #[test]
    fn training_is_deterministic() {
        let data = generate(&DataSpec { n_positive: 30, ratio: 3.0, seed: 2, ..DataSpec::default() }).unwrap();
        let ts = TrainSpec { epochs: 20, ..TrainSpec::default() };
        for kind in [LossKind::DscSelfAdj, LossKind::Focal] {
            let a = train(&data, &LossSpec::new(kind), &ModelSpec::mlp(4), &ts).unwrap();
            let b = train(&data, &LossSpec::new(kind), &ModelSpec::mlp(4), &ts).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn evaluate_examples() {
        let data = generate(&DataSpec { n_positive: 10, ratio: 4.0, seed: 3, ..DataSpec::default() }).unwrap();
        // Bias so negative that p1 underflows to 0 everywhere.
        let never = linear(&[0.0, 0.0], -800.0);
        let m = evaluate(&never, &data, 0.5).unwrap();
        assert_eq!(m.f1, 0.0);
        assert_abs_diff_eq!(m.accuracy, 40.0 / 50.0, epsilon = 1e-15);
        assert_eq!(evaluate(&never, &data, 0.5).unwrap(), m);
    }

    #[test]
    fn model_json_layout() {
        let data = generate(&DataSpec { n_positive: 10, seed: 3, ..DataSpec::default() }).unwrap();
        let ts = TrainSpec { epochs: 3, ..TrainSpec::default() };
        for spec in [ModelSpec::default(), ModelSpec::mlp(3)] {
            let m = train(&data, &LossSpec::default(), &spec, &ts).unwrap();
            let json = m.to_json().unwrap();
            let v: serde_json::Value = serde_json::from_str(&json).unwrap();
            assert_eq!(v.as_object().unwrap().len(), 4);
            let pos: Vec<usize> = ["\"arch\"", "\"hidden_units\"", "\"parameters\"", "\"history\""]
                .iter()
                .map(|k| json.find(k).unwrap())
                .collect();
            assert!(pos.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(v["history"][0].as_array().unwrap().len(), 2);
            assert_eq!(TrainedModel::from_json(&json).unwrap(), m);
        }
        let bad = r#"{"arch":"mlp","hidden_units":3,"parameters":[1,2,3],"history":[]}"#;
        assert!(TrainedModel::from_json(bad).is_err());
    }

    #[test]
    fn mismatched_class_weights_surface() {
        // A single-class dataset cannot produce WCE weights.
        let data = LabeledBatch::new(vec![vec![0.0, 0.0]], vec![OneHotLabel::POSITIVE]).unwrap();
        let r = train(&data, &LossSpec::new(LossKind::Wce), &ModelSpec::default(), &TrainSpec::default());
        assert!(r.is_err());
    }
}

//! Multi-class extension of the binary losses.
//!
//! Cross-entropy-style kinds (CE, WCE, FL) generalize directly through the
//! gold-class probability. Dice-family kinds are evaluated one-vs-rest: each
//! non-background class is scored against its own binary indicator and the
//! per-class losses are averaged. Class 0 is the background class.

use super::{batch_mean_loss, sample_loss, LossKind, LossSpec, OneHotLabel, ProbPair};
use crate::error::{Error, Result};

/// Mean multi-class loss and its gradient with respect to every entry of
/// `probs` (`grads[i][c] = d value / d probs[i][c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassLossGrad {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
}

pub fn multiclass_loss(
    spec: &LossSpec,
    probs: &[Vec<f64>],
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<MulticlassLossGrad> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    let Some(first) = probs.first() else {
        return Err(Error::EmptyBatch);
    };
    let n_classes = first.len();
    if n_classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    for (i, row) in probs.iter().enumerate() {
        if row.len() != n_classes {
            return Err(Error::at_index(
                i,
                Error::LengthMismatch {
                    left: row.len(),
                    right: n_classes,
                },
            ));
        }
        if row.iter().any(|p| p.is_nan()) {
            return Err(Error::at_index(i, Error::NaN("probs")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::at_index(
                i,
                Error::Config(format!("row is not a distribution (sum {sum})")),
            ));
        }
        if labels[i] >= n_classes {
            return Err(Error::at_index(
                i,
                Error::Config(format!("label {} out of range", labels[i])),
            ));
        }
    }

    let mut grads = vec![vec![0.0; n_classes]; probs.len()];
    let n = probs.len() as f64;

    if spec.kind.is_dice_family() {
        let positives = (n_classes - 1) as f64;
        let mut total = 0.0;
        for c in 1..n_classes {
            let ps = probs
                .iter()
                .map(|row| ProbPair::from_p1(row[c]))
                .collect::<Result<Vec<_>>>()?;
            let ys: Vec<OneHotLabel> = labels
                .iter()
                .map(|&l| OneHotLabel::from_positive(l == c))
                .collect();
            let b = batch_mean_loss(spec, &ps, &ys, None)?;
            total += b.value;
            for (row, g) in grads.iter_mut().zip(&b.grads) {
                row[c] = g / positives;
            }
        }
        return Ok(MulticlassLossGrad {
            value: total / positives,
            grads,
        });
    }

    let weights = match (spec.kind.uses_class_weights(), class_weights) {
        (true, Some(w)) if w.len() == n_classes => Some(w),
        (true, Some(w)) => {
            return Err(Error::LengthMismatch {
                left: w.len(),
                right: n_classes,
            })
        }
        (true, None) => {
            return Err(Error::Config(format!("{} requires per-class weights", spec.kind)))
        }
        (false, _) => None,
    };
    debug_assert!(matches!(spec.kind, LossKind::Ce | LossKind::Wce | LossKind::Focal));
    let mut total = 0.0;
    for (i, (row, &label)) in probs.iter().zip(labels).enumerate() {
        // The gold-class probability plays the role of p1 for a positive.
        let pt = ProbPair::from_p1(row[label])?;
        let w = weights.map_or(1.0, |w| w[label]);
        let r = sample_loss(spec, pt, OneHotLabel::POSITIVE, w).map_err(|e| Error::at_index(i, e))?;
        total += r.value;
        grads[i][label] = r.dvalue_dp1 / n;
    }
    Ok(MulticlassLossGrad {
        value: total / n,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_class_ce_matches_binary() {
        let spec = LossSpec::new(LossKind::Ce);
        let probs = vec![vec![0.3, 0.7], vec![0.8, 0.2]];
        let labels = [1, 0];
        let mc = multiclass_loss(&spec, &probs, &labels, None).unwrap();
        let ps = [ProbPair::from_p1(0.7).unwrap(), ProbPair::from_p1(0.2).unwrap()];
        let ys = [OneHotLabel::POSITIVE, OneHotLabel::NEGATIVE];
        let bin = batch_mean_loss(&spec, &ps, &ys, None).unwrap();
        assert_abs_diff_eq!(mc.value, bin.value, epsilon = 1e-15);
    }

    #[test]
    fn two_class_dice_matches_binary() {
        let spec = LossSpec::new(LossKind::DlSample);
        let probs = vec![vec![0.3, 0.7], vec![0.8, 0.2], vec![0.5, 0.5]];
        let labels = [1, 0, 1];
        let mc = multiclass_loss(&spec, &probs, &labels, None).unwrap();
        let ps: Vec<_> = probs.iter().map(|r| ProbPair::from_p1(r[1]).unwrap()).collect();
        let ys: Vec<_> = labels.iter().map(|&l| OneHotLabel::from_positive(l == 1)).collect();
        let bin = batch_mean_loss(&spec, &ps, &ys, None).unwrap();
        assert_abs_diff_eq!(mc.value, bin.value, epsilon = 1e-15);
        for (row, g) in mc.grads.iter().zip(&bin.grads) {
            assert_eq!(row[0], 0.0);
            assert_abs_diff_eq!(row[1], *g, epsilon = 1e-15);
        }
    }

    #[test]
    fn three_class_dice_averages_foreground_classes() {
        let spec = LossSpec::new(LossKind::DlSet);
        let probs = vec![vec![0.1, 0.6, 0.3], vec![0.7, 0.1, 0.2]];
        let labels = [1, 2];
        let mc = multiclass_loss(&spec, &probs, &labels, None).unwrap();
        let class_loss = |c: usize| {
            let ps: Vec<_> = probs.iter().map(|r| ProbPair::from_p1(r[c]).unwrap()).collect();
            let ys: Vec<_> = labels.iter().map(|&l| OneHotLabel::from_positive(l == c)).collect();
            super::super::dl_set_value(&ps, &ys, 1.0).unwrap()
        };
        assert_abs_diff_eq!(mc.value, (class_loss(1) + class_loss(2)) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let probs = vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.25, 0.25, 0.5]];
        let labels = [1, 0, 2];
        let weights = [0.4, 1.1, 0.9];
        for kind in LossKind::ALL {
            let spec = LossSpec::new(kind);
            let w = kind.uses_class_weights().then_some(&weights[..]);
            let mc = multiclass_loss(&spec, &probs, &labels, w).unwrap();
            let h = 1e-6;
            for i in 0..probs.len() {
                for c in 0..3 {
                    // Directional derivative along e_c - e_other keeps the
                    // row a distribution.
                    let other = (c + 1) % 3;
                    let eval = |delta: f64| {
                        let mut p = probs.clone();
                        p[i][c] += delta;
                        p[i][other] -= delta;
                        multiclass_loss(&spec, &p, &labels, w).unwrap().value
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let analytic = mc.grads[i][c] - mc.grads[i][other];
                    assert!(
                        (fd - analytic).abs() < 1e-6 * (1.0 + analytic.abs()),
                        "{kind} i={i} c={c}: fd {fd} vs {analytic}"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let spec = LossSpec::new(LossKind::Ce);
        assert!(multiclass_loss(&spec, &[vec![0.5, 0.6]], &[0], None).is_err());
        assert!(multiclass_loss(&spec, &[vec![0.5, 0.5]], &[2], None).is_err());
        assert!(multiclass_loss(&spec, &[], &[], None).is_err());
        let wce = LossSpec::new(LossKind::Wce);
        assert!(multiclass_loss(&wce, &[vec![0.5, 0.5]], &[0], None).is_err());
    }
}

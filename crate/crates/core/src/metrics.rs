//! Example-level binary classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::ProbPair;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// 1 iff `p1 > threshold` (strict).
pub fn harden(p: ProbPair, threshold: f64) -> u8 {
    u8::from(p.p1() > threshold)
}

fn check_pair_lengths(preds: &[u8], golds: &[u8]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

pub fn confusion(preds: &[u8], golds: &[u8]) -> Result<ConfusionCounts> {
    check_pair_lengths(preds, golds)?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in preds.iter().zip(golds) {
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio_or_zero(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Undefined precision or recall is reported as 0; an empty count set scores
/// 0 accuracy.
pub fn metrics_from_counts(c: &ConfusionCounts) -> ClassifierMetrics {
    let precision = ratio_or_zero(c.tp, c.tp + c.fp);
    let recall = ratio_or_zero(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassifierMetrics {
        precision,
        recall,
        f1,
        accuracy: ratio_or_zero(c.tp + c.tn, c.total()),
    }
}

/// Dice coefficient between the predicted-positive and gold-positive index
/// sets; 1 when both are empty.
pub fn set_dice(preds: &[u8], golds: &[u8]) -> Result<f64> {
    let c = confusion(preds, golds)?;
    let den = 2 * c.tp + c.fp + c.fn_;
    Ok(if den == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / den as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pp(p1: f64) -> ProbPair {
        ProbPair::from_p1(p1).unwrap()
    }

    #[test]
    fn harden_examples() {
        assert_eq!(harden(pp(0.7), 0.5), 1);
        assert_eq!(harden(pp(0.5), 0.5), 0);
        assert_eq!(harden(pp(0.2), 0.1), 1);
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (2, 1, 0, 0));
        let c = confusion(&[1, 1, 0, 1], &[1, 0, 1, 1]).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (2, 1, 1, 0));
        let c = confusion(&[0; 6], &[1; 6]).unwrap();
        assert_eq!((c.tp, c.fn_), (0, 6));
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn metrics_examples() {
        let m = metrics_from_counts(&ConfusionCounts { tp: 2, fp: 1, fn_: 1, tn: 0 });
        assert_abs_diff_eq!(m.precision, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.recall, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.f1, 0.666667, epsilon = 1e-6);

        let m = metrics_from_counts(&ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 5 });
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.0, 0.0, 0.0, 1.0));

        let m = metrics_from_counts(&ConfusionCounts { tp: 7, fp: 0, fn_: 0, tn: 0 });
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn set_dice_examples() {
        let d = set_dice(&[1, 1, 0, 1], &[1, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(d, 4.0 / 6.0, epsilon = 1e-15);
        assert_eq!(set_dice(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(set_dice(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(set_dice(&[0, 0], &[0, 0]).unwrap(), 1.0);
    }

    fn binary_vecs() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (1usize..64).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u8..=1, n),
                proptest::collection::vec(0u8..=1, n),
            )
        })
    }

    proptest! {
        #[test]
        fn set_dice_equals_f1((preds, golds) in binary_vecs()) {
            prop_assume!(preds.iter().chain(&golds).any(|&v| v == 1));
            let f1 = metrics_from_counts(&confusion(&preds, &golds).unwrap()).f1;
            prop_assert!((set_dice(&preds, &golds).unwrap() - f1).abs() <= 1e-12);
        }

        #[test]
        fn set_dice_is_symmetric((a, b) in binary_vecs()) {
            prop_assert_eq!(set_dice(&a, &b).unwrap(), set_dice(&b, &a).unwrap());
        }

        #[test]
        fn harden_monotone_in_threshold(p1 in 0.0f64..=1.0, t1 in 0.001f64..0.999, t2 in 0.001f64..0.999) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(harden(pp(p1), hi) <= harden(pp(p1), lo));
        }

        #[test]
        fn counts_sum_to_length((preds, golds) in binary_vecs()) {
            prop_assert_eq!(confusion(&preds, &golds).unwrap().total(), preds.len());
        }
    }
}

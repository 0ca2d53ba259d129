//! Independent oracles: finite-difference gradients and brute-force F1.
//!
//! Everything here evaluates losses through the value-only functions of
//! [`crate::loss`]; analytic gradients are only ever the thing under test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{
    sample_loss, sample_value, wce_class_coefficient_with_base, ClassWeights, LossKind, LossSpec,
    OneHotLabel, ProbPair,
};
use crate::metrics::{confusion, harden, metrics_from_counts, DEFAULT_THRESHOLD};
use crate::rng::Rng;
use crate::trainer::TrainedModel;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Relative tolerance between analytic and finite-difference gradients.
pub const REL_TOL: f64 = 1e-5;
/// Absolute tolerance; samples under it pass regardless of relative error.
pub const ABS_TOL: f64 = 1e-8;

/// Numerical `d loss / d p1` from value evaluations only.
///
/// Uses a central difference; at points within `h` of 0 or 1 it switches to
/// the second-order one-sided stencil pointing into the domain.
pub fn finite_diff_grad(spec: &LossSpec, p1: f64, y: OneHotLabel, h: f64, class_weight: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter {
            name: "h",
            value: h,
            reason: "step must be positive",
        });
    }
    let f = |x: f64| -> Result<f64> { sample_value(spec, ProbPair::from_p1(x)?, y, class_weight) };
    if p1 - h >= 0.0 && p1 + h <= 1.0 {
        Ok((f(p1 + h)? - f(p1 - h)?) / (2.0 * h))
    } else if (0.0..=1.0).contains(&p1) && p1 + 2.0 * h <= 1.0 {
        Ok((-3.0 * f(p1)? + 4.0 * f(p1 + h)? - f(p1 + 2.0 * h)?) / (2.0 * h))
    } else if (0.0..=1.0).contains(&p1) && p1 - 2.0 * h >= 0.0 {
        Ok((3.0 * f(p1)? - 4.0 * f(p1 - h)? + f(p1 - 2.0 * h)?) / (2.0 * h))
    } else {
        Err(Error::InvalidParameter {
            name: "p1",
            value: p1,
            reason: "finite-difference step crosses the [0, 1] boundary",
        })
    }
}

/// Inputs of the worst sample in a gradient check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckInput {
    pub p1: f64,
    pub y1: u8,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k: f64,
    pub class_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss_kind: LossKind,
    pub sample_count: usize,
    /// Largest relative error among samples not already within `ABS_TOL`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_input: GradCheckInput,
    pub passed: bool,
}

/// Analytic gradient under test: `(spec, p, y, class_weight) -> d loss / d p1`.
pub type AnalyticGrad<'a> = dyn Fn(&LossSpec, ProbPair, OneHotLabel, f64) -> Result<f64> + 'a;

pub fn gradcheck_all(samples_per_loss: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    gradcheck_with(samples_per_loss, seed, &|spec, p, y, w| {
        sample_loss(spec, p, y, w).map(|r| r.dvalue_dp1)
    })
}

/// Sweeps every loss kind over random `p1` in [0.01, 0.99], both labels,
/// gamma in [0.1, 2], alpha and beta in [0, 2] and K in [1, 10], comparing
/// `analytic` with [`finite_diff_grad`].
///
/// The self-adjusting dice loss is checked with the decay factor
/// differentiated through, since only that mode is the true derivative.
pub fn gradcheck_with(samples_per_loss: usize, seed: u64, analytic: &AnalyticGrad<'_>) -> Result<Vec<GradCheckReport>> {
    if samples_per_loss == 0 {
        return Err(Error::Config("samples_per_loss must be at least 1".into()));
    }
    let mut reports = Vec::with_capacity(LossKind::ALL.len());
    for (kind_index, kind) in LossKind::ALL.into_iter().enumerate() {
        let mut rng = Rng::seed_from_u64(crate::rng::mix64(seed ^ kind_index as u64));
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut worst: Option<(f64, f64, GradCheckInput)> = None;
        for i in 0..samples_per_loss {
            let p1 = rng.uniform_range(0.01, 0.99);
            // Alternate labels so both classes are always covered.
            let y = OneHotLabel::from_positive(i % 2 == 0);
            let gamma = rng.uniform_range(0.1, 2.0);
            let alpha = rng.uniform_range(0.0, 2.0);
            let beta = rng.uniform_range(0.0, 2.0);
            let k = rng.uniform_range(1.0, 10.0);
            let n_class = 1 + rng.below(999);
            let spec = LossSpec {
                kind,
                alpha,
                beta,
                gamma,
                k,
                detach_weight: false,
                ..LossSpec::new(kind)
            };
            let class_weight = wce_class_coefficient_with_base(1000, n_class, k, spec.log_base)?;
            let p = ProbPair::from_p1(p1)?;
            let a = analytic(&spec, p, y, class_weight)?;
            let n = finite_diff_grad(&spec, p1, y, FD_STEP, class_weight)?;
            let abs_err = (a - n).abs();
            let scale = a.abs().max(n.abs());
            let rel_err = if abs_err <= ABS_TOL || scale == 0.0 {
                0.0
            } else {
                abs_err / scale
            };
            max_abs = max_abs.max(abs_err);
            max_rel = max_rel.max(rel_err);
            let input = GradCheckInput {
                p1,
                y1: y.class(),
                alpha,
                beta,
                gamma,
                k,
                class_weight,
            };
            let is_worse = match worst {
                None => true,
                Some((r, ab, _)) => rel_err > r || (rel_err == r && abs_err > ab),
            };
            if is_worse {
                worst = Some((rel_err, abs_err, input));
            }
        }
        let (_, _, worst_input) = worst.expect("at least one sample");
        reports.push(GradCheckReport {
            loss_kind: kind,
            sample_count: samples_per_loss,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            worst_input,
            passed: max_rel < REL_TOL,
        });
    }
    Ok(reports)
}

/// Result of comparing a batch gradient with respect to model parameters
/// against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamGradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

pub fn param_gradcheck(
    model: &TrainedModel,
    xs: &[&[f64]],
    ys: &[OneHotLabel],
    loss: &LossSpec,
    class_weights: Option<ClassWeights>,
    h: f64,
    abs_tol: f64,
) -> Result<ParamGradCheck> {
    let (_, analytic) = model.loss_and_grad(xs, ys, loss, class_weights)?;
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for (j, &a) in analytic.iter().enumerate() {
        let eval = |delta: f64| -> Result<f64> {
            let mut p = model.parameters().to_vec();
            p[j] += delta;
            model.with_parameters(p)?.loss_value(xs, ys, loss, class_weights)
        };
        let n = (eval(h)? - eval(-h)?) / (2.0 * h);
        let abs_err = (a - n).abs();
        max_abs = max_abs.max(abs_err);
        if abs_err > abs_tol {
            max_rel = max_rel.max(abs_err / a.abs().max(n.abs()));
        }
    }
    Ok(ParamGradCheck {
        max_rel_error: max_rel,
        max_abs_error: max_abs,
    })
}

fn f1_at(ps: &[ProbPair], golds: &[u8], threshold: f64) -> Result<f64> {
    let preds: Vec<u8> = ps.iter().map(|p| harden(*p, threshold)).collect();
    Ok(metrics_from_counts(&confusion(&preds, golds)?).f1)
}

/// Exhaustive search over every distinct hardening of `ps`: each distinct
/// `p1` as a threshold, a threshold just below the smallest `p1` (all
/// positive), and 0.5. Ties go to the threshold closest to 0.5.
pub fn brute_force_best_threshold_f1(ps: &[ProbPair], golds: &[u8]) -> Result<(f64, f64)> {
    if ps.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: ps.len(),
            right: golds.len(),
        });
    }
    if ps.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut candidates: Vec<f64> = ps.iter().map(ProbPair::p1).collect();
    let min = candidates.iter().copied().fold(f64::INFINITY, f64::min);
    candidates.push(min.next_down());
    candidates.push(DEFAULT_THRESHOLD);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best = (DEFAULT_THRESHOLD, f1_at(ps, golds, DEFAULT_THRESHOLD)?);
    for t in candidates {
        let f1 = f1_at(ps, golds, t)?;
        let closer = (t - DEFAULT_THRESHOLD).abs() < (best.0 - DEFAULT_THRESHOLD).abs();
        if f1 > best.1 || (f1 == best.1 && closer) {
            best = (t, f1);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn finite_diff_examples() {
        let ce = LossSpec::new(LossKind::Ce);
        let g = finite_diff_grad(&ce, 0.5, OneHotLabel::POSITIVE, 1e-6, 1.0).unwrap();
        assert_abs_diff_eq!(g, -2.0, epsilon = 1e-5);

        let dl = LossSpec::new(LossKind::DlSample);
        let g = finite_diff_grad(&dl, 0.0, OneHotLabel::NEGATIVE, 1e-6, 1.0).unwrap();
        assert_abs_diff_eq!(g, 0.0, epsilon = 1e-6);

        assert!(finite_diff_grad(&ce, 1.5, OneHotLabel::POSITIVE, 1e-6, 1.0).is_err());
        assert!(finite_diff_grad(&ce, 0.5, OneHotLabel::POSITIVE, 0.0, 1.0).is_err());
    }

    #[test]
    fn finite_diff_agrees_with_analytic_on_a_grid() {
        for kind in LossKind::ALL {
            let spec = LossSpec::new(kind);
            for p1 in [0.05, 0.3, 0.5, 0.8, 0.95] {
                for y in [OneHotLabel::NEGATIVE, OneHotLabel::POSITIVE] {
                    let a = sample_loss(&spec, ProbPair::from_p1(p1).unwrap(), y, 0.7).unwrap().dvalue_dp1;
                    let n = finite_diff_grad(&spec, p1, y, FD_STEP, 0.7).unwrap();
                    assert!((a - n).abs() <= ABS_TOL.max(REL_TOL * a.abs()), "{kind} {p1} {y:?}: {a} vs {n}");
                }
            }
        }
    }

    #[test]
    fn detached_gradient_matches_frozen_weight_oracle() {
        // With the decay factor frozen at w(p1), the loss is the plain dice
        // ratio in q = w * x, so its derivative in x is a scaled dice gradient.
        let (alpha, gamma) = (1.3, 1.0);
        for p1 in [0.1f64, 0.4, 0.7] {
            for y in [OneHotLabel::NEGATIVE, OneHotLabel::POSITIVE] {
                let w = (1.0 - p1).powf(alpha);
                let frozen = |x: f64| {
                    let q = w * x;
                    1.0 - (2.0 * q * y.y1() + gamma) / (q + y.y1() + gamma)
                };
                let h = 1e-6;
                let n = (frozen(p1 + h) - frozen(p1 - h)) / (2.0 * h);
                let a = crate::loss::dsc_selfadj_loss(ProbPair::from_p1(p1).unwrap(), y, alpha, gamma, true)
                    .unwrap()
                    .dvalue_dp1;
                assert!((a - n).abs() < 1e-8, "{a} vs {n}");
            }
        }
    }

    #[test]
    fn gradcheck_all_passes_and_is_reproducible() {
        let a = gradcheck_all(200, 7).unwrap();
        assert_eq!(a.len(), 7);
        for r in &a {
            assert!(r.passed, "{r:?}");
            assert!(r.max_rel_error < REL_TOL);
        }
        assert_eq!(a, gradcheck_all(200, 7).unwrap());
        assert!(gradcheck_all(0, 7).is_err());
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let reports = gradcheck_with(50, 3, &|spec, p, y, w| {
            sample_loss(spec, p, y, w).map(|r| r.dvalue_dp1 + 0.1)
        })
        .unwrap();
        for r in reports {
            assert!(!r.passed);
            let wi = r.worst_input;
            let spec = LossSpec {
                kind: r.loss_kind,
                alpha: wi.alpha,
                beta: wi.beta,
                gamma: wi.gamma,
                k: wi.k,
                ..LossSpec::new(r.loss_kind)
            };
            let y = OneHotLabel::from_positive(wi.y1 == 1);
            let g = sample_loss(&spec, ProbPair::from_p1(wi.p1).unwrap(), y, wi.class_weight)
                .unwrap()
                .dvalue_dp1;
            // Relative error is measured against the larger magnitude.
            let expected = 0.1 / g.abs().max((g + 0.1).abs());
            assert!((r.max_rel_error - expected).abs() < 1e-4 * expected.max(1.0), "{r:?} vs {expected}");
        }
    }

    fn pps(p1s: &[f64]) -> Vec<ProbPair> {
        p1s.iter().map(|&p| ProbPair::from_p1(p).unwrap()).collect()
    }

    #[test]
    fn best_threshold_examples() {
        let (t, f1) = brute_force_best_threshold_f1(&pps(&[0.99, 0.01, 0.99, 0.01]), &[1, 0, 1, 0]).unwrap();
        assert_eq!((t, f1), (0.5, 1.0));

        // All p1 = 0.4 with 3 positives and 5 negatives: the only non-trivial
        // hardening predicts everything positive, giving 2P / (2P + N).
        let golds = [1, 0, 1, 0, 0, 1, 0, 0];
        let (t, f1) = brute_force_best_threshold_f1(&pps(&[0.4; 8]), &golds).unwrap();
        assert!(t < 0.4);
        assert_abs_diff_eq!(f1, 6.0 / 11.0, epsilon = 1e-15);

        for (p, g) in [(0.3, 1u8), (0.3, 0), (0.8, 1), (0.8, 0)] {
            let (_, f1) = brute_force_best_threshold_f1(&pps(&[p]), &[g]).unwrap();
            assert!(f1 == 0.0 || f1 == 1.0);
            assert_eq!(f1, f64::from(g));
        }
        assert!(brute_force_best_threshold_f1(&[], &[]).is_err());
    }

    #[test]
    fn best_threshold_bounds_default_threshold() {
        let mut rng = Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = 1 + rng.below(20);
            let p1s: Vec<f64> = (0..n).map(|_| (rng.uniform() * 10.0).floor() / 10.0).collect();
            let golds: Vec<u8> = (0..n).map(|_| u8::from(rng.uniform() < 0.4)).collect();
            let ps = pps(&p1s);
            let (_, best) = brute_force_best_threshold_f1(&ps, &golds).unwrap();
            assert!(best >= f1_at(&ps, &golds, 0.5).unwrap());
            // Brute force over every subset cut by a sorted threshold.
            let mut sorted = p1s.clone();
            sorted.sort_by(f64::total_cmp);
            let mut oracle: f64 = 0.0;
            for cut in 0..=n {
                let preds: Vec<u8> = p1s
                    .iter()
                    .map(|&p| u8::from(cut < n && p >= sorted[cut]))
                    .collect();
                oracle = oracle.max(metrics_from_counts(&confusion(&preds, &golds).unwrap()).f1);
            }
            assert_eq!(best, oracle);
        }
    }
}

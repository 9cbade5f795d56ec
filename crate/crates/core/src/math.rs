//! Generalized log/exp functions and the similarity kernels built on them.
//!
//! All kernel math is done in `f64`; the ratio of two tail similarities can
//! span many orders of magnitude, so nothing here is allowed to silently
//! produce a NaN or infinity — out-of-domain inputs return errors instead.

use crate::error::{Result, TrimapError};

/// Width of the window around `t = 1` inside which the generalized functions
/// fall back to plain `ln`/`exp`. The general formulas are 0/0 at `t = 1`.
pub const T_ONE_TOL: f64 = 1e-9;

/// Floor applied to a similarity whenever it appears in a denominator, so
/// coincident embedded points cannot produce an infinite loss ratio.
pub const SIMILARITY_FLOOR: f64 = 1e-12;

/// The two tunables of the loss family: `t` shapes the loss transformation,
/// `t_prime` the tail-heaviness of the embedded-space similarity kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub t: f64,
    pub t_prime: f64,
}

impl KernelParams {
    /// Validates `t >= 0` and `t_prime >= 1`. Values of `t_prime` below 1
    /// would let the similarity clamp to exact zero for nearby points, making
    /// loss ratios undefined, so they are rejected outright.
    pub fn new(t: f64, t_prime: f64) -> Result<Self> {
        if !t.is_finite() || t < 0.0 {
            return Err(TrimapError::Parameter(format!(
                "t must be finite and >= 0, got {t}"
            )));
        }
        if !t_prime.is_finite() || t_prime < 1.0 {
            return Err(TrimapError::Parameter(format!(
                "t_prime must be finite and >= 1, got {t_prime}"
            )));
        }
        Ok(Self { t, t_prime })
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { t: 2.0, t_prime: 2.0 }
    }
}

/// Generalized logarithm: `ln(x)` at `t = 1`, `(x^(1-t) - 1) / (1 - t)`
/// otherwise. Non-decreasing and concave in `x`; bounded above by
/// `1 / (t - 1)` for `t > 1`, which is what makes the triplet loss robust.
pub fn log_t(x: f64, t: f64) -> Result<f64> {
    if !x.is_finite() || !t.is_finite() {
        return Err(TrimapError::Domain(format!(
            "log_t requires finite inputs, got x = {x}, t = {t}"
        )));
    }
    if x <= 0.0 {
        return Err(TrimapError::Domain(format!(
            "log_t is defined for x > 0, got {x}"
        )));
    }
    if t < 0.0 {
        return Err(TrimapError::Domain(format!("log_t requires t >= 0, got {t}")));
    }
    Ok(log_t_raw(x, t))
}

/// `log_t` without input validation, for hot loops that already hold
/// validated values. Fast paths for the common exponents.
#[inline]
pub(crate) fn log_t_raw(x: f64, t: f64) -> f64 {
    if (t - 1.0).abs() < T_ONE_TOL {
        x.ln()
    } else if t == 2.0 {
        1.0 - 1.0 / x
    } else if t == 0.0 {
        x - 1.0
    } else {
        (x.powf(1.0 - t) - 1.0) / (1.0 - t)
    }
}

/// Generalized exponential: `exp(x)` at `t = 1`,
/// `max(0, 1 + (1-t) x)^(1/(1-t))` otherwise. For `t > 1` the function has a
/// pole at `x = 1/(t-1)`; inputs at or beyond it are a domain error because
/// no finite value exists there.
pub fn exp_t(x: f64, t: f64) -> Result<f64> {
    if !x.is_finite() || !t.is_finite() {
        return Err(TrimapError::Domain(format!(
            "exp_t requires finite inputs, got x = {x}, t = {t}"
        )));
    }
    if t < 0.0 {
        return Err(TrimapError::Domain(format!("exp_t requires t >= 0, got {t}")));
    }
    if t > 1.0 + T_ONE_TOL && 1.0 + (1.0 - t) * x <= 0.0 {
        return Err(TrimapError::Domain(format!(
            "exp_t({x}, {t}) lies at or beyond the pole x = 1/(t-1)"
        )));
    }
    Ok(exp_t_raw(x, t))
}

/// `exp_t` without validation. Callers in the similarity kernels only ever
/// pass `x = -d^2 <= 0` with `t >= 1`, where the base `1 + (t-1) d^2 >= 1`
/// and the clamp can never activate.
#[inline]
pub(crate) fn exp_t_raw(x: f64, t: f64) -> f64 {
    if (t - 1.0).abs() < T_ONE_TOL {
        return x.exp();
    }
    let base = 1.0 + (1.0 - t) * x;
    if t == 2.0 {
        debug_assert!(base > 0.0, "exp_t pole reached at x = {x}");
        return 1.0 / base;
    }
    if base <= 0.0 {
        // Clamp region: the function is identically zero for t < 1. For
        // t > 1 the public wrapper rejects these inputs before we get here.
        return if t < 1.0 { 0.0 } else { f64::INFINITY };
    }
    base.powf(1.0 / (1.0 - t))
}

/// Squared Euclidean distance, summed in dimension order for determinism.
#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Embedded-space similarity `exp_{t_prime}(-||y_i - y_j||^2)`.
///
/// Equals 1 iff the points coincide and decreases strictly with distance.
/// `t_prime = 1` gives the Gaussian kernel, `t_prime = 2` the Student-t
/// kernel with one degree of freedom, larger values heavier tails.
pub fn similarity_low(y_i: &[f64], y_j: &[f64], t_prime: f64) -> Result<f64> {
    if y_i.len() != y_j.len() {
        return Err(TrimapError::Shape(format!(
            "similarity_low: vectors have dimensions {} and {}",
            y_i.len(),
            y_j.len()
        )));
    }
    if !t_prime.is_finite() || t_prime < 1.0 {
        return Err(TrimapError::Parameter(format!(
            "t_prime must be finite and >= 1, got {t_prime}"
        )));
    }
    let d2 = squared_distance(y_i, y_j);
    if !d2.is_finite() {
        return Err(TrimapError::NonFinite(
            "similarity_low: non-finite coordinates".into(),
        ));
    }
    // For t_prime >= 1 the base 1 + (t_prime - 1) d^2 >= 1: clamp inactive.
    debug_assert!(1.0 + (t_prime - 1.0) * d2 >= 1.0);
    Ok(exp_t_raw(-d2, t_prime))
}

/// Input-space similarity `exp(-||x_i - x_j||^2 / (sigma_i sigma_j))`.
///
/// The per-point scales adapt the kernel to local density; the product
/// `sigma_i sigma_j` keeps it symmetric in its two points.
pub fn similarity_high(x_i: &[f64], x_j: &[f64], sigma_i: f64, sigma_j: f64) -> Result<f64> {
    if x_i.len() != x_j.len() {
        return Err(TrimapError::Shape(format!(
            "similarity_high: vectors have dimensions {} and {}",
            x_i.len(),
            x_j.len()
        )));
    }
    if sigma_i <= 0.0 || sigma_j <= 0.0 || !sigma_i.is_finite() || !sigma_j.is_finite() {
        return Err(TrimapError::Domain(format!(
            "similarity_high: scales must be positive and finite, got {sigma_i}, {sigma_j}"
        )));
    }
    let d2 = squared_distance(x_i, x_j);
    if !d2.is_finite() {
        return Err(TrimapError::NonFinite(
            "similarity_high: non-finite coordinates".into(),
        ));
    }
    Ok((-d2 / (sigma_i * sigma_j)).exp())
}

/// Satisfaction probability of a triplet: `q_near / (q_near + q_far)`.
/// Approaches 1 as the near similarity dominates the far one.
pub fn triplet_probability(q_near: f64, q_far: f64) -> Result<f64> {
    if !q_near.is_finite() || !q_far.is_finite() || q_near < 0.0 || q_far < 0.0 {
        return Err(TrimapError::Domain(format!(
            "similarities must be finite and non-negative, got {q_near}, {q_far}"
        )));
    }
    let sum = q_near + q_far;
    if sum <= 0.0 {
        return Err(TrimapError::DegeneratePair);
    }
    Ok(q_near / sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn log_t_of_one_is_zero_for_every_t() {
        for t in [0.0, 0.5, 1.0, 2.0, 4.0, 10.0] {
            assert_eq!(log_t(1.0, t).unwrap(), 0.0, "t = {t}");
        }
    }

    #[test]
    fn log_t_approaches_one_over_t_minus_one() {
        // At t = 2 the bound is 1/(t-1) = 1; by x = 1e12 the value is within
        // 1e-9 of it and still strictly below.
        let v = log_t(1e12, 2.0).unwrap();
        assert!(v < 1.0);
        assert!((1.0 - v).abs() < 1e-9);
    }

    #[test]
    fn log_t_hand_value_at_four() {
        // (4^-1 - 1) / (-1) = 0.75
        assert_relative_eq!(log_t(4.0, 2.0).unwrap(), 0.75, max_relative = 1e-15);
    }

    #[test]
    fn log_t_recovers_natural_log_at_t_one() {
        assert_relative_eq!(
            log_t(std::f64::consts::E, 1.0).unwrap(),
            1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn log_t_rejects_nonpositive_and_nonfinite() {
        assert!(log_t(0.0, 2.0).is_err());
        assert!(log_t(-1.0, 2.0).is_err());
        assert!(log_t(f64::NAN, 2.0).is_err());
        assert!(log_t(f64::INFINITY, 2.0).is_err());
        assert!(log_t(1.0, -0.5).is_err());
    }

    #[test]
    fn exp_t_of_zero_is_one() {
        for t in [0.0, 0.5, 1.0, 2.0, 4.0] {
            assert_eq!(exp_t(0.0, t).unwrap(), 1.0, "t = {t}");
        }
    }

    #[test]
    fn exp_t_hand_value_at_minus_one() {
        // [1 + (-1)(-1)]^-1 = 0.5
        assert_relative_eq!(exp_t(-1.0, 2.0).unwrap(), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn exp_t_recovers_exp_at_t_one() {
        assert_relative_eq!(
            exp_t(1.0, 1.0).unwrap(),
            std::f64::consts::E,
            max_relative = 1e-15
        );
    }

    #[test]
    fn exp_t_rejects_pole_region_for_heavy_t() {
        // t = 2: pole at x = 1.
        assert!(exp_t(1.0, 2.0).is_err());
        assert!(exp_t(2.0, 2.0).is_err());
        assert!(exp_t(0.999, 2.0).is_ok());
        // t = 0.5: clamp region is fine, the function is 0 there.
        assert_eq!(exp_t(-3.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn continuity_across_t_equals_one() {
        for x in [0.1f64, 0.5, 1.0, 2.0, 10.0, 100.0] {
            let reference = x.ln();
            for t in [1.0 - 1e-7, 1.0 + 1e-7] {
                assert!(
                    (log_t(x, t).unwrap() - reference).abs() < 1e-5,
                    "log_t({x}, {t})"
                );
            }
        }
        for x in [-5.0f64, -1.0, -0.1, 0.0, 0.5, 2.0] {
            let reference = x.exp();
            for t in [1.0 - 1e-7, 1.0 + 1e-7] {
                assert!(
                    (exp_t(x, t).unwrap() - reference).abs() < 1e-5,
                    "exp_t({x}, {t})"
                );
            }
        }
    }

    #[test]
    fn similarity_low_matches_student_t_at_default_tail() {
        let a = [0.0, 0.0];
        let b = [1.0, 0.0];
        // 1 / (1 + d^2) with d = 1.
        assert_relative_eq!(similarity_low(&a, &b, 2.0).unwrap(), 0.5, max_relative = 1e-15);
        assert_eq!(similarity_low(&a, &a, 2.0).unwrap(), 1.0);
        for tail in [1.0, 2.0, 4.0] {
            let near = similarity_low(&[0.0], &[1.0], tail).unwrap();
            let far = similarity_low(&[0.0], &[2.0], tail).unwrap();
            assert!(near > far, "tail = {tail}");
        }
    }

    #[test]
    fn similarity_low_rejects_dimension_mismatch() {
        assert!(matches!(
            similarity_low(&[0.0, 0.0], &[1.0], 2.0),
            Err(TrimapError::Shape(_))
        ));
    }

    #[test]
    fn similarity_high_basics() {
        let a = [0.0, 0.0];
        assert_eq!(similarity_high(&a, &a, 1.0, 1.0).unwrap(), 1.0);

        // ||x_i - x_j||^2 = sigma_i * sigma_j gives e^-1.
        let b = [2.0, 0.0];
        let p = similarity_high(&a, &b, 2.0, 2.0).unwrap();
        assert_relative_eq!(p, (-1.0f64).exp(), max_relative = 1e-15);

        let c = [0.3, -0.7];
        assert_eq!(
            similarity_high(&a, &c, 1.5, 0.25).unwrap(),
            similarity_high(&c, &a, 0.25, 1.5).unwrap()
        );

        assert!(similarity_high(&a, &b, 0.0, 1.0).is_err());
        assert!(similarity_high(&a, &b, 1.0, -2.0).is_err());
    }

    #[test]
    fn triplet_probability_basics() {
        assert_eq!(triplet_probability(0.3, 0.3).unwrap(), 0.5);
        assert_relative_eq!(triplet_probability(0.9, 0.1).unwrap(), 0.9, max_relative = 1e-15);
        assert_eq!(triplet_probability(0.7, 0.0).unwrap(), 1.0);
        assert!(matches!(
            triplet_probability(0.0, 0.0),
            Err(TrimapError::DegeneratePair)
        ));
        assert!(triplet_probability(-0.1, 0.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        // Monotone and concave in x for every t >= 0: value ordering plus
        // decreasing secant slopes over random x1 < x2 < x3.
        #[test]
        fn log_t_monotone_and_concave(
            t in 0.0f64..5.0,
            a in 0.01f64..100.0,
            gap1 in 0.01f64..50.0,
            gap2 in 0.01f64..50.0,
        ) {
            let (x1, x2, x3) = (a, a + gap1, a + gap1 + gap2);
            let (v1, v2, v3) = (
                log_t(x1, t).unwrap(),
                log_t(x2, t).unwrap(),
                log_t(x3, t).unwrap(),
            );
            prop_assert!(v1 <= v2 && v2 <= v3);
            let slope_left = (v2 - v1) / (x2 - x1);
            let slope_right = (v3 - v2) / (x3 - x2);
            prop_assert!(slope_left >= slope_right - 1e-12);
        }

        // Boundedness: log_t(x) never exceeds 1/(t-1) for t > 1, and stays
        // strictly below while x^(1-t) has not rounded away beneath one ulp.
        #[test]
        fn log_t_bounded_above_for_heavy_t(
            t in 1.01f64..6.0,
            x in 1e-3f64..1e12,
        ) {
            let v = log_t(x, t).unwrap();
            let bound = 1.0 / (t - 1.0);
            prop_assert!(v <= bound);
            if x.powf(1.0 - t) > 1e-15 {
                prop_assert!(v < bound);
            }
        }

        // d/dx exp_t(x) = exp_t(x)^t wherever exp_t(x) > 0, checked against
        // central finite differences.
        #[test]
        fn exp_t_derivative_identity(
            t in 0.0f64..4.0,
            x in -2.0f64..0.5,
        ) {
            // Stay clear of the clamp/pole boundary so the stencil is valid.
            prop_assume!(1.0 + (1.0 - t) * x > 0.05);
            prop_assume!(1.0 + (1.0 - t) * (x + 1e-5) > 0.02);
            prop_assume!(1.0 + (1.0 - t) * (x - 1e-5) > 0.02);
            let h = 1e-5;
            let numeric = (exp_t(x + h, t).unwrap() - exp_t(x - h, t).unwrap()) / (2.0 * h);
            let analytic = exp_t(x, t).unwrap().powf(t);
            prop_assert!(
                (numeric - analytic).abs() <= 1e-6 * analytic.abs().max(1e-3),
                "t={t} x={x} numeric={numeric} analytic={analytic}"
            );
        }

        // The clamp in exp_t(-u^2) can never activate for t_prime >= 1: the
        // base stays at or above 1 and the similarity lands in [0, 1]. (It
        // can round to exactly 0 for near-Gaussian tails at large distance,
        // which is underflow, not the clamp.)
        #[test]
        fn similarity_clamp_never_activates(
            t_prime in 1.0f64..6.0,
            u in -100.0f64..100.0,
        ) {
            prop_assert!(1.0 + (t_prime - 1.0) * u * u >= 1.0);
            let q = similarity_low(&[0.0], &[u], t_prime).unwrap();
            prop_assert!(q.is_finite() && (0.0..=1.0).contains(&q));
        }
    }
}

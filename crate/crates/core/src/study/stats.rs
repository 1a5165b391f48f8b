//! Small hypothesis-test helpers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1); 0 for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-tailed paired t test of `H1: mean(first - second) > 0`.
pub fn paired_t_greater(first: &[f64], second: &[f64]) -> TestResult {
    let diffs: Vec<f64> = first.iter().zip(second).map(|(a, b)| a - b).collect();
    let n = diffs.len();
    let m = mean(&diffs);
    let s = sd(&diffs);
    if n < 2 || s == 0.0 {
        let (statistic, p_value) = if m > 0.0 {
            (f64::INFINITY, 0.0)
        } else if m < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        };
        return TestResult { statistic, p_value };
    }
    let t = m / (s / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom");
    TestResult {
        statistic: t,
        p_value: 1.0 - dist.cdf(t),
    }
}

/// Two-tailed test that two estimates agree given their standard errors.
pub fn estimate_equality(a: f64, se_a: f64, b: f64, se_b: f64) -> TestResult {
    let denom = (se_a * se_a + se_b * se_b).sqrt();
    let z = (a - b) / denom;
    if !z.is_finite() {
        // Infinite SEs carry no evidence against equality.
        let p_value = if denom.is_infinite() || a == b {
            1.0
        } else {
            0.0
        };
        return TestResult {
            statistic: if denom.is_infinite() { 0.0 } else { z },
            p_value,
        };
    }
    let normal = Normal::standard();
    TestResult {
        statistic: z,
        p_value: 2.0 * (1.0 - normal.cdf(z.abs())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_t_against_hand_values() {
        // diffs 1, 2, 3: mean 2, sd 1, t = 2 * sqrt(3)
        let r = paired_t_greater(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]);
        assert!((r.statistic - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        // t_2 upper tail at 3.4641: 0.03709...
        assert!((r.p_value - 0.037_089).abs() < 1e-5, "{}", r.p_value);
        assert_eq!(paired_t_greater(&[1.0, 1.0], &[1.0, 1.0]).p_value, 0.5);
    }

    #[test]
    fn equality_test() {
        let r = estimate_equality(1.0, 0.5, 1.0, 0.5);
        assert_eq!(r.p_value, 1.0);
        let r = estimate_equality(1.96, 1.0, 0.0, 0.0);
        assert!((r.p_value - 0.05).abs() < 1e-3);
        assert_eq!(estimate_equality(5.0, f64::INFINITY, 0.0, 1.0).p_value, 1.0);
    }
}

//! Paired one-sided Student t-test on top of a hand-written regularized
//! incomplete beta function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub t: f64,
    pub df: usize,
    /// `P(T >= t)` under the null of zero mean difference.
    pub p_value: f64,
    pub significant: bool,
    /// Zero variance of the differences; `p` is 0.5, 0 or 1 by convention.
    pub degenerate: bool,
}

/// Lanczos approximation (g = 7, 9 terms) of `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta, modified Lentz evaluation.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// `I_x(a, b)` for `a, b > 0`, `x` in `[0, 1]`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t distribution with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 1.0;
    }
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Upper tail `P(T >= t)`, evaluated without cancellation for large `t`.
fn upper_tail(t: f64, df: f64) -> f64 {
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
    if t > 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Paired one-sided t-test of `H1: mean(a - b) > 0`.
pub fn paired_t_one_sided(a: &[f64], b: &[f64]) -> Result<SignificanceResult> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Stats(format!(
            "paired t-test needs at least 2 pairs, got {n}"
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let df = n - 1;

    // Differences equal up to rounding count as zero variance.
    let scale = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if sd <= 1e-14 * scale.max(f64::MIN_POSITIVE) || sd == 0.0 {
        let (t, p) = if mean.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) || mean == 0.0 {
            (0.0, 0.5)
        } else if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 1.0)
        };
        return Ok(SignificanceResult {
            t,
            df,
            p_value: p,
            significant: p < ALPHA,
            degenerate: true,
        });
    }

    let t = mean / (sd / (n as f64).sqrt());
    let p = upper_tail(t, df as f64).clamp(0.0, 1.0);
    Ok(SignificanceResult {
        t,
        df,
        p_value: p,
        significant: p < ALPHA,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(ln_gamma(10.0), 362880f64.ln(), epsilon = 1e-11);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x, I_x(a, 1) = x^a, I_x(1, b) = 1 - (1-x)^b.
        for &x in &[0.01, 0.3, 0.5, 0.77, 0.99] {
            assert_abs_diff_eq!(regularized_incomplete_beta(1.0, 1.0, x), x, epsilon = 1e-12);
            assert_abs_diff_eq!(
                regularized_incomplete_beta(3.5, 1.0, x),
                x.powf(3.5),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                regularized_incomplete_beta(1.0, 2.5, x),
                1.0 - (1.0 - x).powf(2.5),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn t_cdf_df1_is_cauchy() {
        for &t in &[-5.0, -1.0, 0.0, 0.3, 2.0, 40.0] {
            let cauchy = 0.5 + f64::atan(t) / std::f64::consts::PI;
            assert_abs_diff_eq!(student_t_cdf(t, 1.0), cauchy, epsilon = 1e-12);
        }
    }

    #[test]
    fn df2_example() {
        let r = paired_t_one_sided(&[0.5, 1.5, 1.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.df, 2);
        assert_abs_diff_eq!(r.t, 3.4641016151377544, epsilon = 1e-9);
        let closed = 1.0 - (0.5 + r.t / (2.0 * 2f64.sqrt() * (1.0 + r.t * r.t / 2.0).sqrt()));
        assert_abs_diff_eq!(r.p_value, closed, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_value, 0.0371, epsilon = 1e-4);
        assert!(r.significant);
    }

    #[test]
    fn degenerate_cases() {
        let a = [0.3, 0.5, 0.7];
        let r = paired_t_one_sided(&a, &a).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 0.5);
        assert!(!r.significant);

        let b = [0.2, 0.4, 0.6];
        let up = paired_t_one_sided(&a, &b).unwrap();
        assert!(up.degenerate);
        assert_eq!(up.p_value, 0.0);
        let down = paired_t_one_sided(&b, &a).unwrap();
        assert_eq!(down.p_value, 1.0);
    }

    #[test]
    fn input_errors() {
        assert!(paired_t_one_sided(&[1.0], &[0.0]).is_err());
        assert!(paired_t_one_sided(&[1.0, 2.0], &[0.0]).is_err());
    }
}

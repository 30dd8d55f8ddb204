//! Descriptive statistics, Pearson correlation and the paired t-test, with
//! the Student t CDF they need.
//!
//! The t CDF goes through the regularized incomplete beta function,
//! `F(t; ν) = 1 - ½ I_{ν/(ν+t²)}(ν/2, ½)` for `t > 0`, evaluated with a
//! modified Lentz continued fraction. All tests are two-sided and all standard
//! deviations use the `n - 1` denominator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Insufficient("mean of an empty list".into()));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Mean and sample standard deviation (`n - 1` denominator).
pub fn mean_std(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::Insufficient(format!(
            "standard deviation needs at least 2 values, got {}",
            xs.len()
        )));
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((m, (ss / (xs.len() - 1) as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Product-moment correlation with a two-sided p-value from
/// `t = r·sqrt((n-2)/(1-r²))` on `n - 2` degrees of freedom.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch(format!(
            "pearson inputs have lengths {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::Insufficient(format!("pearson needs at least 3 pairs, got {n}")));
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ConstantSeries("first series has zero variance".into()));
    }
    if syy == 0.0 {
        return Err(Error::ConstantSeries("second series has zero variance".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let dof = (n - 2) as f64;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        t_two_sided_p(r * (dof / ((1.0 - r) * (1.0 + r))).sqrt(), dof)
    };
    Ok(Correlation { r, p_value, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    /// `±inf` when the differences have zero variance and nonzero mean.
    pub t_statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub mean_diff: f64,
}

/// Paired two-sided t-test on `d = a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired samples have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Insufficient(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean_diff, sd) = mean_std(&d)?;
    let dof = n - 1;
    let (t_statistic, p_value) = if sd == 0.0 {
        if mean_diff == 0.0 {
            (0.0, 1.0)
        } else {
            (mean_diff.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean_diff / (sd / (n as f64).sqrt());
        (t, t_two_sided_p(t, dof as f64))
    };
    Ok(TTestResult {
        t_statistic,
        dof,
        p_value,
        mean_diff,
    })
}

/// CDF of Student's t distribution with `dof` degrees of freedom.
pub fn t_cdf(t: f64, dof: f64) -> f64 {
    assert!(dof > 0.0, "degrees of freedom must be positive");
    if t.is_nan() {
        return f64::NAN;
    }
    if t == 0.0 {
        return 0.5;
    }
    let tail = 0.5 * t_two_sided_p(t, dof);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// `P(|T| >= |t|)`.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = dof / (dof + t * t);
    regularized_incomplete_beta(x, 0.5 * dof, 0.5).clamp(0.0, 1.0)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
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

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, with reflection below ½).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `I_x(a, b)` for `a, b > 0` and `x` in `[0, 1]`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
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
        if (del - 1.0).abs() <= EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mean_std_hand_values() {
        assert_eq!(mean_std(&[1.0, 1.0, 1.0]).unwrap(), (1.0, 0.0));
        let (m, s) = mean_std(&[0.0, 2.0]).unwrap();
        assert_eq!(m, 1.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        // Σ(x-5)² = 32 over n-1 = 7
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert!((s - 2.138).abs() < 5e-4);
        assert!(mean_std(&[3.0]).is_err());
    }

    #[test]
    fn pearson_exact_lines() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let up: Vec<f64> = xs.iter().map(|x| 3.0 * x + 2.0).collect();
        let down: Vec<f64> = xs.iter().map(|x| -x).collect();
        let c = pearson(&xs, &up).unwrap();
        assert_eq!(c.r, 1.0);
        assert_eq!(c.p_value, 0.0);
        assert_eq!(pearson(&xs, &down).unwrap().r, -1.0);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ConstantSeries(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Insufficient(_))));
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn paired_conventions() {
        let a = [0.5, 0.6, 0.7];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!((r.t_statistic, r.p_value), (0.0, 1.0));

        let r = paired_t_test(&[2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(r.t_statistic, f64::INFINITY);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.dof, 3);

        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn t_cdf_closed_forms() {
        assert_eq!(t_cdf(0.0, 1.0), 0.5);
        assert_eq!(t_cdf(0.0, 17.0), 0.5);
        assert!((t_cdf(1.0, 1.0) - 0.75).abs() < 1e-12);
        for t in [-7.5f64, -1.3, 0.2, 2.0, 40.0] {
            let cauchy = 0.5 + t.atan() / std::f64::consts::PI;
            assert!((t_cdf(t, 1.0) - cauchy).abs() < 1e-10, "t={t}");
        }
        // dof = 2: F(t) = ½ + t / (2 sqrt(2 + t²))
        for t in [-3.0f64, -0.4, 0.9, 5.0] {
            let closed = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert!((t_cdf(t, 2.0) - closed).abs() < 1e-10, "t={t}");
        }
        assert!((t_cdf(2.228, 10.0) - 0.975).abs() < 1e-4);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..25 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12 * fact.ln().max(1.0), "n={n}");
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn t_cdf_symmetry(t in -50.0f64..50.0, dof in 1u32..500) {
            let dof = f64::from(dof);
            prop_assert!((t_cdf(-t, dof) + t_cdf(t, dof) - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn t_cdf_increasing(t in -20.0f64..20.0, step in 0.01f64..2.0, dof in 1u32..200) {
            let dof = f64::from(dof);
            // the upper tail saturates at 1.0 in double precision, so strictness
            // is checked where the value is below one half
            let (lo, hi) = (t_cdf(t, dof), t_cdf(t + step, dof));
            prop_assert!(hi >= lo);
            if t + step <= 0.0 {
                prop_assert!(hi > lo);
            }
        }

        #[test]
        fn pearson_affine_invariance(
            pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(base) = pearson(&xs, &ys) {
                let xs2: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
                let moved = pearson(&xs2, &ys).unwrap();
                prop_assert!((base.r - moved.r).abs() <= 1e-12);
            }
        }

        #[test]
        fn paired_t_antisymmetric(pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..20)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let ab = paired_t_test(&a, &b).unwrap();
            let ba = paired_t_test(&b, &a).unwrap();
            prop_assert_eq!(ab.t_statistic, -ba.t_statistic);
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
        }
    }
}

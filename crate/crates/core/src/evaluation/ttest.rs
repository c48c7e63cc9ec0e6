use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    pub mean_difference: f64,
    pub significant: bool,
}

/// Two-sided paired Student's t-test on `a[i] - b[i]`.
///
/// Differences whose spread is within `1e-12` (relative to the mean, at least
/// absolute) of zero are degenerate and rejected.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::Config(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Config("paired t-test needs at least two pairs".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite score".into()));
    }
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        return Err(Error::Degenerate("paired differences have zero variance".into()));
    }
    let t = mean / (sd / n.sqrt());
    let df = n - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTestResult {
        t,
        p,
        df,
        mean_difference: mean,
        significant: p < alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-sided p by Simpson integration of the t density over `[0, |t|]`.
    fn p_oracle(t: f64, df: f64) -> f64 {
        let ln_c = statrs::function::gamma::ln_gamma((df + 1.0) / 2.0)
            - statrs::function::gamma::ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let f = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let n = 200_000;
        let h = t.abs() / n as f64;
        let mut s = f(0.0) + f(t.abs());
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        2.0 * (0.5 - s * h / 3.0)
    }

    #[test]
    fn direct_formula_oracle() {
        let d = [0.5, -0.3, 0.8, 0.1];
        let r = paired_t_test(&d, &[0.0; 4], 0.05).unwrap();
        // independent values computed in double precision with Simpson's rule
        assert!((r.t - 1.148912529307606).abs() < 1e-12);
        assert!((r.p - 0.3338869861085618).abs() < 1e-9);
        assert!((r.p - p_oracle(r.t, 3.0)).abs() < 1e-9);
        assert!(!r.significant);
        assert_eq!(r.df, 3.0);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let a = [0.3, 0.31, 0.29, 0.33];
        let b: Vec<f64> = a.iter().map(|x| x + 1e-16).collect();
        assert!(matches!(paired_t_test(&a, &b, 0.05), Err(Error::Degenerate(_))));
        assert!(matches!(paired_t_test(&a, &a, 0.05), Err(Error::Degenerate(_))));
    }

    #[test]
    fn constant_shift_is_significant() {
        let b = [0.2, 0.4, 0.1, 0.3];
        let noise = [1e-6, -2e-6, 1.5e-6, -0.5e-6];
        let a: Vec<f64> = b.iter().zip(noise).map(|(x, e)| x + 1.0 + e).collect();
        let r = paired_t_test(&a, &b, 0.05).unwrap();
        assert!(r.t > 1e4);
        assert!(r.p < 1e-9);
        assert!(r.significant);
    }

    #[test]
    fn antisymmetric_in_arguments() {
        let a = [0.31, 0.35, 0.29, 0.4];
        let b = [0.30, 0.31, 0.30, 0.33];
        let x = paired_t_test(&a, &b, 0.05).unwrap();
        let y = paired_t_test(&b, &a, 0.05).unwrap();
        assert_eq!(x.t, -y.t);
        assert_eq!(x.p, y.p);
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(paired_t_test(&[1.0], &[0.0], 0.05), Err(Error::Config(_))));
        assert!(matches!(
            paired_t_test(&[1.0, 2.0], &[0.0], 0.05),
            Err(Error::Config(_))
        ));
    }
}

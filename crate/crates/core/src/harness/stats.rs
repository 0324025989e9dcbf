//! Wilson intervals and least-squares scaling fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // Clamp so the interval always brackets p despite rounding at 0 and 1.
    (
        (centre - half).max(0.0).min(p),
        (centre + half).min(1.0).max(p),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScalingFit {
    /// Regressor names, intercept excluded.
    pub regressors: Vec<String>,
    pub intercept: f64,
    /// One coefficient per regressor.
    pub coefficients: Vec<f64>,
    /// Coefficient of the first regressor.
    pub slope: f64,
    pub residuals: Vec<f64>,
    /// `max |residual| / observed`.
    pub max_relative_residual: f64,
    pub r_squared: f64,
}

/// OLS of `y` on `columns` with an intercept. `None` when underdetermined.
pub fn ols_fit(names: &[&str], columns: &[Vec<f64>], y: &[f64]) -> Option<ScalingFit> {
    let rows = y.len();
    let p = columns.len() + 1;
    if rows < p || columns.iter().any(|c| c.len() != rows) {
        return None;
    }
    let x = DMatrix::from_fn(rows, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let beta = x.clone().svd(true, true).solve(&yv, 1e-12).ok()?;
    if beta.iter().any(|b| !b.is_finite()) {
        return None;
    }
    let fitted = &x * &beta;
    let residuals: Vec<f64> = (0..rows).map(|i| y[i] - fitted[i]).collect();
    let mean = y.iter().sum::<f64>() / rows as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let max_relative_residual = residuals
        .iter()
        .zip(y)
        .map(|(r, v)| if *v == 0.0 { r.abs() } else { (r / v).abs() })
        .fold(0.0, f64::max);
    Some(ScalingFit {
        regressors: names.iter().map(|s| s.to_string()).collect(),
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        slope: beta[1],
        residuals,
        max_relative_residual,
        r_squared: if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            1.0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_and_shrinks() {
        let (lo, hi) = wilson_interval(50, 100, Z95);
        assert!(lo < 0.5 && hi > 0.5);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        let (lo, hi) = wilson_interval(30, 30, Z95);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.88 && lo < 0.9);
        let (lo, _) = wilson_interval(200, 200, Z95);
        assert!(lo > 0.98);
        let (lo, hi) = wilson_interval(0, 10, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi < 0.31);
    }

    #[test]
    fn exact_line_recovered() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 2.0).collect();
        let fit = ols_fit(&["x"], &[x], &y).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-10);
        assert!((fit.intercept - 2.0).abs() < 1e-10);
        assert!(fit.max_relative_residual < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_regressors() {
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let b: Vec<f64> = a.iter().map(|v| v * v).collect();
        let y: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(a, b)| 1.0 + 2.0 * a + 0.5 * b)
            .collect();
        let fit = ols_fit(&["a", "b"], &[a, b], &y).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn underdetermined_is_none() {
        assert!(ols_fit(&["x"], &[vec![1.0]], &[2.0]).is_none());
    }
}

//! Point-prediction and interval-quality metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, IntervalBatch, Result};

/// Default grid of nominal coverage levels for calibration curves.
pub const DEFAULT_ALPHA_GRID: [f64; 7] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];

fn check_len(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::EmptyBatch(what));
    }
    if a != b {
        return Err(Error::Shape {
            op: what,
            lhs: (a, 1),
            rhs: (b, 1),
        });
    }
    Ok(())
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_len("rmse", y.len(), y_hat.len())?;
    let mse = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

/// Fraction of targets inside `[y_hat - dl, y_hat + du]`, endpoints included.
pub fn coverage(y: &[f64], y_hat: &[f64], intervals: &IntervalBatch) -> Result<f64> {
    check_len("coverage", y.len(), y_hat.len())?;
    check_len("coverage", y.len(), intervals.len())?;
    let covered = (0..y.len())
        .filter(|&i| y_hat[i] - intervals.delta_low[i] <= y[i] && y[i] <= y_hat[i] + intervals.delta_up[i])
        .count();
    Ok(covered as f64 / y.len() as f64)
}

/// `|alpha - coverage|`.
pub fn calibration_error(y: &[f64], y_hat: &[f64], intervals: &IntervalBatch, alpha: f64) -> Result<f64> {
    Ok((alpha - coverage(y, y_hat, intervals)?).abs())
}

/// Mean interval width.
pub fn average_width(intervals: &IntervalBatch) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::EmptyBatch("average_width"));
    }
    Ok(intervals.widths().iter().sum::<f64>() / intervals.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub observed: f64,
    pub avg_width: f64,
}

/// Anything that can produce a mean and an interval at a requested level.
pub trait IntervalPredictor {
    /// `(y_hat, intervals)` for every row of `x` at coverage `alpha`.
    fn predict_at(&mut self, x: &crate::Matrix, alpha: f64) -> Result<(Vec<f64>, IntervalBatch)>;
}

impl<F> IntervalPredictor for F
where
    F: FnMut(&crate::Matrix, f64) -> Result<(Vec<f64>, IntervalBatch)>,
{
    fn predict_at(&mut self, x: &crate::Matrix, alpha: f64) -> Result<(Vec<f64>, IntervalBatch)> {
        self(x, alpha)
    }
}

/// Observed coverage and mean width at each level of `alphas`.
///
/// `width_scale` converts widths back to the original target units.
pub fn calibration_curve(
    predictor: &mut dyn IntervalPredictor,
    x: &crate::Matrix,
    y: &[f64],
    alphas: &[f64],
    width_scale: f64,
) -> Result<Vec<CurvePoint>> {
    if alphas.windows(2).any(|w| w[1] <= w[0]) || alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::config("alpha grid must be strictly increasing inside (0, 1)"));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let (y_hat, iv) = predictor.predict_at(x, alpha)?;
            Ok(CurvePoint {
                alpha,
                observed: coverage(y, &y_hat, &iv)?,
                avg_width: average_width(&iv)? * width_scale,
            })
        })
        .collect()
}

/// Summary of one method on one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: String,
    pub alpha: f64,
    /// RMSE in original target units.
    pub rmse: f64,
    pub ce: f64,
    pub coverage: f64,
    /// Average width in original target units.
    pub aw: f64,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<CurvePoint>,
    /// Fraction of samples with the lower quantile above the upper one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossing_rate: Option<f64>,
    /// Fraction of quantile offsets clamped at zero (quantile baseline).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_rate: Option<f64>,
}

impl CalibrationReport {
    /// Builds a report from predictions in scaled units; `scale` maps a
    /// scaled difference back to target units.
    pub fn evaluate(
        method: &str,
        alpha: f64,
        y: &[f64],
        y_hat: &[f64],
        intervals: &IntervalBatch,
        scale: f64,
    ) -> Result<Self> {
        let cov = coverage(y, y_hat, intervals)?;
        Ok(CalibrationReport {
            method: method.to_string(),
            alpha,
            rmse: rmse(y, y_hat)? * scale,
            ce: (alpha - cov).abs(),
            coverage: cov,
            aw: average_width(intervals)? * scale,
            n_samples: y.len(),
            curve: Vec::new(),
            crossing_rate: None,
            clamp_rate: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub const CSV_HEADER: &'static str = "method,alpha,rmse,ce,coverage,aw,n_samples";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.method, self.alpha, self.rmse, self.ce, self.coverage, self.aw, self.n_samples
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

/// Curve CSV: `alpha` followed by `<method>_observed,<method>_avg_width`
/// for each method. Every curve must share the same alpha grid.
pub fn curves_to_csv(curves: &[(String, Vec<CurvePoint>)]) -> Result<String> {
    let Some((_, first)) = curves.first() else {
        return Err(Error::config("no curves to write"));
    };
    for (name, c) in curves {
        if c.len() != first.len() || c.iter().zip(first).any(|(a, b)| a.alpha != b.alpha) {
            return Err(Error::config(format!("curve '{name}' uses a different alpha grid")));
        }
    }
    let mut out = String::from("alpha");
    for (name, _) in curves {
        let _ = write!(out, ",{name}_observed,{name}_avg_width");
    }
    out.push('\n');
    for (i, p) in first.iter().enumerate() {
        let _ = write!(out, "{}", p.alpha);
        for (_, c) in curves {
            let _ = write!(out, ",{},{}", c[i].observed, c[i].avg_width);
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = rmse(&[3.0, -4.0], &[0.0, 0.0]).unwrap();
        assert!((r - 12.5_f64.sqrt()).abs() < 1e-15);
        assert!((r - 3.5355).abs() < 1e-4);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rmse_permutation_invariant() {
        let y = [1.0, 5.0, -2.0, 0.5];
        let p = [0.0, 4.0, -1.0, 1.5];
        let yp = [0.5, -2.0, 5.0, 1.0];
        let pp = [1.5, -1.0, 4.0, 0.0];
        assert_eq!(rmse(&y, &p).unwrap(), rmse(&yp, &pp).unwrap());
    }

    fn unit(n: usize) -> IntervalBatch {
        IntervalBatch::symmetric(vec![1.0; n])
    }

    #[test]
    fn calibration_error_examples() {
        let y_hat = vec![0.0; 10];
        let nine: Vec<f64> = (0..10).map(|i| if i < 9 { 0.5 } else { 3.0 }).collect();
        assert_eq!(calibration_error(&nine, &y_hat, &unit(10), 0.9).unwrap(), 0.0);
        let five: Vec<f64> = (0..10).map(|i| if i < 5 { 0.0 } else { 3.0 }).collect();
        assert!((calibration_error(&five, &y_hat, &unit(10), 0.95).unwrap() - 0.45).abs() < 1e-15);
        assert!(calibration_error(&[], &[], &IntervalBatch::default(), 0.9).is_err());
    }

    #[test]
    fn endpoints_count_as_covered() {
        let iv = IntervalBatch::new(vec![1.0, 0.0], vec![0.0, 2.0]);
        assert_eq!(coverage(&[-1.0, 2.0], &[0.0, 0.0], &iv).unwrap(), 1.0);
    }

    #[test]
    fn average_width_examples() {
        assert_eq!(average_width(&IntervalBatch::symmetric(vec![1.0; 3])).unwrap(), 2.0);
        let iv = IntervalBatch::new(vec![0.5, 1.0], vec![0.5, 2.0]);
        assert_eq!(average_width(&iv).unwrap(), 2.0);
        assert!((average_width(&iv.scaled(3.0)).unwrap() - 6.0).abs() < 1e-15);
        assert!(average_width(&IntervalBatch::default()).is_err());
    }

    #[test]
    fn zero_width_curve_has_zero_coverage() {
        let x = crate::Matrix::zeros((4, 1));
        let y = [0.1, 0.2, 0.3, 0.4];
        let mut zero = |_: &crate::Matrix, _: f64| Ok((vec![0.0; 4], IntervalBatch::symmetric(vec![0.0; 4])));
        let curve = calibration_curve(&mut zero, &x, &y, &DEFAULT_ALPHA_GRID, 1.0).unwrap();
        assert!(curve.iter().all(|p| p.observed == 0.0 && p.avg_width == 0.0));
    }

    #[test]
    fn bad_grid_rejected() {
        let x = crate::Matrix::zeros((1, 1));
        let mut f = |_: &crate::Matrix, _: f64| Ok((vec![0.0], IntervalBatch::symmetric(vec![0.0])));
        assert!(calibration_curve(&mut f, &x, &[0.0], &[0.9, 0.5], 1.0).is_err());
        assert!(calibration_curve(&mut f, &x, &[0.0], &[0.5, 1.0], 1.0).is_err());
    }

    #[test]
    fn curve_csv_shape() {
        let pts = vec![
            CurvePoint {
                alpha: 0.5,
                observed: 0.4,
                avg_width: 1.0,
            },
            CurvePoint {
                alpha: 0.9,
                observed: 0.8,
                avg_width: 2.0,
            },
        ];
        let csv = curves_to_csv(&[("a".into(), pts.clone()), ("b".into(), pts)]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "alpha,a_observed,a_avg_width,b_observed,b_avg_width");
        assert!(lines.iter().all(|l| l.split(',').count() == 5));
    }

    #[test]
    fn report_json_round_trip() {
        let iv = IntervalBatch::symmetric(vec![0.1, 0.2]);
        let r = CalibrationReport::evaluate("x", 0.9, &[0.0, 1.0], &[0.05, 0.9], &iv, 10.0).unwrap();
        assert_eq!(CalibrationReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        assert_eq!(r.coverage, 1.0);
        assert!((r.aw - 3.0).abs() < 1e-12);
    }
}

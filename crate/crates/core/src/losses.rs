//! Training objectives.
//!
//! Every loss is recorded on a [`Tape`] so it can be differentiated. Inputs
//! are n×1 column nodes. All terms are reduced with a batch mean so penalty
//! weights do not depend on batch size.
//!
//! The composite losses take the quantities owned by the *other* network as
//! plain slices. They enter the tape as constants, which is how the
//! alternating freeze is enforced: the interval loss never sends gradient to
//! the mean estimator and vice versa.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::{Error, Result};

/// Default sigmoid sharpness for the smoothed coverage indicator, for
/// targets scaled to [0, 1]. Interval widths on that scale are around 0.1,
/// so margin products near a boundary are ~1e-3; smaller values leave the
/// sigmoid far from saturated and bias intervals towards over-coverage.
pub const DEFAULT_ETA: f64 = 1000.0;

/// Upper clamp on achieved coverage before converting it to a z-score.
pub const ALPHA_V_CAP: f64 = 0.9999;
/// Lower clamp on achieved coverage before converting it to a z-score.
pub const ALPHA_V_FLOOR: f64 = 1e-3;

/// Weights of the interval-estimator objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiLossConfig {
    pub alpha: f64,
    pub beta_n: f64,
    pub beta_s: f64,
    pub eta: f64,
}

impl Default for PiLossConfig {
    fn default() -> Self {
        PiLossConfig {
            alpha: 0.9,
            beta_n: 0.1,
            beta_s: 0.3,
            eta: DEFAULT_ETA,
        }
    }
}

impl PiLossConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        PiLossConfig {
            alpha,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.beta_n >= 0.0 && self.beta_s >= 0.0) {
            return Err(Error::config("beta_n and beta_s must be nonnegative"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config("eta must be positive and finite"));
        }
        Ok(())
    }
}

/// Weights of the mean-estimator matching objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchLossConfig {
    pub lambda_m: f64,
    pub lambda_u: f64,
    pub lambda_l: f64,
    pub tau_u: f64,
    pub tau_l: f64,
}

impl MatchLossConfig {
    /// Quantile levels `(1 ± alpha) / 2` for a target coverage.
    pub fn taus(alpha: f64) -> (f64, f64) {
        ((1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0)
    }

    pub fn sigma_fit(alpha: f64) -> Self {
        let (tau_l, tau_u) = Self::taus(alpha);
        MatchLossConfig {
            lambda_m: 0.5,
            lambda_u: 0.0,
            lambda_l: 0.0,
            tau_u,
            tau_l,
        }
    }

    pub fn iqr_fit(alpha: f64) -> Self {
        let (tau_l, tau_u) = Self::taus(alpha);
        MatchLossConfig {
            lambda_m: 0.4,
            lambda_u: 0.3,
            lambda_l: 0.3,
            tau_u,
            tau_l,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_m >= 0.0 && self.lambda_u >= 0.0 && self.lambda_l >= 0.0) {
            return Err(Error::config("lambda weights must be nonnegative"));
        }
        let unit = |t: f64| t > 0.0 && t < 1.0;
        if !(unit(self.tau_l) && unit(self.tau_u) && self.tau_l < self.tau_u) {
            return Err(Error::config(format!(
                "need 0 < tau_l ({}) < tau_u ({}) < 1",
                self.tau_l, self.tau_u
            )));
        }
        Ok(())
    }
}

fn rows(t: &Tape, v: Var) -> usize {
    t.shape(v).0
}

fn nonempty(t: &Tape, v: Var, what: &'static str) -> Result<()> {
    if rows(t, v) == 0 {
        Err(Error::EmptyBatch(what))
    } else {
        Ok(())
    }
}

/// `sigmoid(eta * (y - lo) * (up - y))` per sample.
pub fn smoothed_indicator(t: &Tape, y: Var, lo: Var, up: Var, eta: f64) -> Result<Var> {
    let above = t.sub(y, lo)?;
    let below = t.sub(up, y)?;
    let product = t.mul(above, below)?;
    Ok(t.sigmoid(t.scale(product, eta)))
}

/// `|alpha - mean(smoothed indicator)|` for intervals `[y_hat - dl, y_hat + du]`.
pub fn emce_loss(t: &Tape, y: Var, y_hat: Var, delta_low: Var, delta_up: Var, alpha: f64, eta: f64) -> Result<Var> {
    nonempty(t, y, "emce_loss")?;
    let lo = t.sub(y_hat, delta_low)?;
    let up = t.add(y_hat, delta_up)?;
    let ind = smoothed_indicator(t, y, lo, up, eta)?;
    let coverage = t.mean(ind);
    Ok(t.abs(t.offset(t.neg(coverage), alpha)))
}

/// `mean | 0.5 * w - |r| |`.
pub fn noise_loss(t: &Tape, residuals: Var, widths: Var) -> Result<Var> {
    nonempty(t, residuals, "noise_loss")?;
    let half = t.scale(widths, 0.5);
    let gap = t.sub(half, t.abs(residuals))?;
    Ok(t.mean(t.abs(gap)))
}

/// `mean( |up - y| + |y - lo| )`.
pub fn sharpness_loss(t: &Tape, y: Var, lo: Var, up: Var) -> Result<Var> {
    nonempty(t, y, "sharpness_loss")?;
    let a = t.abs(t.sub(up, y)?);
    let b = t.abs(t.sub(y, lo)?);
    Ok(t.mean(t.add(a, b)?))
}

/// Node handles for the interval objective and its components.
#[derive(Debug, Clone, Copy)]
pub struct PiLoss {
    pub total: Var,
    pub emce: Var,
    pub noise: Var,
    pub sharp: Var,
}

/// Interval-estimator objective `emce + beta_n * noise + beta_s * sharp`.
///
/// `y` and `y_hat` enter as constants; only the width nodes carry gradient.
pub fn pi_loss(
    t: &Tape,
    y: &[f64],
    y_hat: &[f64],
    delta_low: Var,
    delta_up: Var,
    cfg: &PiLossConfig,
) -> Result<PiLoss> {
    if y.len() != y_hat.len() || rows(t, delta_low) != y.len() {
        return Err(Error::Shape {
            op: "pi_loss",
            lhs: (y.len(), 1),
            rhs: t.shape(delta_low),
        });
    }
    let yv = t.column_constant(y);
    let mv = t.column_constant(y_hat);
    let residuals: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| a - b).collect();
    let rv = t.column_constant(&residuals);

    let emce = emce_loss(t, yv, mv, delta_low, delta_up, cfg.alpha, cfg.eta)?;
    let widths = t.add(delta_low, delta_up)?;
    let noise = noise_loss(t, rv, widths)?;
    let lo = t.sub(mv, delta_low)?;
    let up = t.add(mv, delta_up)?;
    let sharp = sharpness_loss(t, yv, lo, up)?;

    let mut total = emce;
    if cfg.beta_n != 0.0 {
        total = t.add(total, t.scale(noise, cfg.beta_n))?;
    }
    if cfg.beta_s != 0.0 {
        total = t.add(total, t.scale(sharp, cfg.beta_s))?;
    }
    Ok(PiLoss {
        total,
        emce,
        noise,
        sharp,
    })
}

/// Gaussian negative log-likelihood up to a constant:
/// `mean( (y - y_hat)^2 / (2 sigma^2) + 0.5 * log sigma^2 )`.
///
/// Can be negative when the predicted variance is below one.
pub fn heteroscedastic_loss(t: &Tape, y: Var, y_hat: Var, log_sigma_sq: Var) -> Result<Var> {
    nonempty(t, y, "heteroscedastic_loss")?;
    let sq = t.square(t.sub(y, y_hat)?);
    let precision = t.exp(t.neg(log_sigma_sq));
    let fit = t.scale(t.mul(sq, precision)?, 0.5);
    let reg = t.scale(log_sigma_sq, 0.5);
    Ok(t.mean(t.add(fit, reg)?))
}

/// Quantile (pinball) loss at level `tau`, batch mean.
pub fn pinball_loss(t: &Tape, y: Var, y_hat: Var, tau: f64) -> Result<Var> {
    nonempty(t, y, "pinball_loss")?;
    let diff = t.sub(y, y_hat)?;
    let under = t.scale(t.relu(diff), tau);
    let over = t.scale(t.relu(t.neg(diff)), 1.0 - tau);
    Ok(t.mean(t.add(under, over)?))
}

/// Mean squared error.
pub fn mse_loss(t: &Tape, y: Var, y_hat: Var) -> Result<Var> {
    nonempty(t, y, "mse_loss")?;
    Ok(t.mean(t.square(t.sub(y, y_hat)?)))
}

/// Heteroscedastic loss plus `lambda_m * mean | sigma - gamma * w / 2 |`.
///
/// `widths` come from the frozen interval estimator.
pub fn sigma_fit_loss(
    t: &Tape,
    y: Var,
    y_hat: Var,
    log_sigma_sq: Var,
    widths: &[f64],
    lambda_m: f64,
    gamma: f64,
) -> Result<Var> {
    if !(gamma > 0.0) {
        return Err(Error::config(format!("gamma must be positive, got {gamma}")));
    }
    let nll = heteroscedastic_loss(t, y, y_hat, log_sigma_sq)?;
    if lambda_m == 0.0 {
        return Ok(nll);
    }
    let sigma = t.exp(t.scale(log_sigma_sq, 0.5));
    let target: Vec<f64> = widths.iter().map(|w| gamma * w / 2.0).collect();
    let gap = t.sub(sigma, t.column_constant(&target))?;
    let matching = t.mean(t.abs(gap));
    t.add(nll, t.scale(matching, lambda_m))
}

/// MSE plus pinball losses on the quantile heads plus
/// `lambda_m * mean | (q_high - q_low) - w |`.
pub fn iqr_fit_loss(
    t: &Tape,
    y: Var,
    y_hat: Var,
    q_low: Var,
    q_high: Var,
    widths: &[f64],
    cfg: &MatchLossConfig,
) -> Result<Var> {
    let mut total = mse_loss(t, y, y_hat)?;
    if cfg.lambda_u != 0.0 {
        let upper = pinball_loss(t, y, q_high, cfg.tau_u)?;
        total = t.add(total, t.scale(upper, cfg.lambda_u))?;
    }
    if cfg.lambda_l != 0.0 {
        let lower = pinball_loss(t, y, q_low, cfg.tau_l)?;
        total = t.add(total, t.scale(lower, cfg.lambda_l))?;
    }
    if cfg.lambda_m != 0.0 {
        let iqr = t.sub(q_high, q_low)?;
        let gap = t.sub(iqr, t.column_constant(widths))?;
        total = t.add(total, t.scale(t.mean(t.abs(gap)), cfg.lambda_m))?;
    }
    Ok(total)
}

/// Which coverage indicator [`emce_value`] uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Indicator {
    Smoothed {
        eta: f64,
    },
    /// Exact comparison, endpoints inclusive.
    Hard,
}

/// Calibration term evaluated without a tape.
pub fn emce_value(
    y: &[f64],
    y_hat: &[f64],
    delta_low: &[f64],
    delta_up: &[f64],
    alpha: f64,
    indicator: Indicator,
) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyBatch("emce_value"));
    }
    let n = y.len();
    match indicator {
        Indicator::Hard => {
            let covered = (0..n)
                .filter(|&i| y_hat[i] - delta_low[i] <= y[i] && y[i] <= y_hat[i] + delta_up[i])
                .count();
            Ok((alpha - covered as f64 / n as f64).abs())
        }
        Indicator::Smoothed { eta } => {
            let t = Tape::new();
            let v = |s: &[f64]| t.column_constant(s);
            let out = emce_loss(&t, v(y), v(y_hat), v(delta_low), v(delta_up), alpha, eta)?;
            Ok(t.scalar(out))
        }
    }
}

/// Error function.
///
/// Uses the everywhere-positive series `erf(x) = 2/sqrt(pi) * exp(-x^2) *
/// sum 2^n x^(2n+1) / (1*3*...*(2n+1))` below 3 and a continued fraction for
/// `erfc` above, both accurate to near machine precision.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= 2.0 * x2 / (2.0 * k + 1.0);
            sum += term;
            if term <= sum * 1e-17 {
                break;
            }
        }
        2.0 / std::f64::consts::PI.sqrt() * (-x2).exp() * sum
    } else {
        1.0 - erfc_cf(x)
    }
}

/// `erfc(x)` for x >= 3 by the Laplace continued fraction, modified Lentz.
fn erfc_cf(x: f64) -> f64 {
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Two-sided z-score for coverage `alpha`: the standard-normal quantile at
/// `(1 + alpha) / 2`, found by bisection on [`normal_cdf`].
pub fn z_score(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha {alpha} outside (0, 1)")));
    }
    let target = (1.0 + alpha) / 2.0;
    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `1 / z_score(alpha_v)` with `alpha_v` clamped to
/// [`ALPHA_V_FLOOR`, `ALPHA_V_CAP`] so the scale stays finite.
pub fn matching_scale(alpha_v: f64) -> f64 {
    let a = alpha_v.clamp(ALPHA_V_FLOOR, ALPHA_V_CAP);
    1.0 / z_score(a).expect("clamped alpha lies in (0, 1)")
}

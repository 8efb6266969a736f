#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use umatch::autodiff::{finite_difference_check, FdReport, ParamSet, Tape, Var};
use umatch::losses::{self, MatchLossConfig, PiLossConfig};
use umatch::Result;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
pub const BATCH: usize = 8;

/// Sigmoid sharpness for gradient checks. Large values saturate the
/// indicator so most analytic and numeric gradients are both ~0, which
/// proves nothing; a small value keeps every sample on the steep part.
pub const FD_ETA: f64 = 4.0;

/// The eight training objectives under gradient check.
pub const LOSS_OPS: [&str; 8] = [
    "emce",
    "noise",
    "sharpness",
    "pi",
    "heteroscedastic",
    "pinball",
    "sigma_fit",
    "iqr_fit",
];

fn normal(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn column(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
}

/// Random 8-sample batch. `y` sits within about one width of `y_hat` so the
/// coverage indicator is neither all-in nor all-out.
pub struct Batch {
    pub y: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub delta_low: Vec<f64>,
    pub delta_up: Vec<f64>,
    pub log_sigma_sq: Vec<f64>,
    pub q_low: Vec<f64>,
    pub q_high: Vec<f64>,
    pub widths: Vec<f64>,
}

impl Batch {
    pub fn random(rng: &mut impl Rng) -> Self {
        let y_hat = normal(rng, BATCH);
        let delta_low = uniform(rng, BATCH, 0.2, 1.2);
        let delta_up = uniform(rng, BATCH, 0.2, 1.2);
        let y: Vec<f64> = y_hat
            .iter()
            .zip(uniform(rng, BATCH, -1.5, 1.5))
            .map(|(m, u)| m + u)
            .collect();
        let q_low = y_hat
            .iter()
            .zip(uniform(rng, BATCH, 0.1, 1.0))
            .map(|(m, d)| m - d)
            .collect();
        let q_high = y_hat
            .iter()
            .zip(uniform(rng, BATCH, 0.1, 1.0))
            .map(|(m, d)| m + d)
            .collect();
        Batch {
            y,
            y_hat,
            delta_low,
            delta_up,
            log_sigma_sq: uniform(rng, BATCH, -1.0, 1.0),
            q_low,
            q_high,
            widths: uniform(rng, BATCH, 0.2, 2.0),
        }
    }
}

/// Gradient check of one named loss on one batch. Every quantity the loss
/// differentiates with respect to is bound as a parameter.
pub fn check_loss(name: &str, b: &Batch) -> Result<FdReport> {
    let mut params = ParamSet::new();
    let pi = PiLossConfig {
        eta: FD_ETA,
        ..PiLossConfig::with_alpha(0.9)
    };
    let iqr = MatchLossConfig::iqr_fit(0.9);
    let y = b.y.clone();
    let y_hat = b.y_hat.clone();
    let widths = b.widths.clone();
    let c = |t: &Tape, v: &[f64]| t.column_constant(v);
    match name {
        "emce" => {
            params.push("y_hat", column(&b.y_hat));
            params.push("delta_low", column(&b.delta_low));
            params.push("delta_up", column(&b.delta_up));
            run(&mut params, |t, p| {
                losses::emce_loss(t, c(t, &y), p[0], p[1], p[2], 0.9, FD_ETA)
            })
        }
        "noise" => {
            let residuals: Vec<f64> = b.y.iter().zip(&b.y_hat).map(|(a, m)| a - m).collect();
            params.push("residuals", column(&residuals));
            params.push("widths", column(&b.widths));
            run(&mut params, |t, p| losses::noise_loss(t, p[0], p[1]))
        }
        "sharpness" => {
            params.push("lo", column(&b.q_low));
            params.push("up", column(&b.q_high));
            run(&mut params, |t, p| losses::sharpness_loss(t, c(t, &y), p[0], p[1]))
        }
        "pi" => {
            params.push("delta_low", column(&b.delta_low));
            params.push("delta_up", column(&b.delta_up));
            run(&mut params, |t, p| {
                Ok(losses::pi_loss(t, &y, &y_hat, p[0], p[1], &pi)?.total)
            })
        }
        "heteroscedastic" => {
            params.push("y_hat", column(&b.y_hat));
            params.push("log_sigma_sq", column(&b.log_sigma_sq));
            run(&mut params, |t, p| {
                losses::heteroscedastic_loss(t, c(t, &y), p[0], p[1])
            })
        }
        "pinball" => {
            params.push("y_hat", column(&b.y_hat));
            run(&mut params, |t, p| losses::pinball_loss(t, c(t, &y), p[0], 0.95))
        }
        "sigma_fit" => {
            params.push("y_hat", column(&b.y_hat));
            params.push("log_sigma_sq", column(&b.log_sigma_sq));
            let gamma = losses::matching_scale(0.9);
            run(&mut params, |t, p| {
                losses::sigma_fit_loss(t, c(t, &y), p[0], p[1], &widths, 0.5, gamma)
            })
        }
        "iqr_fit" => {
            params.push("y_hat", column(&b.y_hat));
            params.push("q_low", column(&b.q_low));
            params.push("q_high", column(&b.q_high));
            run(&mut params, |t, p| {
                losses::iqr_fit_loss(t, c(t, &y), p[0], p[1], p[2], &widths, &iqr)
            })
        }
        "mse" => {
            params.push("y_hat", column(&b.y_hat));
            run(&mut params, |t, p| losses::mse_loss(t, c(t, &y), p[0]))
        }
        "smoothed_indicator" => {
            let lo: Vec<f64> = b.y_hat.iter().zip(&b.delta_low).map(|(m, d)| m - d).collect();
            let up: Vec<f64> = b.y_hat.iter().zip(&b.delta_up).map(|(m, d)| m + d).collect();
            params.push("lo", column(&lo));
            params.push("up", column(&up));
            run(&mut params, |t, p| {
                Ok(t.sum(losses::smoothed_indicator(t, c(t, &y), p[0], p[1], FD_ETA)?))
            })
        }
        other => panic!("unknown loss '{other}'"),
    }
}

fn run<F>(params: &mut ParamSet, f: F) -> Result<FdReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    finite_difference_check(f, params, FD_STEP, FD_TOL)
}

/// A batch whose every sample lies at least `MIN_MARGIN` from the nearer
/// interval endpoint (inside or outside), with widths of at least 0.1 as on
/// targets rescaled to [0, 1].
pub struct MarginBatch {
    pub y: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub delta_low: Vec<f64>,
    pub delta_up: Vec<f64>,
}

pub const MIN_MARGIN: f64 = 0.01;

impl MarginBatch {
    pub fn random(rng: &mut impl Rng, n: usize) -> Self {
        let mut b = MarginBatch {
            y: Vec::with_capacity(n),
            y_hat: Vec::with_capacity(n),
            delta_low: Vec::with_capacity(n),
            delta_up: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let m: f64 = rng.random_range(0.0..1.0);
            let dl: f64 = rng.random_range(0.05..0.5);
            let du: f64 = rng.random_range(0.05..0.5);
            let (lo, up) = (m - dl, m + du);
            let y = loop {
                let y: f64 = rng.random_range(lo - 0.5..up + 0.5);
                if (y - lo).abs() >= MIN_MARGIN && (up - y).abs() >= MIN_MARGIN {
                    break y;
                }
            };
            b.y.push(y);
            b.y_hat.push(m);
            b.delta_low.push(dl);
            b.delta_up.push(du);
        }
        b
    }
}

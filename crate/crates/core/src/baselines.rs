//! Comparator estimators trained without an interval network: a
//! heteroscedastic network, a quantile regressor, and MC dropout.
//!
//! All three share the alternating trainer's initialization, shuffling
//! streams, optimizer, and stopping rule, so a heteroscedastic baseline is
//! step-for-step the mean phase of sigma_fit with matching switched off.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SplitDataset;
use crate::losses::{self, MatchLossConfig};
use crate::metrics::{self, CalibrationReport};
use crate::networks::{MeanEstimator, MeanMode, DEFAULT_HIDDEN};
use crate::training::{self, Adam, MeanObjective, TraceRecord, TrainSchedule};
use crate::{rng, Error, IntervalBatch, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Hnn,
    Quantile,
    McDropout,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Hnn => "hnn",
            BaselineKind::Quantile => "quantile",
            BaselineKind::McDropout => "mc_dropout",
        }
    }

    fn mode(self) -> MeanMode {
        match self {
            BaselineKind::Hnn => MeanMode::SigmaFit,
            BaselineKind::Quantile => MeanMode::IqrFit,
            BaselineKind::McDropout => MeanMode::Plain,
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hnn" => Ok(BaselineKind::Hnn),
            "quantile" => Ok(BaselineKind::Quantile),
            "mc_dropout" => Ok(BaselineKind::McDropout),
            other => Err(Error::config(format!("unknown baseline '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    /// Used by MC dropout only.
    pub dropout_prob: f64,
    pub mc_samples: usize,
    pub alpha: f64,
    pub hidden_dims: Vec<usize>,
    /// Pinball weights of the quantile baseline.
    pub lambda_u: f64,
    pub lambda_l: f64,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, alpha: f64) -> Self {
        BaselineConfig {
            kind,
            dropout_prob: 0.5,
            mc_samples: 100,
            alpha,
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
            lambda_u: 0.3,
            lambda_l: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.kind == BaselineKind::McDropout {
            if !(self.dropout_prob > 0.0 && self.dropout_prob < 1.0) {
                return Err(Error::config(format!(
                    "mc_dropout needs dropout probability in (0, 1), got {}",
                    self.dropout_prob
                )));
            }
            if self.mc_samples < 2 {
                return Err(Error::config("mc_dropout needs at least 2 samples"));
            }
        }
        Ok(())
    }

    fn dropout(&self) -> f64 {
        match self.kind {
            BaselineKind::McDropout => self.dropout_prob,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub config: BaselineConfig,
    pub mean: MeanEstimator,
    /// Seeds the per-pass dropout masks at prediction time.
    pub seed: u64,
}

/// Mean, interval, and (quantile only) the fraction of samples whose
/// offsets had to be clamped at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePrediction {
    pub y_hat: Vec<f64>,
    pub intervals: IntervalBatch,
    pub clamp_rate: Option<f64>,
}

/// `y_hat ± z(alpha) * sigma`.
pub fn gaussian_intervals(sigma: &[f64], alpha: f64) -> Result<IntervalBatch> {
    let z = losses::z_score(alpha)?;
    Ok(IntervalBatch::symmetric(sigma.iter().map(|s| z * s).collect()))
}

/// `[q_low, q_high]` as offsets around `y_hat`, clamped at zero.
pub fn quantile_intervals(y_hat: &[f64], q_low: &[f64], q_high: &[f64]) -> (IntervalBatch, f64) {
    let mut clamped = 0usize;
    let mut clamp = |v: f64| {
        if v < 0.0 {
            clamped += 1;
            0.0
        } else {
            v
        }
    };
    let dl: Vec<f64> = y_hat.iter().zip(q_low).map(|(m, q)| clamp(m - q)).collect();
    let du: Vec<f64> = y_hat.iter().zip(q_high).map(|(m, q)| clamp(q - m)).collect();
    let rate = if y_hat.is_empty() {
        0.0
    } else {
        clamped as f64 / (2 * y_hat.len()) as f64
    };
    (IntervalBatch::new(dl, du), rate)
}

/// Fraction of samples with `q_low > q_high`.
pub fn crossing_rate(q_low: &[f64], q_high: &[f64]) -> f64 {
    if q_low.is_empty() {
        return 0.0;
    }
    q_low.iter().zip(q_high).filter(|(l, h)| l > h).count() as f64 / q_low.len() as f64
}

/// Sample mean and (n - 1) standard deviation per column of stacked passes.
fn mean_std(passes: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let k = passes.len() as f64;
    let n = passes[0].len();
    let mut mean = vec![0.0; n];
    for p in passes {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / k;
        }
    }
    let mut var = vec![0.0; n];
    for p in passes {
        for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
            *s += (v - m) * (v - m) / (k - 1.0);
        }
    }
    (mean, var.into_iter().map(f64::sqrt).collect())
}

impl BaselineModel {
    /// Intervals at coverage `alpha`. For the quantile baseline `alpha` only
    /// labels the output: its quantile levels were fixed at training time.
    pub fn predict(&self, x: &Matrix, alpha: f64) -> Result<BaselinePrediction> {
        match self.config.kind {
            BaselineKind::Hnn => {
                let p = self.mean.predict_mean(x, None)?;
                let sigma = p.sigma.expect("hnn predicts sigma");
                Ok(BaselinePrediction {
                    intervals: gaussian_intervals(&sigma, alpha)?,
                    y_hat: p.y_hat,
                    clamp_rate: None,
                })
            }
            BaselineKind::Quantile => {
                let p = self.mean.predict_mean(x, None)?;
                let (q_low, q_high) = (p.q_low.expect("quantile heads"), p.q_high.expect("quantile heads"));
                let (intervals, rate) = quantile_intervals(&p.y_hat, &q_low, &q_high);
                Ok(BaselinePrediction {
                    y_hat: p.y_hat,
                    intervals,
                    clamp_rate: Some(rate),
                })
            }
            BaselineKind::McDropout => {
                if self.config.mc_samples < 2 {
                    return Err(Error::config("mc_dropout needs at least 2 samples"));
                }
                let passes = (0..self.config.mc_samples)
                    .map(|k| {
                        let mut r = rng::stream(self.seed, &[rng::TAG_MC_PASS, k as u64]);
                        Ok(self.mean.predict_mean(x, Some(&mut r))?.y_hat)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (y_hat, std) = mean_std(&passes);
                Ok(BaselinePrediction {
                    intervals: gaussian_intervals(&std, alpha)?,
                    y_hat,
                    clamp_rate: None,
                })
            }
        }
    }
}

/// See [`BaselineModel::predict`].
pub fn baseline_intervals(model: &BaselineModel, x: &Matrix, alpha: f64) -> Result<BaselinePrediction> {
    model.predict(x, alpha)
}

#[derive(Debug, Clone)]
pub struct BaselineTrained {
    pub model: BaselineModel,
    /// One record per round of `n_m` epochs; interval-only columns are NaN.
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
}

impl BaselineTrained {
    pub fn report(&self, data: &crate::data::Dataset) -> Result<CalibrationReport> {
        let p = self.model.predict(&data.features, self.model.config.alpha)?;
        CalibrationReport::evaluate(
            self.model.config.kind.name(),
            self.model.config.alpha,
            &data.targets,
            &p.y_hat,
            &p.intervals,
            data.target_transform.scale,
        )
    }
}

/// Trains in rounds of `schedule.n_m` epochs, stopping on the same rule
/// as the alternating trainer. MC dropout optimizes MSE only, so it is
/// stopped on test RMSE alone, measured with dropout off; only its last
/// trace record carries Monte Carlo interval metrics.
pub fn train_baseline(
    config: &BaselineConfig,
    data: &SplitDataset,
    schedule: &TrainSchedule,
) -> Result<BaselineTrained> {
    config.validate()?;
    schedule.validate()?;
    let (train, test) = (&data.train, &data.test);
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyBatch("train_baseline"));
    }
    let seed = schedule.seed;
    let mut mean = MeanEstimator::new(
        train.dim(),
        &config.hidden_dims,
        config.kind.mode(),
        config.dropout(),
        rng::derive_seed(seed, &[rng::TAG_MEAN_INIT]),
    )?;
    let mut quantile_cfg = MatchLossConfig::iqr_fit(config.alpha);
    quantile_cfg.lambda_m = 0.0;
    quantile_cfg.lambda_u = config.lambda_u;
    quantile_cfg.lambda_l = config.lambda_l;
    let widths = vec![0.0; train.len()];
    let objective = match config.kind {
        BaselineKind::Hnn => MeanObjective::SigmaFit {
            widths: &widths,
            lambda_m: 0.0,
            gamma: 1.0,
        },
        BaselineKind::Quantile => MeanObjective::IqrFit {
            widths: &widths,
            cfg: &quantile_cfg,
        },
        BaselineKind::McDropout => MeanObjective::Mse,
    };
    let mut adam = Adam::new(schedule.learning_rate);
    let mut trace = Vec::new();
    let mut converged = false;
    let scale = train.target_transform.scale;
    for round in 1..=schedule.max_outer_iters {
        let mut loss = f64::NAN;
        for epoch in 0..schedule.n_m {
            let order = rng::stream(seed, &[rng::TAG_MEAN_EPOCH, round as u64, epoch as u64]);
            let mut drop_rng = rng::stream(seed, &[rng::TAG_DROPOUT, round as u64, epoch as u64]);
            let dropout: Option<&mut dyn rand::RngCore> = match config.kind {
                BaselineKind::McDropout => Some(&mut drop_rng),
                _ => None,
            };
            loss = training::mean_epoch(
                &mut mean,
                &mut adam,
                &train.features,
                &train.targets,
                objective,
                schedule.batch_size,
                order,
                dropout,
            )?;
        }
        if config.kind == BaselineKind::McDropout {
            // Hundreds of stochastic passes per round would dominate the run,
            // so rounds are monitored with the deterministic (scaled) network.
            let y_hat = mean.predict_mean(&test.features, None)?.y_hat;
            let rmse = metrics::rmse(&test.targets, &y_hat)?;
            trace.push(TraceRecord {
                outer: round,
                mean_loss: loss,
                pi_loss: f64::NAN,
                emce: f64::NAN,
                noise: f64::NAN,
                sharp: f64::NAN,
                alpha_v_before: f64::NAN,
                alpha_v: f64::NAN,
                gamma: f64::NAN,
                test_rmse: rmse * scale,
                test_ce: f64::NAN,
                test_coverage: f64::NAN,
                test_aw: f64::NAN,
                monitor: rmse,
            });
            if training::convergence_check(&trace, schedule.patience, schedule.min_delta) {
                converged = true;
                break;
            }
            continue;
        }
        let model = BaselineModel {
            config: config.clone(),
            mean: mean.clone(),
            seed,
        };
        let tp = model.predict(&train.features, config.alpha)?;
        let train_cov = metrics::coverage(&train.targets, &tp.y_hat, &tp.intervals)?;
        let p = model.predict(&test.features, config.alpha)?;
        let report = CalibrationReport::evaluate("", config.alpha, &test.targets, &p.y_hat, &p.intervals, scale)?;
        trace.push(TraceRecord {
            outer: round,
            mean_loss: loss,
            pi_loss: f64::NAN,
            emce: f64::NAN,
            noise: f64::NAN,
            sharp: f64::NAN,
            alpha_v_before: train_cov,
            alpha_v: train_cov,
            gamma: f64::NAN,
            test_rmse: report.rmse,
            test_ce: report.ce,
            test_coverage: report.coverage,
            test_aw: report.aw,
            monitor: report.rmse / scale + report.ce,
        });
        if training::convergence_check(&trace, schedule.patience, schedule.min_delta) {
            converged = true;
            break;
        }
    }
    let model = BaselineModel {
        config: config.clone(),
        mean,
        seed,
    };
    if config.kind == BaselineKind::McDropout {
        let tp = model.predict(&train.features, config.alpha)?;
        let train_cov = metrics::coverage(&train.targets, &tp.y_hat, &tp.intervals)?;
        let p = model.predict(&test.features, config.alpha)?;
        let report = CalibrationReport::evaluate("", config.alpha, &test.targets, &p.y_hat, &p.intervals, scale)?;
        if let Some(last) = trace.last_mut() {
            last.alpha_v_before = train_cov;
            last.alpha_v = train_cov;
            last.test_ce = report.ce;
            last.test_coverage = report.coverage;
            last.test_aw = report.aw;
        }
    }
    Ok(BaselineTrained {
        model,
        trace,
        converged,
    })
}

//! The alternating schedule: fit the mean estimator with the interval
//! estimator frozen, then the interval estimator with the mean frozen, then
//! refresh the achieved train coverage and the matching scale. Repeat until
//! the monitored test quantity stops improving.

use std::fmt::Write as _;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tape};
use crate::data::{Dataset, SplitDataset};
use crate::losses::{self, MatchLossConfig, PiLossConfig};
use crate::metrics::{self, CalibrationReport};
use crate::networks::{IntervalEstimator, MeanEstimator, MeanMode};
use crate::{rng, Error, IntervalBatch, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    /// Mean-estimator epochs per outer iteration.
    pub n_m: usize,
    /// Interval-estimator epochs per outer iteration.
    pub n_c: usize,
    pub max_outer_iters: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            n_m: 10,
            n_c: 10,
            max_outer_iters: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            patience: 5,
            min_delta: 1e-4,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_m", self.n_m),
            ("n_c", self.n_c),
            ("max_outer_iters", self.max_outer_iters),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::config("min_delta must be nonnegative"));
        }
        Ok(())
    }
}

/// Adam with bias correction. Moment buffers are keyed by parameter
/// position, so one instance must stay with one parameter set.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    steps: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Frozen parameters are skipped.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if let Some(p) = params.iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::NonFinite(format!("gradient of {}", p.name)));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Matrix::zeros(p.value.dim())).collect();
            self.v = self.m.clone();
        }
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            ndarray::Zip::from(&mut p.value)
                .and(m)
                .and(v)
                .and(&p.grad)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
        params.zero_grad();
        Ok(())
    }
}

/// One step of Adam on `params` using their current gradients.
pub fn optimizer_step(params: &mut ParamSet, state: &mut Adam) -> Result<()> {
    state.step(params)
}

/// One row per completed outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub outer: usize,
    /// Mean batch loss over the last mean-estimator epoch.
    pub mean_loss: f64,
    /// Mean batch interval loss and its components over the last interval epoch.
    pub pi_loss: f64,
    pub emce: f64,
    pub noise: f64,
    pub sharp: f64,
    /// Train coverage of the interval estimator before and after its phase.
    pub alpha_v_before: f64,
    pub alpha_v: f64,
    pub gamma: f64,
    /// Test metrics; RMSE and width in original target units.
    pub test_rmse: f64,
    pub test_ce: f64,
    pub test_coverage: f64,
    pub test_aw: f64,
    /// Stopping-rule quantity: test RMSE in rescaled units plus CE.
    pub monitor: f64,
}

pub const TRACE_HEADER: &str = "outer,mean_loss,pi_loss,emce,noise,sharp,alpha_v_before,alpha_v,gamma,test_rmse,test_ce,test_coverage,test_aw,monitor";

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.outer,
            self.mean_loss,
            self.pi_loss,
            self.emce,
            self.noise,
            self.sharp,
            self.alpha_v_before,
            self.alpha_v,
            self.gamma,
            self.test_rmse,
            self.test_ce,
            self.test_coverage,
            self.test_aw,
            self.monitor
        )
    }
}

pub fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    /// Completed outer iterations.
    pub outer_iter: usize,
    pub alpha_v: f64,
    pub gamma: f64,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
}

impl TrainerState {
    fn new(alpha: f64) -> Self {
        TrainerState {
            outer_iter: 0,
            alpha_v: alpha,
            gamma: losses::matching_scale(alpha),
            trace: Vec::new(),
            converged: false,
        }
    }

    fn set_alpha_v(&mut self, alpha_v: f64) {
        self.alpha_v = alpha_v;
        self.gamma = losses::matching_scale(alpha_v);
    }
}

/// Train coverage of `[y_hat - dl, y_hat + du]` with the hard indicator.
pub fn achieved_calibration(mean: &MeanEstimator, interval: &IntervalEstimator, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyBatch("achieved_calibration"));
    }
    let pred = mean.predict_mean(&data.features, None)?;
    let iv = interval.predict_interval(&data.features)?;
    metrics::coverage(&data.targets, &pred.y_hat, &iv)
}

/// True when the best monitor value of the last `patience` records fails to
/// beat the best earlier value by at least `min_delta`.
pub fn convergence_check(trace: &[TraceRecord], patience: usize, min_delta: f64) -> bool {
    let values: Vec<f64> = trace.iter().map(|r| r.monitor).collect();
    plateaued(&values, patience, min_delta)
}

pub(crate) fn plateaued(values: &[f64], patience: usize, min_delta: f64) -> bool {
    if patience == 0 || values.len() <= patience {
        return false;
    }
    let split = values.len() - patience;
    let best_before = values[..split].iter().copied().fold(f64::INFINITY, f64::min);
    let recent_best = values[split..].iter().copied().fold(f64::INFINITY, f64::min);
    recent_best > best_before - min_delta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Mean,
    Interval,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Mean => "mean",
            Phase::Interval => "interval",
        }
    }
}

/// Phase boundary notification for observers (e.g. freeze checks).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseEvent {
    pub outer: usize,
    pub phase: Phase,
    pub starting: bool,
}

pub type PhaseObserver<'a> = dyn FnMut(&PhaseEvent, &MeanEstimator, &IntervalEstimator) + 'a;

/// What the mean estimator minimizes in one epoch.
#[derive(Debug, Clone, Copy)]
pub(crate) enum MeanObjective<'a> {
    SigmaFit {
        widths: &'a [f64],
        lambda_m: f64,
        gamma: f64,
    },
    IqrFit {
        widths: &'a [f64],
        cfg: &'a MatchLossConfig,
    },
    Mse,
}

fn shuffled(n: usize, mut order_rng: impl RngCore) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut order_rng);
    idx
}

fn gather(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// One epoch of mini-batch updates on the mean estimator; returns the mean
/// batch loss, or `Err(NonFinite)` as soon as a batch loss is not finite.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mean_epoch(
    model: &mut MeanEstimator,
    adam: &mut Adam,
    x: &Matrix,
    y: &[f64],
    objective: MeanObjective<'_>,
    batch_size: usize,
    order_rng: impl RngCore,
    mut dropout: Option<&mut dyn RngCore>,
) -> Result<f64> {
    let order = shuffled(y.len(), order_rng);
    let mut total = 0.0;
    let mut batches = 0;
    for idx in order.chunks(batch_size) {
        let tape = Tape::new();
        let xb = tape.constant(x.select(Axis(0), idx));
        let yb = tape.column_constant(&gather(y, idx));
        let heads = model.forward(&tape, xb, true, dropout.as_mut().map(|r| &mut **r as &mut dyn RngCore))?;
        let loss = match objective {
            MeanObjective::SigmaFit {
                widths,
                lambda_m,
                gamma,
            } => {
                let log_s2 = heads
                    .log_sigma_sq
                    .ok_or_else(|| Error::config("sigma objective needs a log-variance head"))?;
                losses::sigma_fit_loss(&tape, yb, heads.y_hat, log_s2, &gather(widths, idx), lambda_m, gamma)?
            }
            MeanObjective::IqrFit { widths, cfg } => {
                let (Some(q_low), Some(q_high)) = (heads.q_low, heads.q_high) else {
                    return Err(Error::config("quantile objective needs quantile heads"));
                };
                losses::iqr_fit_loss(&tape, yb, heads.y_hat, q_low, q_high, &gather(widths, idx), cfg)?
            }
            MeanObjective::Mse => losses::mse_loss(&tape, yb, heads.y_hat)?,
        };
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite("mean-estimator loss".into()));
        }
        let grads = tape.backward(loss)?;
        model.params_mut().zero_grad();
        grads.accumulate(model.params_mut());
        adam.step(model.params_mut())?;
        total += value;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Component means over one interval epoch.
#[derive(Debug, Clone, Copy, Default)]
struct PiEpoch {
    total: f64,
    emce: f64,
    noise: f64,
    sharp: f64,
}

#[allow(clippy::too_many_arguments)]
fn interval_epoch(
    model: &mut IntervalEstimator,
    adam: &mut Adam,
    x: &Matrix,
    y: &[f64],
    y_hat: &[f64],
    cfg: &PiLossConfig,
    batch_size: usize,
    order_rng: impl RngCore,
) -> Result<PiEpoch> {
    let order = shuffled(y.len(), order_rng);
    let mut acc = PiEpoch::default();
    let mut batches = 0.0;
    for idx in order.chunks(batch_size) {
        let tape = Tape::new();
        let xb = tape.constant(x.select(Axis(0), idx));
        let (dl, du) = model.forward(&tape, xb, true)?;
        let parts = losses::pi_loss(&tape, &gather(y, idx), &gather(y_hat, idx), dl, du, cfg)?;
        let value = tape.scalar(parts.total);
        if !value.is_finite() {
            return Err(Error::NonFinite("interval-estimator loss".into()));
        }
        let grads = tape.backward(parts.total)?;
        model.params_mut().zero_grad();
        grads.accumulate(model.params_mut());
        adam.step(model.params_mut())?;
        acc.total += value;
        acc.emce += tape.scalar(parts.emce);
        acc.noise += tape.scalar(parts.noise);
        acc.sharp += tape.scalar(parts.sharp);
        batches += 1.0;
    }
    Ok(PiEpoch {
        total: acc.total / batches,
        emce: acc.emce / batches,
        noise: acc.noise / batches,
        sharp: acc.sharp / batches,
    })
}

/// Builds the initial model pair from the master seed.
pub fn init_models(
    input_dim: usize,
    hidden_dims: &[usize],
    mode: MeanMode,
    seed: u64,
) -> Result<(MeanEstimator, IntervalEstimator)> {
    let mean = MeanEstimator::new(
        input_dim,
        hidden_dims,
        mode,
        0.0,
        rng::derive_seed(seed, &[rng::TAG_MEAN_INIT]),
    )?;
    let interval = IntervalEstimator::new(
        input_dim,
        hidden_dims,
        rng::derive_seed(seed, &[rng::TAG_INTERVAL_INIT]),
    )?;
    Ok((mean, interval))
}

/// Output of [`train_alternating`].
#[derive(Debug, Clone)]
pub struct Trained {
    pub mean: MeanEstimator,
    pub interval: IntervalEstimator,
    pub state: TrainerState,
}

impl Trained {
    /// Test-set report at the interval estimator's level `alpha`.
    pub fn report(&self, method: &str, alpha: f64, data: &Dataset) -> Result<CalibrationReport> {
        let (y_hat, iv) = predict_pair(&self.mean, &self.interval, &data.features)?;
        CalibrationReport::evaluate(method, alpha, &data.targets, &y_hat, &iv, data.target_transform.scale)
    }
}

pub fn predict_pair(
    mean: &MeanEstimator,
    interval: &IntervalEstimator,
    x: &Matrix,
) -> Result<(Vec<f64>, IntervalBatch)> {
    Ok((mean.predict_mean(x, None)?.y_hat, interval.predict_interval(x)?))
}

/// Runs the alternating schedule. See [`train_alternating_observed`].
pub fn train_alternating(
    mean: MeanEstimator,
    interval: IntervalEstimator,
    data: &SplitDataset,
    schedule: &TrainSchedule,
    pi_cfg: &PiLossConfig,
    match_cfg: &MatchLossConfig,
) -> Result<Trained> {
    train_alternating_observed(mean, interval, data, schedule, pi_cfg, match_cfg, &mut |_, _, _| {})
}

/// Runs the alternating schedule, calling `observer` at every phase start
/// and end. The objective of the mean phase follows the estimator's mode
/// (sigma_fit or iqr_fit). Adam state persists across outer iterations.
///
/// A non-finite loss aborts with [`Error::Diverged`] carrying the state
/// reached so far.
pub fn train_alternating_observed(
    mut mean: MeanEstimator,
    mut interval: IntervalEstimator,
    data: &SplitDataset,
    schedule: &TrainSchedule,
    pi_cfg: &PiLossConfig,
    match_cfg: &MatchLossConfig,
    observer: &mut PhaseObserver<'_>,
) -> Result<Trained> {
    schedule.validate()?;
    pi_cfg.validate()?;
    match_cfg.validate()?;
    if mean.mode() == MeanMode::Plain {
        return Err(Error::config("alternating training needs sigma_fit or iqr_fit mode"));
    }
    let (train, test) = (&data.train, &data.test);
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyBatch("train_alternating"));
    }
    let seed = schedule.seed;
    let scale = train.target_transform.scale;
    let mut state = TrainerState::new(pi_cfg.alpha);
    let mut adam_mean = Adam::new(schedule.learning_rate);
    let mut adam_interval = Adam::new(schedule.learning_rate);

    let diverged = |state: &TrainerState, outer: usize, phase: Phase| Error::Diverged {
        outer,
        phase: phase.name(),
        state: Box::new(state.clone()),
    };
    let catch_nonfinite = |r: Result<f64>, state: &TrainerState, outer, phase| match r {
        Err(Error::NonFinite(_)) => Err(diverged(state, outer, phase)),
        other => other,
    };

    for outer in 1..=schedule.max_outer_iters {
        // Mean phase: widths from the frozen interval estimator.
        observer(
            &PhaseEvent {
                outer,
                phase: Phase::Mean,
                starting: true,
            },
            &mean,
            &interval,
        );
        let widths = interval.predict_interval(&train.features)?.widths();
        let objective = match mean.mode() {
            MeanMode::SigmaFit => MeanObjective::SigmaFit {
                widths: &widths,
                lambda_m: match_cfg.lambda_m,
                gamma: state.gamma,
            },
            _ => MeanObjective::IqrFit {
                widths: &widths,
                cfg: match_cfg,
            },
        };
        let mut mean_loss = f64::NAN;
        for epoch in 0..schedule.n_m {
            let order = rng::stream(seed, &[rng::TAG_MEAN_EPOCH, outer as u64, epoch as u64]);
            let r = mean_epoch(
                &mut mean,
                &mut adam_mean,
                &train.features,
                &train.targets,
                objective,
                schedule.batch_size,
                order,
                None,
            );
            mean_loss = catch_nonfinite(r, &state, outer, Phase::Mean)?;
        }
        observer(
            &PhaseEvent {
                outer,
                phase: Phase::Mean,
                starting: false,
            },
            &mean,
            &interval,
        );

        // Interval phase: mean predictions and residuals frozen.
        observer(
            &PhaseEvent {
                outer,
                phase: Phase::Interval,
                starting: true,
            },
            &mean,
            &interval,
        );
        let y_hat = mean.predict_mean(&train.features, None)?.y_hat;
        let alpha_v_before = metrics::coverage(&train.targets, &y_hat, &interval.predict_interval(&train.features)?)?;
        let mut pi = PiEpoch::default();
        for epoch in 0..schedule.n_c {
            let order = rng::stream(seed, &[rng::TAG_INTERVAL_EPOCH, outer as u64, epoch as u64]);
            let r = interval_epoch(
                &mut interval,
                &mut adam_interval,
                &train.features,
                &train.targets,
                &y_hat,
                pi_cfg,
                schedule.batch_size,
                order,
            );
            pi = match r {
                Err(Error::NonFinite(_)) => return Err(diverged(&state, outer, Phase::Interval)),
                other => other?,
            };
        }
        observer(
            &PhaseEvent {
                outer,
                phase: Phase::Interval,
                starting: false,
            },
            &mean,
            &interval,
        );

        state.set_alpha_v(achieved_calibration(&mean, &interval, train)?);

        let (test_hat, test_iv) = predict_pair(&mean, &interval, &test.features)?;
        let report = CalibrationReport::evaluate("", pi_cfg.alpha, &test.targets, &test_hat, &test_iv, scale)?;
        let record = TraceRecord {
            outer,
            mean_loss,
            pi_loss: pi.total,
            emce: pi.emce,
            noise: pi.noise,
            sharp: pi.sharp,
            alpha_v_before,
            alpha_v: state.alpha_v,
            gamma: state.gamma,
            test_rmse: report.rmse,
            test_ce: report.ce,
            test_coverage: report.coverage,
            test_aw: report.aw,
            monitor: report.rmse / scale + report.ce,
        };
        log::debug!("outer {outer}: {}", record.csv_row());
        state.trace.push(record);
        state.outer_iter = outer;
        if convergence_check(&state.trace, schedule.patience, schedule.min_delta) {
            state.converged = true;
            break;
        }
    }
    Ok(Trained { mean, interval, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synth_heteroscedastic, NoiseProfile};

    fn record(monitor: f64) -> TraceRecord {
        TraceRecord {
            outer: 0,
            mean_loss: 0.0,
            pi_loss: 0.0,
            emce: 0.0,
            noise: 0.0,
            sharp: 0.0,
            alpha_v_before: 0.0,
            alpha_v: 0.0,
            gamma: 0.0,
            test_rmse: 0.0,
            test_ce: 0.0,
            test_coverage: 0.0,
            test_aw: 0.0,
            monitor,
        }
    }

    fn trace(values: &[f64]) -> Vec<TraceRecord> {
        values.iter().map(|&v| record(v)).collect()
    }

    #[test]
    fn improving_trace_not_converged() {
        let t = trace(&(0..20).map(|i| 10.0 - 0.1 * i as f64).collect::<Vec<_>>());
        assert!(!convergence_check(&t, 5, 1e-4));
    }

    #[test]
    fn flat_trace_converges() {
        assert!(convergence_check(&trace(&[1.0; 6]), 5, 1e-4));
        assert!(!convergence_check(&trace(&[1.0; 5]), 5, 1e-4));
    }

    #[test]
    fn converges_exactly_at_first_eligible_index() {
        // Hand simulation: last improvement at index 2, then five flat
        // records; eligible first at length 8.
        let values = [5.0, 4.0, 3.0, 3.0, 3.00005, 3.0, 3.0, 3.0, 3.0];
        let first = (1..=values.len())
            .find(|&n| convergence_check(&trace(&values[..n]), 5, 1e-4))
            .unwrap();
        assert_eq!(first, 8);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = ParamSet::new();
        p.push("w", Matrix::from_elem((2, 2), 0.7));
        let before = p.clone();
        let mut adam = Adam::new(1e-3);
        adam.step(&mut p).unwrap();
        assert!(p.bitwise_eq(&before));
    }

    #[test]
    fn adam_minimizes_quadratic() {
        // f(w) = (w - 3)^2, simulated directly.
        let mut p = ParamSet::new();
        p.push("w", Matrix::zeros((1, 1)));
        let mut adam = Adam::new(0.05);
        for _ in 0..3000 {
            let w = p[0].value[[0, 0]];
            p[0].grad[[0, 0]] = 2.0 * (w - 3.0);
            optimizer_step(&mut p, &mut adam).unwrap();
        }
        assert!((p[0].value[[0, 0]] - 3.0).abs() < 1e-3);
        assert!(p[0].grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn adam_rejects_nonfinite_gradient_by_name() {
        let mut p = ParamSet::new();
        p.push("head.w", Matrix::zeros((1, 1)));
        p[0].grad[[0, 0]] = f64::NAN;
        let err = Adam::new(1e-3).step(&mut p).unwrap_err();
        assert!(err.to_string().contains("head.w"));
    }

    #[test]
    fn achieved_calibration_extremes() {
        let ds = synth_heteroscedastic(100, 0, NoiseProfile::Linear, 1).unwrap();
        let (mean, interval) = init_models(1, &[8], MeanMode::SigmaFit, 0).unwrap();
        let c = achieved_calibration(&mean, &interval, &ds).unwrap();
        assert!((0.0..=1.0).contains(&c));
        let empty = ds.select(&[]);
        assert!(achieved_calibration(&mean, &interval, &empty).is_err());
    }

    fn tiny() -> (SplitDataset, TrainSchedule) {
        let ds = synth_heteroscedastic(200, 1, NoiseProfile::Linear, 1).unwrap();
        let sched = TrainSchedule {
            n_m: 2,
            n_c: 2,
            max_outer_iters: 3,
            batch_size: 32,
            ..TrainSchedule::default()
        };
        (split(&ds, 0.8, 1).unwrap(), sched)
    }

    #[test]
    fn short_run_records_trace_and_gamma() {
        let (data, sched) = tiny();
        for mode in [MeanMode::SigmaFit, MeanMode::IqrFit] {
            let (m, i) = init_models(1, &[16, 16], mode, 3).unwrap();
            let cfg = PiLossConfig::default();
            let mc = match mode {
                MeanMode::SigmaFit => MatchLossConfig::sigma_fit(0.9),
                _ => MatchLossConfig::iqr_fit(0.9),
            };
            let out = train_alternating(m, i, &data, &sched, &cfg, &mc).unwrap();
            assert_eq!(out.state.trace.len(), out.state.outer_iter);
            for r in &out.state.trace {
                assert_eq!(r.gamma, losses::matching_scale(r.alpha_v));
            }
            assert!(trace_to_csv(&out.state.trace).lines().count() == out.state.trace.len() + 1);
        }
    }

    #[test]
    fn plain_mode_rejected() {
        let (data, sched) = tiny();
        let (_, i) = init_models(1, &[4], MeanMode::SigmaFit, 0).unwrap();
        let m = MeanEstimator::new(1, &[4], MeanMode::Plain, 0.0, 0).unwrap();
        let r = train_alternating(
            m,
            i,
            &data,
            &sched,
            &PiLossConfig::default(),
            &MatchLossConfig::sigma_fit(0.9),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn divergence_reports_state() {
        let (data, mut sched) = tiny();
        sched.learning_rate = 1e300;
        let (m, i) = init_models(1, &[16, 16], MeanMode::SigmaFit, 3).unwrap();
        let r = train_alternating(
            m,
            i,
            &data,
            &sched,
            &PiLossConfig::default(),
            &MatchLossConfig::sigma_fit(0.9),
        );
        match r {
            Err(Error::Diverged { state, .. }) => assert!(state.trace.len() <= sched.max_outer_iters),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}

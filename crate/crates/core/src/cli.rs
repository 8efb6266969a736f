//! The `umatch` command-line front end.
//!
//! Every setting resolves in three layers: built-in defaults, then a flat
//! `key = value` config file (`--config`), then command-line flags. The
//! resolved settings are echoed to `config.txt` in the output directory;
//! feeding that file back through `--config` reproduces the run.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::baselines::{self, BaselineConfig, BaselineKind, BaselineTrained};
use crate::checkpoint::{Checkpoint, CheckpointMeta, Role};
use crate::data::{self, CsvOptions, Dataset, NoiseProfile, SplitDataset, TargetColumn};
use crate::losses::{self, MatchLossConfig, PiLossConfig};
use crate::metrics::{self, CalibrationReport, CurvePoint};
use crate::networks::{MeanMode, DEFAULT_HIDDEN};
use crate::plot::{LineChart, Series};
use crate::training::{self, TraceRecord, TrainSchedule, Trained};
use crate::{Error, IntervalBatch, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    SigmaFit,
    IqrFit,
    Hnn,
    Quantile,
    McDropout,
    /// True-noise intervals; needs an oracle sidecar (synthetic data only).
    Oracle,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SigmaFit,
        Method::IqrFit,
        Method::Hnn,
        Method::Quantile,
        Method::McDropout,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SigmaFit => "sigma_fit",
            Method::IqrFit => "iqr_fit",
            Method::Hnn => "hnn",
            Method::Quantile => "quantile",
            Method::McDropout => "mc_dropout",
            Method::Oracle => "oracle",
        }
    }

    fn baseline(self) -> Option<BaselineKind> {
        match self {
            Method::Hnn => Some(BaselineKind::Hnn),
            Method::Quantile => Some(BaselineKind::Quantile),
            Method::McDropout => Some(BaselineKind::McDropout),
            _ => None,
        }
    }

    /// Whether intervals at a new level need a new model.
    fn retrains_per_alpha(self) -> bool {
        matches!(self, Method::SigmaFit | Method::IqrFit | Method::Quantile)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Eval,
    Compare,
    Curve,
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Compare => "compare",
            Command::Curve => "curve",
            Command::Synth => "synth",
        }
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub data: Option<PathBuf>,
    /// Column name or zero-based index; `None` selects the last column.
    pub target: Option<String>,
    pub delimiter: char,
    pub oracle: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub beta_n: f64,
    pub beta_s: f64,
    pub eta: f64,
    /// `None` means the method default (0.5 sigma_fit, 0.4 iqr_fit).
    pub lambda_m: Option<f64>,
    pub lambda_u: f64,
    pub lambda_l: f64,
    pub n_m: usize,
    pub n_c: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_outer: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub hidden: Vec<usize>,
    pub train_fraction: f64,
    pub dropout: f64,
    pub mc_samples: usize,
    pub n: usize,
    pub noise: NoiseProfile,
    pub dim: usize,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        let pi = PiLossConfig::default();
        let sched = TrainSchedule::default();
        RunConfig {
            command,
            data: None,
            target: None,
            delimiter: ',',
            oracle: None,
            checkpoint: None,
            methods: vec![Method::SigmaFit],
            alpha: pi.alpha,
            alphas: metrics::DEFAULT_ALPHA_GRID.to_vec(),
            seeds: vec![0],
            out: PathBuf::from("out"),
            beta_n: pi.beta_n,
            beta_s: pi.beta_s,
            eta: pi.eta,
            lambda_m: None,
            lambda_u: 0.3,
            lambda_l: 0.3,
            n_m: sched.n_m,
            n_c: sched.n_c,
            lr: sched.learning_rate,
            batch_size: sched.batch_size,
            max_outer: sched.max_outer_iters,
            patience: sched.patience,
            min_delta: sched.min_delta,
            hidden: DEFAULT_HIDDEN.to_vec(),
            train_fraction: data::DEFAULT_TRAIN_FRACTION,
            dropout: 0.5,
            mc_samples: 100,
            n: 2500,
            noise: NoiseProfile::Sinusoidal,
            dim: 1,
        }
    }

    /// Keys accepted in config files, in echo order.
    pub const KEYS: [&'static str; 30] = [
        "data",
        "target",
        "delimiter",
        "oracle",
        "checkpoint",
        "method",
        "alpha",
        "alphas",
        "seeds",
        "out",
        "beta_n",
        "beta_s",
        "eta",
        "lambda_m",
        "lambda_u",
        "lambda_l",
        "n_m",
        "n_c",
        "lr",
        "batch_size",
        "max_outer",
        "patience",
        "min_delta",
        "hidden",
        "train_fraction",
        "dropout",
        "mc_samples",
        "n",
        "noise",
        "dim",
    ];

    /// Sets one key from its text form. Empty values reset optional keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        let bad = |what: &str| Error::config(format!("{key}: cannot parse '{v}' as {what}"));
        let real = || v.parse::<f64>().map_err(|_| bad("a number"));
        let count = || v.parse::<usize>().map_err(|_| bad("a nonnegative integer"));
        let opt_path = || (!v.is_empty()).then(|| PathBuf::from(v));
        match key.as_str() {
            "data" => self.data = opt_path(),
            "target" => self.target = (!v.is_empty()).then(|| v.to_string()),
            "delimiter" => {
                let mut chars = v.chars();
                self.delimiter = match (chars.next(), chars.next()) {
                    (Some(c), None) if c.is_ascii() => c,
                    _ if v == "\\t" || v == "tab" => '\t',
                    _ => return Err(bad("a single ASCII character")),
                };
            }
            "oracle" => self.oracle = opt_path(),
            "checkpoint" => self.checkpoint = opt_path(),
            "method" | "methods" => {
                self.methods = split_list(v).map(Method::from_str).collect::<Result<_>>()?;
            }
            "alpha" => self.alpha = real()?,
            "alphas" => {
                self.alphas = split_list(v)
                    .map(|s| s.parse::<f64>().map_err(|_| bad("a list of numbers")))
                    .collect::<Result<_>>()?;
            }
            "seed" | "seeds" => {
                self.seeds = split_list(v)
                    .map(|s| s.parse::<u64>().map_err(|_| bad("a list of integers")))
                    .collect::<Result<_>>()?;
            }
            "out" => self.out = PathBuf::from(v),
            "beta_n" => self.beta_n = real()?,
            "beta_s" => self.beta_s = real()?,
            "eta" => self.eta = real()?,
            "lambda_m" => self.lambda_m = if v.is_empty() { None } else { Some(real()?) },
            "lambda_u" => self.lambda_u = real()?,
            "lambda_l" => self.lambda_l = real()?,
            "n_m" => self.n_m = count()?,
            "n_c" => self.n_c = count()?,
            "lr" => self.lr = real()?,
            "batch_size" => self.batch_size = count()?,
            "max_outer" => self.max_outer = count()?,
            "patience" => self.patience = count()?,
            "min_delta" => self.min_delta = real()?,
            "hidden" => {
                self.hidden = split_list(v)
                    .map(|s| s.parse::<usize>().map_err(|_| bad("a list of widths")))
                    .collect::<Result<_>>()?;
            }
            "train_fraction" => self.train_fraction = real()?,
            "dropout" => self.dropout = real()?,
            "mc_samples" => self.mc_samples = count()?,
            "n" => self.n = count()?,
            "noise" => self.noise = v.parse()?,
            "dim" => self.dim = count()?,
            other => return Err(Error::config(format!("unknown setting '{other}'"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        fn list<T: ToString>(v: &[T]) -> String {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "data" => path(&self.data),
            "target" => self.target.clone().unwrap_or_default(),
            "delimiter" if self.delimiter == '\t' => "tab".into(),
            "delimiter" => self.delimiter.to_string(),
            "oracle" => path(&self.oracle),
            "checkpoint" => path(&self.checkpoint),
            "method" => list(&self.methods),
            "alpha" => self.alpha.to_string(),
            "alphas" => list(&self.alphas),
            "seeds" => list(&self.seeds),
            "out" => self.out.display().to_string(),
            "beta_n" => self.beta_n.to_string(),
            "beta_s" => self.beta_s.to_string(),
            "eta" => self.eta.to_string(),
            "lambda_m" => self.lambda_m.map(|v| v.to_string()).unwrap_or_default(),
            "lambda_u" => self.lambda_u.to_string(),
            "lambda_l" => self.lambda_l.to_string(),
            "n_m" => self.n_m.to_string(),
            "n_c" => self.n_c.to_string(),
            "lr" => self.lr.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "max_outer" => self.max_outer.to_string(),
            "patience" => self.patience.to_string(),
            "min_delta" => self.min_delta.to_string(),
            "hidden" => list(&self.hidden),
            "train_fraction" => self.train_fraction.to_string(),
            "dropout" => self.dropout.to_string(),
            "mc_samples" => self.mc_samples.to_string(),
            "n" => self.n.to_string(),
            "noise" => self.noise.name().to_string(),
            "dim" => self.dim.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// `key = value` lines, loadable with [`parse_config_text`].
    pub fn echo(&self) -> String {
        let mut out = format!("# umatch {}\n", self.command.name());
        for key in Self::KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("at least one method is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        self.pi_config(self.alpha).validate()?;
        self.schedule(self.seeds[0]).validate()
    }

    pub fn pi_config(&self, alpha: f64) -> PiLossConfig {
        PiLossConfig {
            alpha,
            beta_n: self.beta_n,
            beta_s: self.beta_s,
            eta: self.eta,
        }
    }

    pub fn match_config(&self, method: Method, alpha: f64) -> MatchLossConfig {
        let mut cfg = match method {
            Method::IqrFit | Method::Quantile => MatchLossConfig::iqr_fit(alpha),
            _ => MatchLossConfig::sigma_fit(alpha),
        };
        if let Some(m) = self.lambda_m {
            cfg.lambda_m = m;
        }
        if matches!(method, Method::IqrFit | Method::Quantile) {
            cfg.lambda_u = self.lambda_u;
            cfg.lambda_l = self.lambda_l;
        }
        cfg
    }

    pub fn schedule(&self, seed: u64) -> TrainSchedule {
        TrainSchedule {
            n_m: self.n_m,
            n_c: self.n_c,
            max_outer_iters: self.max_outer,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed,
            patience: self.patience,
            min_delta: self.min_delta,
        }
    }

    pub fn baseline_config(&self, kind: BaselineKind, alpha: f64) -> BaselineConfig {
        BaselineConfig {
            kind,
            dropout_prob: self.dropout,
            mc_samples: self.mc_samples,
            alpha,
            hidden_dims: self.hidden.clone(),
            lambda_u: self.lambda_u,
            lambda_l: self.lambda_l,
        }
    }

    fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            delimiter: self.delimiter as u8,
            ..CsvOptions::default()
        }
    }

    fn target_column(&self) -> TargetColumn {
        match &self.target {
            Some(t) => t.parse().expect("infallible"),
            None => TargetColumn::default(),
        }
    }

    fn data_path(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| Error::config("--data is required"))
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Parses flat `key = value` text; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("config line {}: expected key = value", i + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Argument parsing

#[derive(Debug, Parser)]
#[command(name = "umatch", version, about = "Calibrated regression with uncertainty matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Train one method and write checkpoint, trace, and report.
    Train(Flags),
    /// Evaluate a checkpoint on a dataset.
    Eval(Flags),
    /// Train several methods over several seeds and tabulate mean ± std.
    Compare(Flags),
    /// Observed coverage and width over a grid of levels.
    Curve(Flags),
    /// Write a synthetic heteroscedastic dataset and its oracle sidecar.
    Synth(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Input CSV (header row required).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target column: header name or zero-based index (default: last column).
    #[arg(long)]
    pub target: Option<String>,
    /// Field delimiter (default ',').
    #[arg(long)]
    pub delimiter: Option<String>,
    /// Oracle sidecar (mean_true,sigma_true) for synthetic data.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Method, or comma-separated methods: sigma_fit, iqr_fit, hnn, quantile, mc_dropout, oracle.
    #[arg(long, alias = "methods")]
    pub method: Option<String>,
    /// Target coverage level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated coverage grid for `curve`.
    #[arg(long)]
    pub alphas: Option<String>,
    /// Seed, or comma-separated seeds.
    #[arg(long, alias = "seeds")]
    pub seed: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat key = value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub beta_n: Option<f64>,
    #[arg(long)]
    pub beta_s: Option<f64>,
    /// Sigmoid sharpness of the smoothed coverage indicator.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub lambda_m: Option<f64>,
    #[arg(long)]
    pub lambda_u: Option<f64>,
    #[arg(long)]
    pub lambda_l: Option<f64>,
    /// Mean-estimator epochs per outer iteration.
    #[arg(long)]
    pub n_m: Option<usize>,
    /// Interval-estimator epochs per outer iteration.
    #[arg(long)]
    pub n_c: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub min_delta: Option<f64>,
    /// Comma-separated hidden widths.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// MC-dropout probability.
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Synthetic sample count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Synthetic noise profile: linear or sinusoidal.
    #[arg(long)]
    pub noise: Option<String>,
    /// Synthetic input dimension.
    #[arg(long)]
    pub dim: Option<usize>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut p: Vec<(&'static str, String)> = Vec::new();
        macro_rules! push {
            ($($field:ident => $key:literal),* $(,)?) => {
                $(if let Some(v) = &self.$field { p.push(($key, v.to_string())); })*
            };
        }
        macro_rules! push_path {
            ($($field:ident => $key:literal),* $(,)?) => {
                $(if let Some(v) = &self.$field { p.push(($key, v.display().to_string())); })*
            };
        }
        push_path!(data => "data", oracle => "oracle", checkpoint => "checkpoint", out => "out");
        push!(
            target => "target", delimiter => "delimiter", method => "method", alpha => "alpha",
            alphas => "alphas", seed => "seeds", beta_n => "beta_n", beta_s => "beta_s", eta => "eta",
            lambda_m => "lambda_m", lambda_u => "lambda_u", lambda_l => "lambda_l", n_m => "n_m",
            n_c => "n_c", lr => "lr", batch_size => "batch_size", max_outer => "max_outer",
            patience => "patience", min_delta => "min_delta", hidden => "hidden",
            train_fraction => "train_fraction", dropout => "dropout", mc_samples => "mc_samples",
            n => "n", noise => "noise", dim => "dim",
        );
        p
    }
}

/// Defaults, then `--config` file, then flags.
pub fn resolve(command: Command, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = RunConfig::defaults(command);
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (k, v) in parse_config_text(&text)? {
            cfg.set(&k, &v)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        }
    }
    for (k, v) in flags.pairs() {
        cfg.set(k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::config(e.to_string()))?;
    let (command, flags) = match &cli.command {
        CliCommand::Train(f) => (Command::Train, f),
        CliCommand::Eval(f) => (Command::Eval, f),
        CliCommand::Compare(f) => (Command::Compare, f),
        CliCommand::Curve(f) => (Command::Curve, f),
        CliCommand::Synth(f) => (Command::Synth, f),
    };
    let cfg = resolve(command, flags)?;
    execute(&cfg)
}

pub fn execute(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write(&cfg.out.join("config.txt"), &cfg.echo())?;
    match cfg.command {
        Command::Train => cmd_train(cfg),
        Command::Eval => cmd_eval(cfg),
        Command::Compare => cmd_compare(cfg).map(|_| ()),
        Command::Curve => cmd_curve(cfg).map(|_| ()),
        Command::Synth => cmd_synth(cfg),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Fitting

/// A trained model of any method.
#[derive(Debug, Clone)]
pub enum Fitted {
    Proposed { method: Method, trained: Trained },
    Baseline(BaselineTrained),
    Oracle,
}

impl Fitted {
    pub fn method(&self) -> Method {
        match self {
            Fitted::Proposed { method, .. } => *method,
            Fitted::Baseline(b) => match b.model.config.kind {
                BaselineKind::Hnn => Method::Hnn,
                BaselineKind::Quantile => Method::Quantile,
                BaselineKind::McDropout => Method::McDropout,
            },
            Fitted::Oracle => Method::Oracle,
        }
    }

    pub fn trace(&self) -> &[TraceRecord] {
        match self {
            Fitted::Proposed { trained, .. } => &trained.state.trace,
            Fitted::Baseline(b) => &b.trace,
            Fitted::Oracle => &[],
        }
    }

    /// Means and intervals (rescaled units) for every row of `data`.
    pub fn predict(&self, data: &Dataset, alpha: f64) -> Result<(Vec<f64>, IntervalBatch)> {
        match self {
            Fitted::Proposed { trained, .. } => {
                training::predict_pair(&trained.mean, &trained.interval, &data.features)
            }
            Fitted::Baseline(b) => {
                let p = b.model.predict(&data.features, alpha)?;
                Ok((p.y_hat, p.intervals))
            }
            Fitted::Oracle => oracle_intervals(data, alpha),
        }
    }

    pub fn report(&self, data: &Dataset, alpha: f64) -> Result<CalibrationReport> {
        let (y_hat, iv) = self.predict(data, alpha)?;
        let mut r = CalibrationReport::evaluate(
            self.method().name(),
            alpha,
            &data.targets,
            &y_hat,
            &iv,
            data.target_transform.scale,
        )?;
        match self {
            Fitted::Proposed { trained, .. } if trained.mean.mode() == MeanMode::IqrFit => {
                let p = trained.mean.predict_mean(&data.features, None)?;
                r.crossing_rate = Some(baselines::crossing_rate(
                    p.q_low.as_deref().unwrap_or_default(),
                    p.q_high.as_deref().unwrap_or_default(),
                ));
            }
            Fitted::Baseline(b) if b.model.config.kind == BaselineKind::Quantile => {
                let p = b.model.mean.predict_mean(&data.features, None)?;
                let (q_low, q_high) = (p.q_low.unwrap_or_default(), p.q_high.unwrap_or_default());
                r.crossing_rate = Some(baselines::crossing_rate(&q_low, &q_high));
                r.clamp_rate = Some(baselines::quantile_intervals(&p.y_hat, &q_low, &q_high).1);
            }
            _ => {}
        }
        Ok(r)
    }

    pub fn checkpoint(&self, meta: CheckpointMeta) -> Result<Checkpoint> {
        let nets = match self {
            Fitted::Proposed { trained, .. } => vec![
                (Role::Mean(trained.mean.mode()), trained.mean.net().clone()),
                (Role::Interval, trained.interval.net().clone()),
            ],
            Fitted::Baseline(b) => vec![(Role::Mean(b.model.mean.mode()), b.model.mean.net().clone())],
            Fitted::Oracle => return Err(Error::config("the oracle has no parameters to save")),
        };
        let baseline = match self {
            Fitted::Baseline(b) => Some(b.model.config.clone()),
            _ => None,
        };
        Ok(Checkpoint {
            meta: CheckpointMeta { baseline, ..meta },
            nets,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if let Some(model) = ck.baseline_model()? {
            return Ok(Fitted::Baseline(BaselineTrained {
                model,
                trace: Vec::new(),
                converged: false,
            }));
        }
        let mean = ck.mean_estimator()?;
        let interval = ck.interval_estimator()?.ok_or_else(|| Error::Checkpoint {
            line: 0,
            reason: "no interval network".into(),
        })?;
        let method = if mean.mode() == MeanMode::IqrFit {
            Method::IqrFit
        } else {
            Method::SigmaFit
        };
        Ok(Fitted::Proposed {
            method,
            trained: Trained {
                mean,
                interval,
                state: training::TrainerState {
                    outer_iter: 0,
                    alpha_v: ck.meta.alpha,
                    gamma: losses::matching_scale(ck.meta.alpha),
                    trace: Vec::new(),
                    converged: false,
                },
            },
        })
    }
}

/// `mean_true ± z * sigma_true`, expressed in rescaled units.
pub fn oracle_intervals(data: &Dataset, alpha: f64) -> Result<(Vec<f64>, IntervalBatch)> {
    let oracle = data
        .oracle
        .as_ref()
        .ok_or_else(|| Error::config("oracle method needs --oracle (synthetic data only)"))?;
    let t = data.target_transform;
    let z = losses::z_score(alpha)?;
    let y_hat = oracle.mean.iter().map(|&m| t.apply(m)).collect();
    let half = oracle.sigma.iter().map(|s| z * s / t.scale).collect();
    Ok((y_hat, IntervalBatch::symmetric(half)))
}

/// Trains `method` at level `alpha` on `data.train`.
pub fn fit(cfg: &RunConfig, method: Method, data: &SplitDataset, alpha: f64, seed: u64) -> Result<Fitted> {
    let schedule = cfg.schedule(seed);
    match method {
        Method::SigmaFit | Method::IqrFit => {
            let mode = if method == Method::SigmaFit {
                MeanMode::SigmaFit
            } else {
                MeanMode::IqrFit
            };
            let (mean, interval) = training::init_models(data.train.dim(), &cfg.hidden, mode, seed)?;
            let trained = training::train_alternating(
                mean,
                interval,
                data,
                &schedule,
                &cfg.pi_config(alpha),
                &cfg.match_config(method, alpha),
            )?;
            Ok(Fitted::Proposed { method, trained })
        }
        Method::Oracle => Ok(Fitted::Oracle),
        _ => {
            let kind = method.baseline().expect("baseline method");
            let b = baselines::train_baseline(&cfg.baseline_config(kind, alpha), data, &schedule)?;
            Ok(Fitted::Baseline(b))
        }
    }
}

/// Loads `--data` (and `--oracle`, if given).
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.data_path()?;
    let mut ds = data::load_csv(path, &cfg.target_column(), &cfg.csv_options())?;
    if let Some(o) = &cfg.oracle {
        let oracle = data::load_oracle_csv(o)?;
        if oracle.mean.len() != ds.len() {
            return Err(Error::Data(format!(
                "{}: {} oracle rows for {} data rows",
                o.display(),
                oracle.mean.len(),
                ds.len()
            )));
        }
        ds.oracle = Some(oracle);
    }
    Ok(ds)
}

/// Checkpoint metadata for a model trained on `data`.
pub fn meta_for(method: Method, alpha: f64, seed: u64, data: &SplitDataset) -> CheckpointMeta {
    CheckpointMeta {
        method: method.name().to_string(),
        alpha,
        seed,
        target_transform: data.train.target_transform,
        scaler: data.scaler.clone(),
        feature_names: data.train.feature_names.clone(),
        target_name: data.train.target_name.clone(),
        baseline: None,
    }
}

/// Test rows in raw units: `y,y_hat,lower,upper`.
pub fn intervals_csv(data: &Dataset, y_hat: &[f64], iv: &IntervalBatch) -> String {
    let t = data.target_transform;
    let (lo, hi) = iv.bounds(y_hat);
    let mut out = String::from("y,y_hat,lower,upper\n");
    for i in 0..y_hat.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            data.raw_targets[i],
            t.invert(y_hat[i]),
            t.invert(lo[i]),
            t.invert(hi[i])
        );
    }
    out
}

fn trace_chart(method: Method, trace: &[TraceRecord]) -> LineChart {
    let series = |name: &str, f: fn(&TraceRecord) -> f64| Series {
        name: name.to_string(),
        points: trace.iter().map(|r| (r.outer as f64, f(r))).collect(),
    };
    LineChart {
        title: format!("{method}: test calibration by outer iteration"),
        x_label: "outer iteration".into(),
        y_label: "CE / coverage".into(),
        series: vec![
            series("test CE", |r| r.test_ce),
            series("test coverage", |r| r.test_coverage),
        ],
        ..LineChart::default()
    }
}

// ---------------------------------------------------------------------------
// Commands

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let [method] = cfg.methods[..] else {
        return Err(Error::config("train takes exactly one method"));
    };
    let [seed] = cfg.seeds[..] else {
        return Err(Error::config("train takes exactly one seed"));
    };
    let ds = load_dataset(cfg)?;
    let split = data::split(&ds, cfg.train_fraction, seed)?;
    let fitted = fit(cfg, method, &split, cfg.alpha, seed)?;
    let report = fitted.report(&split.test, cfg.alpha)?;
    if method != Method::Oracle {
        fitted
            .checkpoint(meta_for(method, cfg.alpha, seed, &split))?
            .save(&cfg.out.join("checkpoint.txt"))?;
    }
    write(&cfg.out.join("trace.csv"), &training::trace_to_csv(fitted.trace()))?;
    write(
        &cfg.out.join("trace.svg"),
        &trace_chart(method, fitted.trace()).to_svg(),
    )?;
    write(&cfg.out.join("report.json"), &report.to_json()?)?;
    write(&cfg.out.join("report.csv"), &report.to_csv())?;
    let (y_hat, iv) = fitted.predict(&split.test, cfg.alpha)?;
    write(&cfg.out.join("intervals.csv"), &intervals_csv(&split.test, &y_hat, &iv))?;
    ds.write_canonical_csv(&cfg.out.join("data_canonical.csv"))?;
    println!(
        "{method}: rmse {:.4}  ce {:.4}  coverage {:.4}  aw {:.4}  ({} test rows)",
        report.rmse, report.ce, report.coverage, report.aw, report.n_samples
    );
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let ck_path = cfg
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::config("eval needs --checkpoint"))?;
    let ck = Checkpoint::load(ck_path)?;
    let opts = CsvOptions {
        drop_constant: false,
        ..cfg.csv_options()
    };
    let target = match &cfg.target {
        Some(_) => cfg.target_column(),
        None => TargetColumn::Name(ck.meta.target_name.clone()),
    };
    let raw = data::load_csv(cfg.data_path()?, &target, &opts)?;
    let cols = ck
        .meta
        .feature_names
        .iter()
        .map(|name| {
            raw.feature_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Data(format!("evaluation data lacks column '{name}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ds = raw.clone().with_transform(ck.meta.target_transform);
    ds.features = ck
        .meta
        .scaler
        .transform(&raw.features.select(ndarray::Axis(1), &cols))?;
    ds.feature_names = ck.meta.feature_names.clone();
    let alpha = ck.meta.alpha;
    let fitted = Fitted::from_checkpoint(&ck)?;
    let report = fitted.report(&ds, alpha)?;
    write(&cfg.out.join("report.json"), &report.to_json()?)?;
    write(&cfg.out.join("report.csv"), &report.to_csv())?;
    let (y_hat, iv) = fitted.predict(&ds, alpha)?;
    write(&cfg.out.join("intervals.csv"), &intervals_csv(&ds, &y_hat, &iv))?;
    println!(
        "{}: rmse {:.4}  ce {:.4}  coverage {:.4}  aw {:.4}  ({} rows)",
        ck.meta.method, report.rmse, report.ce, report.coverage, report.aw, report.n_samples
    );
    Ok(())
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-method aggregate of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: Method,
    pub n_seeds: usize,
    pub rmse: (f64, f64),
    pub ce: (f64, f64),
    pub aw: (f64, f64),
}

pub const COMPARE_HEADER: &str = "method,alpha,n_seeds,rmse_mean,rmse_std,ce_mean,ce_std,aw_mean,aw_std";

pub fn compare_csv(alpha: f64, rows: &[CompareRow]) -> String {
    let mut out = format!("{COMPARE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{alpha},{},{},{},{},{},{},{}",
            r.method, r.n_seeds, r.rmse.0, r.rmse.1, r.ce.0, r.ce.1, r.aw.0, r.aw.1
        );
    }
    out
}

pub fn compare_table(alpha: f64, rows: &[CompareRow]) -> String {
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            let pm = |(m, s): (f64, f64)| format!("{m:.4} ± {s:.4}");
            [
                r.method.to_string(),
                r.n_seeds.to_string(),
                pm(r.rmse),
                pm(r.ce),
                pm(r.aw),
            ]
        })
        .collect();
    let header = [
        "method".to_string(),
        "seeds".into(),
        "RMSE".into(),
        format!("CE@{alpha}"),
        format!("AW@{alpha}"),
    ];
    let mut widths = header.clone().map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |row: &[String; 5]| {
        row.iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                let pad = w - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &cells {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

/// Trains every (method, seed) pair; per-run rows stream to `runs.csv` so
/// a failure leaves the completed runs on disk.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<CompareRow>> {
    let ds = load_dataset(cfg)?;
    let runs_path = cfg.out.join("runs.csv");
    let mut runs = format!("seed,{}\n", CalibrationReport::CSV_HEADER);
    write(&runs_path, &runs)?;
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let mut reports = Vec::new();
        for &seed in &cfg.seeds {
            let split = data::split(&ds, cfg.train_fraction, seed)?;
            let result = fit(cfg, method, &split, cfg.alpha, seed).and_then(|f| f.report(&split.test, cfg.alpha));
            let report = match result {
                Ok(r) => r,
                Err(e) => {
                    write(&cfg.out.join("compare.csv"), &compare_csv(cfg.alpha, &rows))?;
                    return Err(Error::config(format!("{method} seed {seed} failed: {e}")));
                }
            };
            log::info!(
                "{method} seed {seed}: rmse {:.4} ce {:.4} aw {:.4}",
                report.rmse,
                report.ce,
                report.aw
            );
            let _ = writeln!(runs, "{seed},{}", report.csv_row());
            write(&runs_path, &runs)?;
            reports.push(report);
        }
        let col = |f: fn(&CalibrationReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
        rows.push(CompareRow {
            method,
            n_seeds: reports.len(),
            rmse: col(|r| r.rmse),
            ce: col(|r| r.ce),
            aw: col(|r| r.aw),
        });
    }
    write(&cfg.out.join("compare.csv"), &compare_csv(cfg.alpha, &rows))?;
    let table = compare_table(cfg.alpha, &rows);
    write(&cfg.out.join("compare.txt"), &table)?;
    print!("{table}");
    Ok(rows)
}

/// Calibration curve of one method on the test split. Interval-network and
/// quantile methods are retrained at each level; sigma-based methods are
/// trained once at `cfg.alpha` and rescaled.
pub fn method_curve(cfg: &RunConfig, method: Method, split: &SplitDataset, seed: u64) -> Result<Vec<CurvePoint>> {
    let scale = split.test.target_transform.scale;
    let shared = if method.retrains_per_alpha() {
        None
    } else {
        Some(fit(cfg, method, split, cfg.alpha, seed)?)
    };
    let mut predictor = |_: &crate::Matrix, alpha: f64| -> Result<(Vec<f64>, IntervalBatch)> {
        match &shared {
            Some(f) => f.predict(&split.test, alpha),
            None => fit(cfg, method, split, alpha, seed)?.predict(&split.test, alpha),
        }
    };
    metrics::calibration_curve(
        &mut predictor,
        &split.test.features,
        &split.test.targets,
        &cfg.alphas,
        scale,
    )
}

pub fn cmd_curve(cfg: &RunConfig) -> Result<Vec<(String, Vec<CurvePoint>)>> {
    let seed = cfg.seeds[0];
    let ds = load_dataset(cfg)?;
    let split = data::split(&ds, cfg.train_fraction, seed)?;
    let mut curves = Vec::new();
    for &method in &cfg.methods {
        curves.push((method.name().to_string(), method_curve(cfg, method, &split, seed)?));
    }
    write(&cfg.out.join("curve.csv"), &metrics::curves_to_csv(&curves)?)?;
    let chart = LineChart {
        title: "expected vs observed coverage (test)".into(),
        x_label: "expected coverage".into(),
        y_label: "observed coverage".into(),
        series: curves
            .iter()
            .map(|(name, pts)| Series {
                name: name.clone(),
                points: pts.iter().map(|p| (p.alpha, p.observed)).collect(),
            })
            .collect(),
        diagonal: true,
        x_range: Some((0.0, 1.0)),
        y_range: Some((0.0, 1.0)),
    };
    write(&cfg.out.join("curve.svg"), &chart.to_svg())?;
    Ok(curves)
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let ds = data::synth_heteroscedastic(cfg.n, cfg.seeds[0], cfg.noise, cfg.dim)?;
    ds.write_canonical_csv(&cfg.out.join("synth.csv"))?;
    let oracle = ds.oracle.as_ref().expect("synthetic data carries an oracle");
    write(&cfg.out.join("synth_oracle.csv"), &data::oracle_to_csv(oracle))?;
    println!("wrote {} rows to {}", ds.len(), cfg.out.join("synth.csv").display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.txt");
        std::fs::write(&file, "# comment\nbeta_n = 0.7\nn-m = 3\nalpha=0.8\n").unwrap();
        let flags = Flags {
            config: Some(file),
            alpha: Some(0.95),
            ..Flags::default()
        };
        let cfg = resolve(Command::Train, &flags).unwrap();
        assert_eq!(cfg.beta_n, 0.7);
        assert_eq!(cfg.n_m, 3);
        assert_eq!(cfg.alpha, 0.95);
        assert_eq!(cfg.beta_s, 0.3);
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::defaults(Command::Compare);
        cfg.set("method", "hnn, iqr_fit").unwrap();
        cfg.set("seeds", "1,2,3").unwrap();
        cfg.set("lambda_m", "0.25").unwrap();
        cfg.set("delimiter", "tab").unwrap();
        cfg.set("data", "x.csv").unwrap();
        let mut back = RunConfig::defaults(Command::Compare);
        for (k, v) in parse_config_text(&cfg.echo()).unwrap() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let mut cfg = RunConfig::defaults(Command::Train);
        assert!(cfg.set("bogus", "1").is_err());
        assert!(cfg.set("alpha", "high").is_err());
        assert!(cfg.set("method", "bnn").is_err());
        assert!(parse_config_text("no equals sign").is_err());
    }

    #[test]
    fn method_defaults_for_lambda() {
        let cfg = RunConfig::defaults(Command::Train);
        assert_eq!(cfg.match_config(Method::SigmaFit, 0.9).lambda_m, 0.5);
        let iqr = cfg.match_config(Method::IqrFit, 0.9);
        assert_eq!((iqr.lambda_m, iqr.lambda_u, iqr.lambda_l), (0.4, 0.3, 0.3));
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        assert!((s - 2.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn table_is_aligned() {
        let rows = vec![
            CompareRow {
                method: Method::Hnn,
                n_seeds: 5,
                rmse: (4.7, 0.3),
                ce: (0.05, 0.01),
                aw: (9.0, 1.0),
            },
            CompareRow {
                method: Method::McDropout,
                n_seeds: 5,
                rmse: (14.7, 0.3),
                ce: (0.05, 0.01),
                aw: (9.0, 1.0),
            },
        ];
        let t = compare_table(0.9, &rows);
        let lens: Vec<usize> = t.lines().map(|l| l.chars().count()).collect();
        assert!(lens.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(compare_csv(0.9, &rows).lines().count(), 3);
    }
}

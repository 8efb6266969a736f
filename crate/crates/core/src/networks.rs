//! Fully connected estimators.
//!
//! Both estimators share one building block, [`Mlp`]: a ReLU trunk followed
//! by independent linear heads, each with its own output activation.

use std::fmt;

use ndarray::Array2;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tape, Var};
use crate::{rng, Error, IntervalBatch, Matrix, Result};

/// Hidden widths of the default five-linear-layer network.
pub const DEFAULT_HIDDEN: [usize; 4] = [64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Softplus,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub dim: usize,
    pub activation: Activation,
}

impl HeadSpec {
    pub fn new(name: &str, dim: usize, activation: Activation) -> Self {
        HeadSpec {
            name: name.to_string(),
            dim,
            activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub heads: Vec<HeadSpec>,
    pub dropout_prob: f64,
}

impl MlpSpec {
    /// Default trunk with the given heads.
    pub fn with_heads(input_dim: usize, heads: Vec<HeadSpec>) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
            heads,
            dropout_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim must be positive"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        if self.heads.is_empty() {
            return Err(Error::config("network needs at least one head"));
        }
        if self.hidden_dims.is_empty() && self.heads.len() > 1 {
            return Err(Error::config("multiple heads need at least one shared hidden layer"));
        }
        if let Some(h) = self.heads.iter().find(|h| h.dim == 0) {
            return Err(Error::config(format!("head '{}' has zero width", h.name)));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::config(format!(
                "dropout probability {} outside [0, 1)",
                self.dropout_prob
            )));
        }
        Ok(())
    }

    /// Number of linear layers on the path from input to any one head.
    pub fn depth(&self) -> usize {
        self.hidden_dims.len() + 1
    }
}

/// ReLU trunk plus linear heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: ParamSet,
}

fn layer_name(i: usize) -> String {
    format!("hidden{i}")
}

impl Mlp {
    /// He-normal weights (variance 2/fan_in), zero biases.
    pub fn build(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(seed, &[]);
        let mut params = ParamSet::new();
        let mut init = |params: &mut ParamSet, name: String, fan_in: usize, fan_out: usize| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std for positive fan_in");
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| normal.sample(&mut rng));
            params.push(format!("{name}.weight"), w);
            params.push(format!("{name}.bias"), Array2::zeros((1, fan_out)));
        };
        let mut fan_in = spec.input_dim;
        for (i, &h) in spec.hidden_dims.iter().enumerate() {
            init(&mut params, layer_name(i), fan_in, h);
            fan_in = h;
        }
        for head in &spec.heads {
            init(&mut params, format!("head.{}", head.name), fan_in, head.dim);
        }
        Ok(Mlp { spec, params })
    }

    /// Reassembles a network from stored parameters, checking shapes.
    pub fn from_parts(spec: MlpSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        let reference = Mlp::build(spec.clone(), 0)?;
        if reference.params.len() != params.len() {
            return Err(Error::config(format!(
                "expected {} parameters, found {}",
                reference.params.len(),
                params.len()
            )));
        }
        for (want, got) in reference.params.iter().zip(params.iter()) {
            if want.name != got.name || want.value.dim() != got.value.dim() {
                return Err(Error::config(format!(
                    "parameter mismatch: expected {} {:?}, found {} {:?}",
                    want.name,
                    want.value.dim(),
                    got.name,
                    got.value.dim()
                )));
            }
        }
        Ok(Mlp { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn weight_matrix_count(&self) -> usize {
        self.params.iter().filter(|p| p.name.ends_with(".weight")).count()
    }

    /// Records a forward pass on `tape` and returns one node per head.
    ///
    /// With `trainable == false` every parameter enters as a constant, so
    /// nothing upstream of the outputs receives gradient. Dropout is applied
    /// after each hidden activation only when an RNG is supplied.
    pub fn forward(
        &self,
        tape: &Tape,
        x: Var,
        trainable: bool,
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<Vec<Var>> {
        let (_, cols) = tape.shape(x);
        if cols != self.spec.input_dim {
            return Err(Error::Shape {
                op: "forward",
                lhs: tape.shape(x),
                rhs: (self.spec.input_dim, 0),
            });
        }
        let bind = |i: usize| {
            if trainable {
                tape.param(&self.params, i)
            } else {
                tape.constant(self.params[i].value.clone())
            }
        };
        let mut h = x;
        let mut idx = 0;
        for layer in 0..self.spec.hidden_dims.len() {
            let w = bind(idx);
            let b = bind(idx + 1);
            idx += 2;
            h = tape.relu(tape.add_row(tape.matmul(h, w)?, b)?);
            if let Some(rng) = dropout.as_deref_mut() {
                h = apply_dropout(tape, h, self.spec.dropout_prob, rng)?;
            }
            if !tape_is_finite(tape, h) {
                return Err(Error::NonFinite(layer_name(layer)));
            }
        }
        let mut outputs = Vec::with_capacity(self.spec.heads.len());
        for head in &self.spec.heads {
            let w = bind(idx);
            let b = bind(idx + 1);
            idx += 2;
            let z = tape.add_row(tape.matmul(h, w)?, b)?;
            let out = match head.activation {
                Activation::Linear => z,
                Activation::Softplus => tape.softplus(z),
                Activation::Relu => tape.relu(z),
            };
            if !tape_is_finite(tape, out) {
                return Err(Error::NonFinite(format!("head.{}", head.name)));
            }
            outputs.push(out);
        }
        Ok(outputs)
    }

    /// Plain evaluation; returns one matrix per head.
    pub fn evaluate(&self, x: &Matrix, dropout: Option<&mut dyn RngCore>) -> Result<Vec<Matrix>> {
        let tape = Tape::new();
        let input = tape.constant(x.clone());
        let outs = self.forward(&tape, input, false, dropout)?;
        Ok(outs.into_iter().map(|v| tape.value(v)).collect())
    }
}

fn tape_is_finite(tape: &Tape, v: Var) -> bool {
    tape.value(v).iter().all(|x| x.is_finite())
}

fn apply_dropout(tape: &Tape, h: Var, p: f64, rng: &mut dyn RngCore) -> Result<Var> {
    if p == 0.0 {
        return Ok(h);
    }
    let keep = 1.0 / (1.0 - p);
    let (r, c) = tape.shape(h);
    let mask = Array2::from_shape_fn((r, c), |_| if rng.random::<f64>() < p { 0.0 } else { keep });
    let m = tape.constant(mask);
    tape.mul(h, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMode {
    /// Mean plus log-variance heads.
    SigmaFit,
    /// Mean plus lower / upper quantile heads.
    IqrFit,
    /// Mean only.
    Plain,
}

impl MeanMode {
    pub fn name(self) -> &'static str {
        match self {
            MeanMode::SigmaFit => "sigma_fit",
            MeanMode::IqrFit => "iqr_fit",
            MeanMode::Plain => "plain",
        }
    }

    fn heads(self) -> Vec<HeadSpec> {
        let mut heads = vec![HeadSpec::new("y_hat", 1, Activation::Linear)];
        match self {
            MeanMode::SigmaFit => heads.push(HeadSpec::new("log_sigma_sq", 1, Activation::Linear)),
            MeanMode::IqrFit => {
                heads.push(HeadSpec::new("q_low", 1, Activation::Linear));
                heads.push(HeadSpec::new("q_high", 1, Activation::Linear));
            }
            MeanMode::Plain => {}
        }
        heads
    }
}

impl fmt::Display for MeanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Output nodes of a mean-estimator forward pass.
#[derive(Debug, Clone, Copy)]
pub struct MeanHeads {
    pub y_hat: Var,
    pub log_sigma_sq: Option<Var>,
    pub q_low: Option<Var>,
    pub q_high: Option<Var>,
}

/// Batch of mean-estimator outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPrediction {
    pub y_hat: Vec<f64>,
    /// `exp(0.5 * log_sigma_sq)`, sigma_fit mode only.
    pub sigma: Option<Vec<f64>>,
    pub q_low: Option<Vec<f64>>,
    pub q_high: Option<Vec<f64>>,
}

/// The mean estimator (parameters Θ).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEstimator {
    net: Mlp,
    mode: MeanMode,
}

impl MeanEstimator {
    pub fn spec_for(input_dim: usize, hidden_dims: &[usize], mode: MeanMode, dropout_prob: f64) -> MlpSpec {
        MlpSpec {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            heads: mode.heads(),
            dropout_prob,
        }
    }

    pub fn new(input_dim: usize, hidden_dims: &[usize], mode: MeanMode, dropout_prob: f64, seed: u64) -> Result<Self> {
        let spec = Self::spec_for(input_dim, hidden_dims, mode, dropout_prob);
        Ok(MeanEstimator {
            net: Mlp::build(spec, seed)?,
            mode,
        })
    }

    pub fn from_net(net: Mlp, mode: MeanMode) -> Result<Self> {
        let want: Vec<_> = mode.heads();
        if net.spec().heads != want {
            return Err(Error::config(format!("network heads do not match {mode} mode")));
        }
        Ok(MeanEstimator { net, mode })
    }

    pub fn mode(&self) -> MeanMode {
        self.mode
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn params(&self) -> &ParamSet {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        self.net.params_mut()
    }

    pub fn forward(
        &self,
        tape: &Tape,
        x: Var,
        trainable: bool,
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<MeanHeads> {
        let outs = self.net.forward(tape, x, trainable, dropout)?;
        Ok(match self.mode {
            MeanMode::SigmaFit => MeanHeads {
                y_hat: outs[0],
                log_sigma_sq: Some(outs[1]),
                q_low: None,
                q_high: None,
            },
            MeanMode::IqrFit => MeanHeads {
                y_hat: outs[0],
                log_sigma_sq: None,
                q_low: Some(outs[1]),
                q_high: Some(outs[2]),
            },
            MeanMode::Plain => MeanHeads {
                y_hat: outs[0],
                log_sigma_sq: None,
                q_low: None,
                q_high: None,
            },
        })
    }

    /// Predicts every row of `x`. Dropout is active iff `dropout` is `Some`.
    pub fn predict_mean(&self, x: &Matrix, dropout: Option<&mut dyn RngCore>) -> Result<MeanPrediction> {
        let outs = self.net.evaluate(x, dropout)?;
        let col = |m: &Matrix| m.column(0).to_vec();
        let y_hat = col(&outs[0]);
        Ok(match self.mode {
            MeanMode::SigmaFit => MeanPrediction {
                y_hat,
                sigma: Some(outs[1].column(0).iter().map(|l| (0.5 * l).exp()).collect()),
                q_low: None,
                q_high: None,
            },
            MeanMode::IqrFit => MeanPrediction {
                y_hat,
                sigma: None,
                q_low: Some(col(&outs[1])),
                q_high: Some(col(&outs[2])),
            },
            MeanMode::Plain => MeanPrediction {
                y_hat,
                sigma: None,
                q_low: None,
                q_high: None,
            },
        })
    }
}

/// The interval estimator (parameters Φ) with softplus width heads.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalEstimator {
    net: Mlp,
}

impl IntervalEstimator {
    pub fn spec_for(input_dim: usize, hidden_dims: &[usize]) -> MlpSpec {
        MlpSpec {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            heads: vec![
                HeadSpec::new("delta_low", 1, Activation::Softplus),
                HeadSpec::new("delta_up", 1, Activation::Softplus),
            ],
            dropout_prob: 0.0,
        }
    }

    pub fn new(input_dim: usize, hidden_dims: &[usize], seed: u64) -> Result<Self> {
        Ok(IntervalEstimator {
            net: Mlp::build(Self::spec_for(input_dim, hidden_dims), seed)?,
        })
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.spec().heads != Self::spec_for(1, &[]).heads {
            return Err(Error::config("network heads do not match an interval estimator"));
        }
        Ok(IntervalEstimator { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn params(&self) -> &ParamSet {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        self.net.params_mut()
    }

    /// Returns `(delta_low, delta_up)` nodes.
    pub fn forward(&self, tape: &Tape, x: Var, trainable: bool) -> Result<(Var, Var)> {
        let outs = self.net.forward(tape, x, trainable, None)?;
        Ok((outs[0], outs[1]))
    }

    pub fn predict_interval(&self, x: &Matrix) -> Result<IntervalBatch> {
        let outs = self.net.evaluate(x, None)?;
        Ok(IntervalBatch::new(
            outs[0].column(0).to_vec(),
            outs[1].column(0).to_vec(),
        ))
    }
}

/// Uniform inputs in [-2, 2); handy for shape and property checks.
pub fn random_inputs(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_depth_is_five_linear_layers() {
        let spec = MlpSpec::with_heads(13, vec![HeadSpec::new("y", 1, Activation::Linear)]);
        let net = Mlp::build(spec.clone(), 3).unwrap();
        assert_eq!(spec.depth(), 5);
        assert_eq!(net.weight_matrix_count(), 5);
    }

    #[test]
    fn build_is_deterministic() {
        let spec = MeanEstimator::spec_for(3, &[8, 8], MeanMode::IqrFit, 0.0);
        let a = Mlp::build(spec.clone(), 11).unwrap();
        let b = Mlp::build(spec.clone(), 11).unwrap();
        let c = Mlp::build(spec, 12).unwrap();
        assert!(a.params().bitwise_eq(b.params()));
        assert!(!a.params().bitwise_eq(c.params()));
    }

    #[test]
    fn invalid_specs_rejected() {
        let two_heads = MlpSpec {
            input_dim: 2,
            hidden_dims: vec![],
            heads: MeanMode::SigmaFit.heads(),
            dropout_prob: 0.0,
        };
        assert!(Mlp::build(two_heads, 0).is_err());
        let single = MlpSpec {
            input_dim: 2,
            hidden_dims: vec![],
            heads: MeanMode::Plain.heads(),
            dropout_prob: 0.0,
        };
        assert!(Mlp::build(single, 0).is_ok());
        let bad_dropout = MeanEstimator::spec_for(2, &[4], MeanMode::Plain, 1.0);
        assert!(Mlp::build(bad_dropout, 0).is_err());
    }

    #[test]
    fn boston_shaped_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_inputs(4, 13, &mut rng);
        for mode in [MeanMode::SigmaFit, MeanMode::IqrFit, MeanMode::Plain] {
            let f = MeanEstimator::new(13, &DEFAULT_HIDDEN, mode, 0.0, 1).unwrap();
            let outs = f.net().evaluate(&x, None).unwrap();
            assert!(outs.iter().all(|o| o.dim() == (4, 1)));
        }
        let i = IntervalEstimator::new(13, &DEFAULT_HIDDEN, 2).unwrap();
        assert_eq!(i.predict_interval(&x).unwrap().len(), 4);
    }

    #[test]
    fn wrong_input_width_is_an_error() {
        let f = MeanEstimator::new(3, &[4], MeanMode::Plain, 0.0, 1).unwrap();
        assert!(f.predict_mean(&Array2::zeros((2, 4)), None).is_err());
    }

    #[test]
    fn nan_input_names_layer() {
        let f = MeanEstimator::new(2, &[4, 4], MeanMode::Plain, 0.0, 1).unwrap();
        let mut x = Array2::zeros((2, 2));
        x[[0, 0]] = f64::NAN;
        match f.predict_mean(&x, None) {
            Err(Error::NonFinite(layer)) => assert_eq!(layer, "hidden0"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn zero_dropout_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_inputs(16, 3, &mut rng);
        let f = MeanEstimator::new(3, &[8, 8], MeanMode::Plain, 0.0, 1).unwrap();
        let plain = f.predict_mean(&x, None).unwrap();
        let dropped = f.predict_mean(&x, Some(&mut rng)).unwrap();
        assert_eq!(plain, dropped);
    }

    #[test]
    fn active_dropout_is_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_inputs(100, 3, &mut rng);
        let f = MeanEstimator::new(3, &[16, 16], MeanMode::Plain, 0.5, 1).unwrap();
        let a = f.predict_mean(&x, Some(&mut rng)).unwrap();
        let b = f.predict_mean(&x, Some(&mut rng)).unwrap();
        assert!(a.y_hat.iter().zip(&b.y_hat).any(|(p, q)| p != q));
    }

    #[test]
    fn sigma_is_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_inputs(1000, 2, &mut rng);
        let f = MeanEstimator::new(2, &[16, 16], MeanMode::SigmaFit, 0.0, 9).unwrap();
        let p = f.predict_mean(&x, None).unwrap();
        assert!(p.sigma.unwrap().iter().all(|&s| s > 0.0));
    }

    #[test]
    fn interval_widths_nonnegative_and_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_inputs(200, 3, &mut rng);
        let i = IntervalEstimator::new(3, &[8, 8], 3).unwrap();
        let iv = i.predict_interval(&x).unwrap();
        assert!(iv.delta_low.iter().chain(&iv.delta_up).all(|&d| d >= 0.0));
        for (k, w) in iv.widths().iter().enumerate() {
            assert_eq!(*w, iv.delta_low[k] + iv.delta_up[k]);
        }
    }

    #[test]
    fn zero_weight_head_gives_softplus_of_bias() {
        let mut i = IntervalEstimator::new(3, &[8], 3).unwrap();
        let params = i.params_mut();
        for k in 0..params.len() {
            let name = params[k].name.clone();
            if name.starts_with("head.") && name.ends_with(".weight") {
                params[k].value.fill(0.0);
            }
            if name == "head.delta_low.bias" {
                params[k].value.fill(0.3);
            }
            if name == "head.delta_up.bias" {
                params[k].value.fill(-1.2);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let iv = i.predict_interval(&random_inputs(10, 3, &mut rng)).unwrap();
        let sp = |x: f64| (1.0 + x.exp()).ln();
        for k in 0..10 {
            assert!((iv.delta_low[k] - sp(0.3)).abs() < 1e-15);
            assert!((iv.delta_up[k] - sp(-1.2)).abs() < 1e-15);
        }
    }
}

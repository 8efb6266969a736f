//! Plain-text model checkpoints.
//!
//! Layout, one record per line:
//!
//! ```text
//! umatch-checkpoint 1
//! meta {"method":"sigma_fit","alpha":0.9,...}
//! net mean sigma_fit
//! spec {"input_dim":13,...}
//! param hidden0.weight 13 64 <values...>
//! ...
//! net interval -
//! ...
//! end
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a reload is
//! bitwise identical.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamSet;
use crate::baselines::{BaselineConfig, BaselineModel};
use crate::data::{FeatureScaler, TargetTransform};
use crate::networks::{IntervalEstimator, MeanEstimator, MeanMode, Mlp, MlpSpec};
use crate::{Error, Result};

const MAGIC: &str = "umatch-checkpoint 1";

/// Everything needed to reapply a trained model to raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub method: String,
    pub alpha: f64,
    pub seed: u64,
    pub target_transform: TargetTransform,
    pub scaler: FeatureScaler,
    pub feature_names: Vec<String>,
    pub target_name: String,
    #[serde(default)]
    pub baseline: Option<BaselineConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Role {
    Mean(MeanMode),
    Interval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub nets: Vec<(Role, Mlp)>,
}

fn mode_from_name(s: &str) -> Option<MeanMode> {
    [MeanMode::SigmaFit, MeanMode::IqrFit, MeanMode::Plain]
        .into_iter()
        .find(|m| m.name() == s)
}

impl Checkpoint {
    pub fn mean_estimator(&self) -> Result<MeanEstimator> {
        self.nets
            .iter()
            .find_map(|(r, net)| match r {
                Role::Mean(mode) => Some(MeanEstimator::from_net(net.clone(), *mode)),
                Role::Interval => None,
            })
            .unwrap_or_else(|| {
                Err(Error::Checkpoint {
                    line: 0,
                    reason: "no mean network".into(),
                })
            })
    }

    pub fn interval_estimator(&self) -> Result<Option<IntervalEstimator>> {
        self.nets
            .iter()
            .find(|(r, _)| *r == Role::Interval)
            .map(|(_, net)| IntervalEstimator::from_net(net.clone()))
            .transpose()
    }

    pub fn baseline_model(&self) -> Result<Option<BaselineModel>> {
        let Some(config) = self.meta.baseline.clone() else {
            return Ok(None);
        };
        Ok(Some(BaselineModel {
            config,
            mean: self.mean_estimator()?,
            seed: self.meta.seed,
        }))
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "meta {}", serde_json::to_string(&self.meta)?);
        for (role, net) in &self.nets {
            match role {
                Role::Mean(mode) => {
                    let _ = writeln!(out, "net mean {}", mode.name());
                }
                Role::Interval => out.push_str("net interval -\n"),
            }
            let _ = writeln!(out, "spec {}", serde_json::to_string(net.spec())?);
            for p in net.params().iter() {
                let (r, c) = p.value.dim();
                let _ = write!(out, "param {} {r} {c}", p.name);
                for v in p.value.iter() {
                    let _ = write!(out, " {v}");
                }
                out.push('\n');
            }
        }
        out.push_str("end\n");
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let bad = |line: usize, reason: &str| Error::Checkpoint {
            line,
            reason: reason.to_string(),
        };
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(bad(1, "missing header")),
        }
        let (n, meta_line) = lines.next().ok_or_else(|| bad(2, "missing meta"))?;
        let meta: CheckpointMeta = serde_json::from_str(
            meta_line
                .strip_prefix("meta ")
                .ok_or_else(|| bad(n, "expected meta record"))?,
        )
        .map_err(|e| bad(n, &e.to_string()))?;

        let mut nets = Vec::new();
        let mut current: Option<(Role, MlpSpec, ParamSet, usize)> = None;
        let finish = |cur: Option<(Role, MlpSpec, ParamSet, usize)>, nets: &mut Vec<(Role, Mlp)>| -> Result<()> {
            if let Some((role, spec, params, line)) = cur {
                let net = Mlp::from_parts(spec, params).map_err(|e| bad(line, &e.to_string()))?;
                nets.push((role, net));
            }
            Ok(())
        };
        let mut ended = false;
        for (n, line) in lines.by_ref() {
            let mut fields = line.split_ascii_whitespace();
            match fields.next() {
                Some("net") => {
                    finish(current.take(), &mut nets)?;
                    let role = match (fields.next(), fields.next()) {
                        (Some("mean"), Some(m)) => {
                            Role::Mean(mode_from_name(m).ok_or_else(|| bad(n, "unknown mean mode"))?)
                        }
                        (Some("interval"), _) => Role::Interval,
                        _ => return Err(bad(n, "bad net record")),
                    };
                    let (sn, spec_line) = lines_next_spec(text, n).ok_or_else(|| bad(n + 1, "missing spec"))?;
                    let spec: MlpSpec = serde_json::from_str(spec_line).map_err(|e| bad(sn, &e.to_string()))?;
                    current = Some((role, spec, ParamSet::new(), n));
                }
                Some("spec") => {} // consumed with its net record
                Some("param") => {
                    let Some((_, _, params, _)) = current.as_mut() else {
                        return Err(bad(n, "param before net"));
                    };
                    let name = fields.next().ok_or_else(|| bad(n, "missing name"))?;
                    let dim = |f: Option<&str>| f.and_then(|s| s.parse::<usize>().ok());
                    let (r, c) = match (dim(fields.next()), dim(fields.next())) {
                        (Some(r), Some(c)) => (r, c),
                        _ => return Err(bad(n, "bad shape")),
                    };
                    let values = fields
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| bad(n, &e.to_string()))?;
                    let value = Array2::from_shape_vec((r, c), values)
                        .map_err(|_| bad(n, "value count does not match shape"))?;
                    params.push(name, value);
                }
                Some("end") => {
                    ended = true;
                    break;
                }
                None => {}
                Some(other) => return Err(bad(n, &format!("unknown record '{other}'"))),
            }
        }
        if !ended {
            return Err(bad(text.lines().count(), "truncated (no end record)"));
        }
        finish(current.take(), &mut nets)?;
        Ok(Checkpoint { meta, nets })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// The line after `net_line` (1-based) must be its spec record.
fn lines_next_spec(text: &str, net_line: usize) -> Option<(usize, &str)> {
    text.lines()
        .nth(net_line)
        .and_then(|l| l.strip_prefix("spec "))
        .map(|s| (net_line + 1, s))
}

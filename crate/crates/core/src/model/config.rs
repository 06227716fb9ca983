use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which node set the independence penalty sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HsicScope {
    /// Training nodes only.
    Labeled,
    /// Every node in the graph.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Stacked disentangle layers with routing.
    Ipgdn,
    /// Stacked GCN propagation layers with the same head and loss.
    GcnBaseline,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ipgdn => "ipgdn",
            ModelKind::GcnBaseline => "gcn-baseline",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ipgdn" => Ok(ModelKind::Ipgdn),
            "gcn-baseline" => Ok(ModelKind::GcnBaseline),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Hyper-parameters of one training run.
///
/// The JSON form uses the keys `M`, `delta_f`, `T`, `L`, `lambda`,
/// `dropout`, `lr`, `weight_decay`, `epochs`, `patience`, `seed`,
/// `hsic_scope` and `model_kind`. Missing keys take their defaults; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of channels per layer.
    #[serde(rename = "M")]
    pub channels: usize,
    /// Width of each channel.
    pub delta_f: usize,
    /// Routing iterations per layer.
    #[serde(rename = "T")]
    pub iterations: usize,
    /// Number of stacked propagation layers.
    #[serde(rename = "L")]
    pub layers: usize,
    /// Weight of the independence penalty.
    pub lambda: f64,
    pub dropout: f64,
    pub lr: f64,
    /// Coefficient of the squared-norm penalty on weight matrices.
    pub weight_decay: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation accuracy.
    pub patience: usize,
    pub seed: u64,
    pub hsic_scope: HsicScope,
    pub model_kind: ModelKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 4,
            delta_f: 16,
            iterations: 7,
            layers: 2,
            lambda: 5e-6,
            dropout: 0.35,
            lr: 0.01,
            weight_decay: 5e-4,
            epochs: 1000,
            patience: 100,
            seed: 0,
            hsic_scope: HsicScope::Labeled,
            model_kind: ModelKind::Ipgdn,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(1..=6).contains(&self.layers) {
            return fail(format!("L must lie in 1..=6, got {}", self.layers));
        }
        if self.channels == 0 {
            return fail("M must be at least 1".into());
        }
        if self.delta_f == 0 {
            return fail("delta_f must be at least 1".into());
        }
        if self.iterations == 0 {
            return fail("T must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.lambda > 0.0 && self.channels > 1 && self.delta_f < 2 {
            return fail("the independence penalty needs delta_f >= 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be finite and > 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be finite and >= 0, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        Ok(())
    }

    /// Width of every hidden representation, `M · delta_f`.
    pub fn hidden_width(&self) -> usize {
        self.channels * self.delta_f
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Sets a numeric field by its JSON key, for parameter sweeps.
    pub fn set_by_name(&mut self, name: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{name} needs a non-negative integer, got {v}")))
            }
        };
        match name {
            "lambda" => self.lambda = value,
            "dropout" => self.dropout = value,
            "lr" => self.lr = value,
            "weight_decay" => self.weight_decay = value,
            "M" => self.channels = as_count(value)?,
            "delta_f" => self.delta_f = as_count(value)?,
            "T" => self.iterations = as_count(value)?,
            "L" => self.layers = as_count(value)?,
            "epochs" => self.epochs = as_count(value)?,
            "patience" => self.patience = as_count(value)?,
            other => return Err(Error::Config(format!("cannot sweep unknown parameter {other:?}"))),
        }
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"M\":4") && text.contains("\"T\":7"), "{text}");
        assert_eq!(ModelConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ModelConfig::from_json(r#"{"M": 4, "lamda": 1e-6}"#).unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn range_checks() {
        for bad in [
            r#"{"L": 0}"#,
            r#"{"L": 7}"#,
            r#"{"lambda": -1}"#,
            r#"{"dropout": 1.0}"#,
            r#"{"T": 0}"#,
            r#"{"M": 0}"#,
        ] {
            assert!(matches!(ModelConfig::from_json(bad), Err(Error::Config(_))), "{bad}");
        }
        let cfg = ModelConfig::from_json(r#"{"model_kind": "gcn-baseline", "hsic_scope": "all"}"#).unwrap();
        assert_eq!(cfg.model_kind, ModelKind::GcnBaseline);
        assert_eq!(cfg.hsic_scope, HsicScope::All);
    }

    #[test]
    fn sweep_setter() {
        let mut cfg = ModelConfig::default();
        cfg.set_by_name("lambda", 1e-5).unwrap();
        assert_eq!(cfg.lambda, 1e-5);
        cfg.set_by_name("T", 3.0).unwrap();
        assert_eq!(cfg.iterations, 3);
        assert!(cfg.set_by_name("T", 2.5).is_err());
        assert!(cfg.set_by_name("bogus", 1.0).is_err());
    }
}

//! Run configuration.
//!
//! On disk the configuration is a TOML key-value file, one `key = value` per
//! line, `#` for comments. Missing keys take their defaults:
//!
//! ```toml
//! theta = 0.3          # containment threshold
//! tau = 1.0            # score temperature
//! alpha = 20.0         # negative-weight steepness
//! beta = 6.0           # negative-weight threshold
//! lambda = 0.1         # negative-loss balance
//! margin = 0.2         # HP ranking margin
//! lr = 0.001
//! batch_size = 32
//! epochs = 30
//! seed = 0
//! hidden_width = 64
//! negatives = "all"    # or "i3-only"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which images of sample `i` are scored against the prompts of sample `j`
/// as in-batch negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeImages {
    #[default]
    All,
    I3Only,
}

impl std::str::FromStr for NegativeImages {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(NegativeImages::All),
            "i3-only" => Ok(NegativeImages::I3Only),
            other => Err(Error::InvalidConfig(format!(
                "negatives must be \"all\" or \"i3-only\", got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub theta: f64,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub margin: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_width: usize,
    pub negatives: NegativeImages,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            theta: 0.30,
            tau: 1.0,
            alpha: 20.0,
            beta: 6.0,
            lambda: 0.1,
            margin: 0.2,
            lr: 1e-3,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            hidden_width: 64,
            negatives: NegativeImages::All,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::NonPositiveThreshold(self.theta));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::NonPositiveTemperature(self.tau));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be non-negative, got {}", self.lr));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.hidden_width == 0 {
            return bad("batch_size, epochs and hidden_width must be positive".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("RunConfig always serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

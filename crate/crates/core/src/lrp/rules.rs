use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::autonet::{Layer, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleKind {
    Basic,
    Epsilon,
    Gamma,
    ZPlus,
    WSquare,
    ZBox,
    Passthrough,
}

impl RuleKind {
    pub const ALL: [RuleKind; 7] = [
        RuleKind::Basic,
        RuleKind::Epsilon,
        RuleKind::Gamma,
        RuleKind::ZPlus,
        RuleKind::WSquare,
        RuleKind::ZBox,
        RuleKind::Passthrough,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Basic => "basic",
            RuleKind::Epsilon => "epsilon",
            RuleKind::Gamma => "gamma",
            RuleKind::ZPlus => "zplus",
            RuleKind::WSquare => "wsq",
            RuleKind::ZBox => "zbox",
            RuleKind::Passthrough => "passthrough",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleKind::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown relevance rule `{s}`")))
    }
}

/// Input domain for the z-box rule.
#[derive(Debug, Clone, PartialEq)]
pub enum InputBounds {
    Uniform { low: f64, high: f64 },
    PerFeature { low: Tensor, high: Tensor },
}

impl InputBounds {
    /// Expands the bounds to `n` features, checking `low ≤ high`.
    pub fn resolve(&self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let (low, high) = match self {
            InputBounds::Uniform { low, high } => (vec![*low; n], vec![*high; n]),
            InputBounds::PerFeature { low, high } => {
                if low.len() != n || high.len() != n {
                    return Err(Error::Config(format!(
                        "z-box bounds cover {}/{} features, layer input has {n}",
                        low.len(),
                        high.len()
                    )));
                }
                (low.data().to_vec(), high.data().to_vec())
            }
        };
        if let Some(i) = (0..n).find(|&i| !(low[i] <= high[i])) {
            return Err(Error::Config(format!(
                "z-box bounds invalid at feature {i}: low {} > high {}",
                low[i], high[i]
            )));
        }
        Ok((low, high))
    }
}

/// Which rule to apply at each dense or convolutional layer, plus the rule
/// hyperparameters. ReLU and upsampling layers need no entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleConfig {
    pub rules: BTreeMap<usize, RuleKind>,
    pub epsilon: f64,
    pub gamma: f64,
    pub input_bounds: Option<InputBounds>,
    /// Exclude the receiving neuron from its own denominator
    /// (`Σ_{h≠i}` instead of `Σ_h`). Dense layers only.
    pub strict_eq5_denominator: bool,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            rules: BTreeMap::new(),
            epsilon: 0.01,
            gamma: 0.25,
            input_bounds: None,
            strict_eq5_denominator: false,
        }
    }
}

impl RuleConfig {
    pub fn with_rule(mut self, layer: usize, rule: RuleKind) -> Self {
        self.rules.insert(layer, rule);
        self
    }

    pub fn with_bounds(mut self, low: f64, high: f64) -> Self {
        self.input_bounds = Some(InputBounds::Uniform { low, high });
        self
    }

    /// `first` on the first weighted layer and `rest` on every other one.
    pub fn uniform(model: &Model, first: RuleKind, rest: RuleKind) -> Self {
        let mut cfg = Self::default();
        let mut seen = false;
        for (i, layer) in model.layers().iter().enumerate() {
            if layer.is_linear() {
                cfg.rules.insert(i, if seen { rest } else { first });
                seen = true;
            }
        }
        cfg
    }

    /// Squared-weight rule on the first dense layer, z⁺ elsewhere.
    pub fn tabular_default(model: &Model) -> Self {
        Self::uniform(model, RuleKind::WSquare, RuleKind::ZPlus)
    }

    /// z-box with pixel bounds `[0, 1]` on the first convolution, z⁺ elsewhere.
    pub fn image_default(model: &Model) -> Self {
        Self::uniform(model, RuleKind::ZBox, RuleKind::ZPlus).with_bounds(0.0, 1.0)
    }

    /// Rule for a layer; weighted layers must be configured explicitly.
    pub fn rule_for(&self, index: usize, layer: &Layer) -> Result<RuleKind> {
        if !layer.is_linear() {
            return Ok(RuleKind::Passthrough);
        }
        match self.rules.get(&index) {
            Some(RuleKind::Passthrough) | None => Err(Error::Config(format!(
                "layer {index} ({}) has no relevance rule configured",
                layer.name()
            ))),
            Some(&rule) => Ok(rule),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be ≥ 0, got {}", self.epsilon)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be ≥ 0, got {}", self.gamma)));
        }
        if let Some(InputBounds::Uniform { low, high }) = &self.input_bounds {
            if !(low <= high) {
                return Err(Error::Config(format!("z-box bounds invalid: {low} > {high}")));
            }
        }
        Ok(())
    }
}

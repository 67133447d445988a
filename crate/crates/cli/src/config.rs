//! Run configuration: a line-oriented `key = value` file with `#` comments.
//!
//! Every key has a default, unknown keys are rejected, and the effective
//! configuration is echoed verbatim into each run's manifest.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use lrpae_core::autonet::{LossKind, TrainConfig};
use lrpae_core::corruption::{AdversarialConfig, Strategy, ValidationConfig};
use lrpae_core::datagen::{DamageKind, ImageCounts, Manifest, SplitSizes};
use lrpae_core::lrp::{RuleConfig, RuleKind};
use lrpae_core::autonet::Model;

use crate::CliError;

/// Known keys and their defaults, in manifest order.
const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("dataset", "tabular"),
    ("data_dir", "data"),
    ("model_path", "model.lrpae"),
    ("out_dir", "out"),
    ("model_kind", "mlp"),
    ("bias", "true"),
    ("loss", "l2"),
    ("epochs", "30"),
    ("batch_size", "32"),
    ("learning_rate", "0.05"),
    ("momentum", "0.9"),
    ("tabular_train", "50000"),
    ("tabular_val", "5000"),
    ("tabular_test", "10000"),
    ("image_size", "64"),
    ("image_train", "2000"),
    ("image_val", "200"),
    ("image_test_per_kind", "100"),
    ("damage_kinds", "blob,scratch,misplace"),
    ("rule_first", "auto"),
    ("rule_rest", "zplus"),
    ("epsilon", "0.01"),
    ("gamma", "0.25"),
    ("zbox_low", "0"),
    ("zbox_high", "1"),
    ("strict_eq5_denominator", "false"),
    ("strategy", "null"),
    ("samples", "100"),
    ("threshold", "auto"),
    ("adv_theta", "1"),
    ("adv_alpha", "0.05"),
    ("adv_k", "10"),
    ("adv_max_iters", "500"),
    ("adv_seed_with_random", "true"),
    ("shap_nsamples", "1000"),
    ("shap_background", "100"),
    ("methods", "lrp-l2,lrp-l1,residual-l1,residual-l2,shap"),
    ("image_methods", "residual-l1,residual-l2,lrp-l1,lrp-l2,oracle,random"),
    ("heatmap_limit", "5"),
    ("explain_split", "test"),
    ("explain_index", "0"),
    ("bench_samples", "20"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Tabular,
    Images,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mlp,
    ConvDesk,
    ConvFull,
}

/// Attribution methods of the corruption benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lrp(LossKind),
    Residual(LossKind),
    Shap,
}

impl Method {
    pub fn name(self) -> String {
        match self {
            Method::Lrp(l) => format!("lrp-{l}"),
            Method::Residual(l) => format!("residual-{l}"),
            Method::Shap => "shap".into(),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lrp-l1" => Ok(Method::Lrp(LossKind::L1)),
            "lrp-l2" => Ok(Method::Lrp(LossKind::L2)),
            "residual-l1" => Ok(Method::Residual(LossKind::L1)),
            "residual-l2" => Ok(Method::Residual(LossKind::L2)),
            "shap" => Ok(Method::Shap),
            _ => Err(format!("unknown method `{s}`")),
        }
    }
}

/// Heatmap producers of the image benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageMethod {
    Lrp(LossKind),
    Residual(LossKind),
    /// The ground-truth mask itself.
    Oracle,
    /// Uniform noise.
    Random,
}

impl ImageMethod {
    pub fn name(self) -> String {
        match self {
            ImageMethod::Lrp(l) => format!("lrp-{l}"),
            ImageMethod::Residual(l) => format!("residual-{l}"),
            ImageMethod::Oracle => "oracle".into(),
            ImageMethod::Random => "random".into(),
        }
    }
}

impl FromStr for ImageMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(ImageMethod::Oracle),
            "random" => Ok(ImageMethod::Random),
            other => match other.parse::<Method>()? {
                Method::Lrp(l) => Ok(ImageMethod::Lrp(l)),
                Method::Residual(l) => Ok(ImageMethod::Residual(l)),
                Method::Shap => Err("shap is not an image method".into()),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    raw: Manifest,
    base: PathBuf,
    pub seed: u64,
    pub dataset: DatasetKind,
    pub model_kind: ModelKind,
    pub bias: bool,
    pub loss: LossKind,
    pub train: TrainConfig,
    pub tabular_sizes: SplitSizes,
    pub image_size: usize,
    pub image_counts: ImageCounts,
    pub damage_kinds: Vec<DamageKind>,
    pub rule_first: Option<RuleKind>,
    pub rule_rest: RuleKind,
    pub epsilon: f64,
    pub gamma: f64,
    pub zbox: (f64, f64),
    pub strict_eq5_denominator: bool,
    pub validation: ValidationConfig,
    pub shap_nsamples: usize,
    pub shap_background: usize,
    pub methods: Vec<Method>,
    pub image_methods: Vec<ImageMethod>,
    pub heatmap_limit: usize,
    pub explain_split: String,
    pub explain_index: usize,
    pub bench_samples: usize,
}

fn field<T: FromStr>(m: &Manifest, key: &str) -> Result<T, CliError> {
    let raw = m.get(key).unwrap_or_default();
    raw.parse()
        .map_err(|_| CliError::Usage(format!("config: invalid value `{raw}` for `{key}`")))
}

fn list<T: FromStr>(m: &Manifest, key: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    m.get(key)
        .unwrap_or_default()
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| CliError::Usage(format!("config `{key}`: {e}"))))
        .collect()
}

impl RunConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let given = Manifest::parse(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let mut raw = Manifest::new();
        for (k, v) in DEFAULTS {
            raw.set(k, v);
        }
        for (k, v) in given.entries() {
            if !DEFAULTS.iter().any(|(d, _)| d == k) {
                return Err(CliError::Usage(format!("config: unknown key `{k}`")));
            }
            raw.set(k, v);
        }
        Self::from_raw(raw, base.to_path_buf())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Applies command-line overrides.
    pub fn with_overrides(self, seed: Option<u64>, out: Option<&Path>) -> Result<Self, CliError> {
        let mut raw = self.raw;
        if let Some(s) = seed {
            raw.set("seed", s);
        }
        if let Some(o) = out {
            raw.set("out_dir", o.display());
        }
        Self::from_raw(raw, self.base)
    }

    fn from_raw(raw: Manifest, base: PathBuf) -> Result<Self, CliError> {
        let m = &raw;
        let seed: u64 = field(m, "seed")?;
        let dataset = match m.get("dataset") {
            Some("tabular") => DatasetKind::Tabular,
            Some("images") => DatasetKind::Images,
            other => return Err(CliError::Usage(format!("config: dataset must be tabular or images, got {other:?}"))),
        };
        let model_kind = match m.get("model_kind") {
            Some("mlp") => ModelKind::Mlp,
            Some("conv-desk") => ModelKind::ConvDesk,
            Some("conv-full") => ModelKind::ConvFull,
            other => {
                return Err(CliError::Usage(format!(
                    "config: model_kind must be mlp, conv-desk or conv-full, got {other:?}"
                )))
            }
        };
        let loss: LossKind = field(m, "loss")?;
        let train = TrainConfig {
            epochs: field(m, "epochs")?,
            batch_size: field(m, "batch_size")?,
            learning_rate: field(m, "learning_rate")?,
            momentum: field(m, "momentum")?,
            loss,
            seed,
        };
        let rule_first = match m.get("rule_first") {
            Some("auto") => None,
            _ => Some(field::<RuleKind>(m, "rule_first")?),
        };
        let strategy: Strategy = field(m, "strategy")?;
        let mut validation = ValidationConfig::new(strategy, field(m, "samples")?, seed);
        if m.get("threshold") != Some("auto") {
            validation.threshold = field(m, "threshold")?;
        }
        validation.adversarial = AdversarialConfig {
            theta: field(m, "adv_theta")?,
            alpha: field(m, "adv_alpha")?,
            k: field(m, "adv_k")?,
            max_iters: field(m, "adv_max_iters")?,
            seed_with_random: field(m, "adv_seed_with_random")?,
        };
        validation
            .validate()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let cfg = RunConfig {
            seed,
            dataset,
            model_kind,
            bias: field(m, "bias")?,
            loss,
            train,
            tabular_sizes: SplitSizes {
                train: field(m, "tabular_train")?,
                val: field(m, "tabular_val")?,
                test: field(m, "tabular_test")?,
            },
            image_size: field(m, "image_size")?,
            image_counts: ImageCounts {
                train: field(m, "image_train")?,
                val: field(m, "image_val")?,
                test_per_kind: field(m, "image_test_per_kind")?,
            },
            damage_kinds: list(m, "damage_kinds")?,
            rule_first,
            rule_rest: field(m, "rule_rest")?,
            epsilon: field(m, "epsilon")?,
            gamma: field(m, "gamma")?,
            zbox: (field(m, "zbox_low")?, field(m, "zbox_high")?),
            strict_eq5_denominator: field(m, "strict_eq5_denominator")?,
            validation,
            shap_nsamples: field(m, "shap_nsamples")?,
            shap_background: field(m, "shap_background")?,
            methods: list(m, "methods")?,
            image_methods: list(m, "image_methods")?,
            heatmap_limit: field(m, "heatmap_limit")?,
            explain_split: m.get("explain_split").unwrap_or_default().to_string(),
            explain_index: field(m, "explain_index")?,
            bench_samples: field(m, "bench_samples")?,
            raw,
            base,
        };
        if cfg.zbox.0 > cfg.zbox.1 {
            return Err(CliError::Usage("config: zbox_low must not exceed zbox_high".into()));
        }
        if !matches!(cfg.explain_split.as_str(), "train" | "val" | "test") {
            return Err(CliError::Usage("config: explain_split must be train, val or test".into()));
        }
        Ok(cfg)
    }

    /// The effective configuration, one `key = value` line per key.
    pub fn manifest(&self) -> &Manifest {
        &self.raw
    }

    fn path(&self, key: &str) -> PathBuf {
        self.base.join(self.raw.get(key).unwrap_or_default())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.path("data_dir")
    }

    pub fn model_path(&self) -> PathBuf {
        self.path("model_path")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.path("out_dir")
    }

    /// Rule assignment for `model`, falling back to the dataset's defaults.
    pub fn rules(&self, model: &Model) -> RuleConfig {
        let mut cfg = match (self.rule_first, self.dataset) {
            (Some(first), _) => RuleConfig::uniform(model, first, self.rule_rest),
            (None, DatasetKind::Tabular) => RuleConfig::uniform(model, RuleKind::WSquare, self.rule_rest),
            (None, DatasetKind::Images) => RuleConfig::uniform(model, RuleKind::ZBox, self.rule_rest),
        };
        cfg = cfg.with_bounds(self.zbox.0, self.zbox.1);
        cfg.epsilon = self.epsilon;
        cfg.gamma = self.gamma;
        cfg.strict_eq5_denominator = self.strict_eq5_denominator;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse("# comment\nseed = 4\nstrategy = random\n", Path::new("/tmp")).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.validation.threshold, 0.5);
        assert_eq!(cfg.methods.len(), 5);
        assert_eq!(cfg.data_dir(), Path::new("/tmp/data"));
        let cfg = cfg.with_overrides(Some(9), Some(Path::new("/x/y"))).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.out_dir(), Path::new("/x/y"));
        assert_eq!(cfg.manifest().get("seed"), Some("9"));
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(RunConfig::parse("colour = red\n", Path::new(".")), Err(CliError::Usage(_))));
        assert!(RunConfig::parse("epochs = many\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("threshold = 1.5\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("methods = lrp-l3\n", Path::new(".")).is_err());
    }
}

//! Train-run configuration: defaults, JSON config file, and flag overrides.

use std::path::Path;

use anchordepth::loss::LossWeights;
use anchordepth::model::train::{AnchorMode, TrainConfig};
use anchordepth::model::ModelVariant;
use anchordepth::pool::{DEFAULT_ANCHORS, DEFAULT_EMBED_DIM};
use anchordepth::repr::DEFAULT_TAPER_RATE;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// JSON config file for `anchordepth train`. Every training field is
/// optional; command-line flags override whatever the file sets. Unknown
/// keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub schema_version: u32,
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub seed: Option<u64>,
    pub log_every: Option<usize>,
    pub threads: Option<usize>,
    pub taper: Option<f64>,
    pub variant: Option<String>,
    pub embed_dim: Option<usize>,
    pub anchors: Option<Vec<f64>>,
    pub fixed_anchor: Option<f64>,
    pub weights: Option<WeightsFile>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub near: f64,
    pub far: f64,
    pub mask: f64,
}

pub fn load_train_file(path: &Path) -> Result<TrainFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let file: TrainFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing config file {}", path.display()))?;
    if file.schema_version != CONFIG_SCHEMA_VERSION {
        bail!(
            "config file {} has schema_version {}, this build supports {}",
            path.display(),
            file.schema_version,
            CONFIG_SCHEMA_VERSION
        );
    }
    Ok(file)
}

pub fn parse_variant(name: &str) -> Result<ModelVariant> {
    match name {
        "full" => Ok(ModelVariant::Full),
        "no-mask" => Ok(ModelVariant::NoMaskHead),
        other => bail!("unknown model variant {other:?} (expected \"full\" or \"no-mask\")"),
    }
}

pub fn variant_name(variant: ModelVariant) -> &'static str {
    match variant {
        ModelVariant::Full => "full",
        ModelVariant::NoMaskHead => "no-mask",
    }
}

/// A fully resolved training setup: defaults, overlaid with the config
/// file, overlaid with command-line flags.
#[derive(Debug, Clone)]
pub struct ResolvedTrain {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub log_every: usize,
    pub threads: usize,
    pub taper: f64,
    pub variant: ModelVariant,
    pub embed_dim: usize,
    pub anchors: Vec<f64>,
    pub fixed_anchor: Option<f64>,
    pub weights: WeightsFile,
}

impl Default for ResolvedTrain {
    fn default() -> Self {
        let base = TrainConfig::default();
        let w = LossWeights::default();
        Self {
            steps: base.steps,
            batch_size: base.batch_size,
            learning_rate: base.learning_rate,
            momentum: base.momentum,
            seed: base.seed,
            log_every: base.log_every,
            threads: base.threads,
            taper: DEFAULT_TAPER_RATE,
            variant: ModelVariant::Full,
            embed_dim: DEFAULT_EMBED_DIM,
            anchors: DEFAULT_ANCHORS.to_vec(),
            fixed_anchor: None,
            weights: WeightsFile { near: w.near, far: w.far, mask: w.mask },
        }
    }
}

impl ResolvedTrain {
    pub fn apply_file(&mut self, file: &TrainFile) -> Result<()> {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = file.$field.clone() {
                    self.$field = v;
                }
            };
        }
        take!(steps);
        take!(batch_size);
        take!(learning_rate);
        take!(momentum);
        take!(seed);
        take!(log_every);
        take!(threads);
        take!(taper);
        take!(embed_dim);
        take!(anchors);
        if let Some(v) = &file.variant {
            self.variant = parse_variant(v)?;
        }
        if let Some(v) = file.fixed_anchor {
            self.fixed_anchor = Some(v);
        }
        if let Some(w) = file.weights {
            self.weights = w;
        }
        Ok(())
    }

    pub fn to_train_config(&self) -> Result<TrainConfig> {
        let taper = anchordepth::repr::TaperRate::new(self.taper)?;
        Ok(TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weights: LossWeights {
                near: self.weights.near,
                far: self.weights.far,
                mask: self.weights.mask,
            },
            taper,
            seed: self.seed,
            log_every: self.log_every,
            threads: self.threads,
            anchor_mode: match self.fixed_anchor {
                Some(m) => AnchorMode::Fixed(m),
                None => AnchorMode::Sampled,
            },
        })
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::TuneConfig;
use crate::error::{Error, Result};
use crate::eval::MfBprConfig;
use crate::features::FeatureConfig;
use crate::model::TrainConfig;

/// The three evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Test split of the dataset the bundle was trained on.
    #[default]
    InDomain,
    /// Unseen half of the dataset whose seen half trained the bundle.
    ZeroShotInDomain,
    /// A different dataset altogether.
    ZeroShotCrossDomain,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::InDomain => "in_domain",
            Mode::ZeroShotInDomain => "zero_shot_in_domain",
            Mode::ZeroShotCrossDomain => "zero_shot_cross_domain",
        }
    }

    pub fn is_zero_shot(self) -> bool {
        self != Mode::InDomain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Column delimiter; inferred from the file extension when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<String>,
    /// Ratings below this are treated as non-interactions.
    pub rating_threshold: f64,
    pub has_header: bool,
    pub k_core: usize,
    /// Fraction of users and items in the seen half; no partition if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seen_fraction: Option<f64>,
    pub train_fraction: f64,
    /// Share of each user's fitting interactions held out for validation.
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            delimiter: None,
            rating_threshold: 3.0,
            has_header: false,
            k_core: 5,
            seen_fraction: None,
            train_fraction: 0.7,
            valid_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TrainFraction,
    SeenFraction,
    /// Feature dimension of every family at once.
    K,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TrainFraction => "train_fraction",
            SweepAxis::SeenFraction => "seen_fraction",
            SweepAxis::K => "k",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<SweepAxis>,
    pub values: Vec<f64>,
}

/// One experiment: preprocessing, features, training, tuning and
/// evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Evaluation repetitions, each sampling fresh negatives.
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub tune: TuneConfig,
    pub mfbpr: MfBprConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::default(),
            seeds: (0..5).collect(),
            data: DataConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            tune: TuneConfig::default(),
            mfbpr: MfBprConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one evaluation seed is required".into()));
        }
        let d = &self.data;
        if d.k_core == 0 {
            return Err(Error::Config("k_core must be at least 1".into()));
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if !(d.valid_fraction >= 0.0 && d.valid_fraction < 1.0) {
            return Err(Error::Config("valid_fraction must lie in [0, 1)".into()));
        }
        if let Some(s) = d.seen_fraction {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::Config("seen_fraction must lie in (0, 1)".into()));
            }
        }
        self.features.validate()?;
        self.train.validate()
    }

    /// Copy with one sweep axis set to `value`.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match axis {
            SweepAxis::TrainFraction => c.data.train_fraction = value,
            SweepAxis::SeenFraction => c.data.seen_fraction = Some(value),
            SweepAxis::K => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("k must be a positive integer, got {value}")));
                }
                let k = value as usize;
                let f = &mut c.features;
                f.k_activity = k;
                f.k_cooccur = k;
                f.k_interaction = k;
                f.k_co_size = None;
                f.k_co_density = None;
                f.k_int_size = None;
                f.k_int_density = None;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

//! Flat `key = value` benchmark configuration.
//!
//! Blank lines and everything after `#` are ignored. Keys, with defaults:
//!
//! ```text
//! dataset             = blobs          # or cifar10:PATH
//! model               = mlp            # or cnn
//! hidden              = 64,64          # mlp hidden widths
//! precision           = f32            # or f64
//! seed                = 0
//! n_per_class         = 200            # cifar10 samples kept per class
//! normalize           = true           # cifar10 per-channel normalization
//! augment             = true           # image datasets only, training split only
//! blobs_classes       = 3
//! blobs_per_class     = 600
//! blobs_dim           = 16
//! blobs_separation    = 2.0
//! blobs_spread        = 1.0
//! split_train         = 5
//! split_valid         = 1
//! batch_size          = 32
//! momentum            = 0.9
//! weight_decay        = 1e-4           # optimized scheme
//! conventional_weight_decay = 0
//! max_epochs          = 30             # per phase
//! patience            = 5
//! min_delta           = 1e-4
//! target_accuracy     = 0.9
//! lr1                 = 0.01
//! lr2                 = 0.001
//! sgdr_epochs         = 10
//! eta_min             = 0
//! cycle_epochs        = 1              # first cycle length, in epochs
//! cycle_mult          = 2              # phase-3 cycle multiplier
//! lr_initial          = 1e-4
//! lr_mid              = 1e-3
//! lr_final            = 1e-2
//! finder_lr_lo        = 1e-5
//! finder_lr_hi        = 10
//! finder_steps        = 100
//! finder_beta         = 0.98
//! finder_divergence   = 4
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::BlobsSpec;
use crate::error::{Error, Result};
use crate::finder::RangeTestConfig;
use crate::groups::LayerGroupRates;
use crate::nn::{Precision, TrainConfig};
use crate::schedule::CosineCycleConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Blobs(BlobsSpec),
    Cifar10 { path: PathBuf, n_per_class: usize },
}

impl DatasetSpec {
    /// Parses `blobs` or `cifar10:PATH`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "blobs" {
            return Ok(Self::Blobs(BlobsSpec::default()));
        }
        match s.strip_prefix("cifar10:") {
            Some(path) if !path.is_empty() => Ok(Self::Cifar10 {
                path: PathBuf::from(path),
                n_per_class: 200,
            }),
            _ => Err(Error::InvalidConfig(format!(
                "dataset must be `blobs` or `cifar10:PATH`, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Blobs(_) => f.write_str("blobs"),
            Self::Cifar10 { path, .. } => write!(f, "cifar10:{}", path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Mlp { hidden: Vec<usize> },
    Cnn,
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mlp" => Ok(Self::Mlp { hidden: vec![64, 64] }),
            "cnn" => Ok(Self::Cnn),
            other => Err(Error::InvalidConfig(format!("model must be `mlp` or `cnn`, got `{other}`"))),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mlp { .. } => f.write_str("mlp"),
            Self::Cnn => f.write_str("cnn"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// Annealing template: `t0` counts epochs and `eta_max` is replaced by the
    /// finder's suggestion at run time.
    pub schedule: CosineCycleConfig,
    pub rates: LayerGroupRates,
    pub finder: RangeTestConfig,
    pub target_accuracy: f64,
    pub lr1: f64,
    pub lr2: f64,
    pub conventional_weight_decay: f64,
    pub sgdr_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub split: (usize, usize),
    pub normalize: bool,
    pub augment: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Blobs(BlobsSpec::default()),
            model: ModelSpec::Mlp { hidden: vec![64, 64] },
            train: TrainConfig::default(),
            schedule: CosineCycleConfig {
                eta_max: 0.01,
                eta_min: 0.0,
                t0: 1,
                mult: 2,
            },
            rates: LayerGroupRates::default(),
            finder: RangeTestConfig::default(),
            target_accuracy: 0.9,
            lr1: 0.01,
            lr2: 0.001,
            conventional_weight_decay: 0.0,
            sgdr_epochs: 10,
            patience: 5,
            min_delta: 1e-4,
            split: (5, 1),
            normalize: true,
            augment: true,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("`{key}`: cannot parse `{value}`")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

impl BenchConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = text.parse()?;
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "dataset" => {
                // keep any sizes configured before the dataset line
                let n_per_class = match &self.dataset {
                    DatasetSpec::Cifar10 { n_per_class, .. } => *n_per_class,
                    DatasetSpec::Blobs(_) => 200,
                };
                let blobs = self.blobs();
                self.dataset = match DatasetSpec::parse(value)? {
                    DatasetSpec::Blobs(_) => DatasetSpec::Blobs(blobs),
                    DatasetSpec::Cifar10 { path, .. } => DatasetSpec::Cifar10 { path, n_per_class },
                };
            }
            "model" => {
                let hidden = match &self.model {
                    ModelSpec::Mlp { hidden } => hidden.clone(),
                    ModelSpec::Cnn => vec![64, 64],
                };
                self.model = match value.parse::<ModelSpec>()? {
                    ModelSpec::Mlp { .. } => ModelSpec::Mlp { hidden },
                    ModelSpec::Cnn => ModelSpec::Cnn,
                };
            }
            "hidden" => {
                let widths = value
                    .split(',')
                    .map(|w| num::<usize>("hidden", w.trim()))
                    .collect::<Result<Vec<_>>>()?;
                if let ModelSpec::Mlp { hidden } = &mut self.model {
                    *hidden = widths;
                } else {
                    return Err(Error::InvalidConfig("`hidden` only applies to model = mlp".into()));
                }
            }
            "precision" => {
                self.train.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(Error::InvalidConfig(format!("precision must be f32 or f64, got `{value}`"))),
                }
            }
            "seed" => self.train.seed = num(key, value)?,
            "n_per_class" => match &mut self.dataset {
                DatasetSpec::Cifar10 { n_per_class, .. } => *n_per_class = num(key, value)?,
                DatasetSpec::Blobs(_) => {
                    return Err(Error::InvalidConfig("`n_per_class` applies to cifar10; use blobs_per_class".into()))
                }
            },
            "normalize" => self.normalize = boolean(key, value)?,
            "augment" => self.augment = boolean(key, value)?,
            "blobs_classes" => self.blobs_mut(key)?.n_classes = num(key, value)?,
            "blobs_per_class" => self.blobs_mut(key)?.n_per_class = num(key, value)?,
            "blobs_dim" => self.blobs_mut(key)?.dim = num(key, value)?,
            "blobs_separation" => self.blobs_mut(key)?.separation = num(key, value)?,
            "blobs_spread" => self.blobs_mut(key)?.spread = num(key, value)?,
            "split_train" => self.split.0 = num(key, value)?,
            "split_valid" => self.split.1 = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "momentum" => self.train.momentum = num(key, value)?,
            "weight_decay" => self.train.weight_decay = num(key, value)?,
            "conventional_weight_decay" => self.conventional_weight_decay = num(key, value)?,
            "max_epochs" => self.train.max_epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "min_delta" => self.min_delta = num(key, value)?,
            "target_accuracy" => self.target_accuracy = num(key, value)?,
            "lr1" => self.lr1 = num(key, value)?,
            "lr2" => self.lr2 = num(key, value)?,
            "sgdr_epochs" => self.sgdr_epochs = num(key, value)?,
            "eta_min" => self.schedule.eta_min = num(key, value)?,
            "cycle_epochs" => self.schedule.t0 = num(key, value)?,
            "cycle_mult" => self.schedule.mult = num(key, value)?,
            "lr_initial" => self.rates.initial = num(key, value)?,
            "lr_mid" => self.rates.mid = num(key, value)?,
            "lr_final" => self.rates.last = num(key, value)?,
            "finder_lr_lo" => self.finder.lr_lo = num(key, value)?,
            "finder_lr_hi" => self.finder.lr_hi = num(key, value)?,
            "finder_steps" => self.finder.n_steps = num(key, value)?,
            "finder_beta" => self.finder.smoothing_beta = num(key, value)?,
            "finder_divergence" => self.finder.divergence_factor = num(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    fn blobs(&self) -> BlobsSpec {
        match &self.dataset {
            DatasetSpec::Blobs(spec) => *spec,
            DatasetSpec::Cifar10 { .. } => BlobsSpec::default(),
        }
    }

    fn blobs_mut(&mut self, key: &str) -> Result<&mut BlobsSpec> {
        match &mut self.dataset {
            DatasetSpec::Blobs(spec) => Ok(spec),
            DatasetSpec::Cifar10 { .. } => Err(Error::InvalidConfig(format!("`{key}` requires dataset = blobs"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.rates.validate()?;
        self.finder.validate()?;
        if !(self.target_accuracy > 0.0 && self.target_accuracy < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target_accuracy must be in (0, 1), got {}",
                self.target_accuracy
            )));
        }
        if !(self.lr2.is_finite() && self.lr2 > 0.0 && self.lr1 > self.lr2 && self.lr1.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need lr1 > lr2 > 0, got lr1={} lr2={}",
                self.lr1, self.lr2
            )));
        }
        if !(self.conventional_weight_decay.is_finite() && self.conventional_weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("conventional_weight_decay must be >= 0".into()));
        }
        if self.sgdr_epochs == 0 {
            return Err(Error::InvalidConfig("sgdr_epochs must be >= 1".into()));
        }
        if !(self.min_delta.is_finite() && self.min_delta >= 0.0) {
            return Err(Error::InvalidConfig("min_delta must be >= 0".into()));
        }
        if self.split.0 == 0 || self.split.1 == 0 {
            return Err(Error::InvalidConfig("split_train and split_valid must be >= 1".into()));
        }
        if self.schedule.t0 == 0 || self.schedule.mult == 0 {
            return Err(Error::InvalidConfig("cycle_epochs and cycle_mult must be >= 1".into()));
        }
        if !(self.schedule.eta_min.is_finite() && self.schedule.eta_min >= 0.0) {
            return Err(Error::InvalidConfig("eta_min must be >= 0".into()));
        }
        match (&self.model, &self.dataset) {
            (ModelSpec::Mlp { hidden }, _) if hidden.is_empty() || hidden.contains(&0) => {
                Err(Error::InvalidConfig("mlp needs at least one non-zero hidden width".into()))
            }
            (ModelSpec::Cnn, DatasetSpec::Blobs(_)) => {
                Err(Error::InvalidConfig("cnn needs an image dataset; use model = mlp with blobs".into()))
            }
            (_, DatasetSpec::Cifar10 { n_per_class: 0, .. }) => {
                Err(Error::InvalidConfig("n_per_class must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for BenchConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key, value)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {}", n + 1, strip_prefix(&e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::InvalidConfig(msg) => msg.clone(),
        other => other.to_string(),
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident, $what:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::config(format!(
                        concat!("unknown ", $what, " {:?} (expected one of: {})"),
                        s,
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

named_enum!(Model, "model" {
    Fnn => "fnn",
    Cnn => "cnn",
    Lstm => "lstm",
    Rnn => "rnn",
});

named_enum!(DatasetKind, "dataset" {
    Mnist => "mnist",
    Cifar10 => "cifar10",
    SynthSeq => "synth-seq",
    SynthImage => "synth-image",
    TokenizedFile => "tokenized-file",
});

named_enum!(OptimizerKind, "optimizer" {
    Rls => "rls",
    RlsMomentum => "rls+m",
    RlsRegularized => "rls+r",
    RlsMomentumRegularized => "rls+mr",
    Sgd => "sgd",
    Adam => "adam",
    Hybrid => "hybrid",
});

named_enum!(LossMode, "loss" {
    Mse => "mse",
    Xent => "xent",
});

impl Model {
    pub fn is_sequence(self) -> bool {
        matches!(self, Model::Lstm | Model::Rnn)
    }

    /// Global gradient-norm clip used when none is configured.
    pub fn default_clip(self) -> f64 {
        if self.is_sequence() {
            1.0
        } else {
            5.0
        }
    }

    /// L1 factor of the regularized RLS variants when none is configured.
    pub fn default_gamma(self) -> f64 {
        if self.is_sequence() {
            1e-6
        } else {
            1e-5
        }
    }
}

impl OptimizerKind {
    pub fn momentum(self) -> bool {
        matches!(self, OptimizerKind::RlsMomentum | OptimizerKind::RlsMomentumRegularized)
    }

    pub fn regularized(self) -> bool {
        matches!(self, OptimizerKind::RlsRegularized | OptimizerKind::RlsMomentumRegularized)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: Model,
    pub dataset: DatasetKind,
    pub optimizer: OptimizerKind,
    pub loss: LossMode,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Seed of the synthetic data generators and token embeddings.
    pub data_seed: u64,
    pub lambda: f64,
    pub k: f64,
    /// Gradient scaling factor of the hidden layers; the output layer uses 1.
    pub eta: f64,
    /// Per-layer overrides of `eta`, keyed by parameter or layer name.
    pub eta_layers: BTreeMap<String, f64>,
    pub alpha: f64,
    pub gamma: Option<f64>,
    /// `Some(0.0)` disables clipping; `None` uses the model default.
    pub clip: Option<f64>,
    /// Learning rate of SGD and Adam layers.
    pub lr: Option<f64>,
    pub subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub full_data: bool,
    pub data_dir: Option<PathBuf>,
    /// Multiplier on every hidden width of the architecture.
    pub width: f64,
    pub seq_len: usize,
    pub vocab: usize,
    pub embed_dim: usize,
    pub per_step: bool,
    /// When false, `wall_ms` is written as 0 so runs compare byte for byte.
    pub wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: Model::Fnn,
            dataset: DatasetKind::Mnist,
            optimizer: OptimizerKind::Rls,
            loss: LossMode::Mse,
            batch_size: 128,
            epochs: 10,
            seed: 0,
            data_seed: 0,
            lambda: 1.0,
            k: 0.1,
            eta: 1.0,
            eta_layers: BTreeMap::new(),
            alpha: 0.5,
            gamma: None,
            clip: None,
            lr: None,
            subset: None,
            test_subset: None,
            full_data: false,
            data_dir: None,
            width: 1.0,
            seq_len: 8,
            vocab: 10,
            embed_dim: 16,
            per_step: false,
            wall_time: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        v => Err(Error::config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

impl ExperimentConfig {
    /// Sets one option by its command-line name (dashes or underscores).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "model" => self.model = v.parse()?,
            "dataset" => self.dataset = v.parse()?,
            "optimizer" => self.optimizer = v.parse()?,
            "loss" => self.loss = v.parse()?,
            "batch-size" => self.batch_size = parse(&key, v)?,
            "epochs" => self.epochs = parse(&key, v)?,
            "seed" => self.seed = parse(&key, v)?,
            "data-seed" => self.data_seed = parse(&key, v)?,
            "lambda" => self.lambda = parse(&key, v)?,
            "k" => self.k = parse(&key, v)?,
            "eta" => self.eta = parse(&key, v)?,
            "eta-layer" => {
                let (name, f) = v
                    .split_once('=')
                    .ok_or_else(|| Error::config(format!("eta-layer: expected NAME=F, got {v:?}")))?;
                self.eta_layers.insert(name.trim().to_string(), parse(&key, f)?);
            }
            "alpha" => self.alpha = parse(&key, v)?,
            "gamma" => self.gamma = Some(parse(&key, v)?),
            "clip" => self.clip = Some(parse(&key, v)?),
            "lr" => self.lr = Some(parse(&key, v)?),
            "subset" => self.subset = Some(parse(&key, v)?),
            "test-subset" => self.test_subset = Some(parse(&key, v)?),
            "full-data" => self.full_data = parse_bool(&key, v)?,
            "data-dir" => self.data_dir = Some(PathBuf::from(v)),
            "width" => self.width = parse(&key, v)?,
            "seq-len" => self.seq_len = parse(&key, v)?,
            "vocab" => self.vocab = parse(&key, v)?,
            "embed-dim" => self.embed_dim = parse(&key, v)?,
            "per-step" => self.per_step = parse_bool(&key, v)?,
            "wall-time" => self.wall_time = parse_bool(&key, v)?,
            _ => return Err(Error::config(format!("unknown option {key:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("{}:{}: expected key = value", path.display(), n + 1))
            })?;
            self.set(k, v)
                .map_err(|e| Error::config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        Ok(())
    }

    pub fn clip_norm(&self) -> Option<f64> {
        let c = self.clip.unwrap_or_else(|| self.model.default_clip());
        (c > 0.0).then_some(c)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or_else(|| self.model.default_gamma())
    }

    /// Training and test sample caps for this dataset.
    pub fn sample_caps(&self) -> (Option<usize>, Option<usize>) {
        let defaults = match self.dataset {
            DatasetKind::Mnist => (Some(10_000), Some(2_000)),
            DatasetKind::Cifar10 => (Some(8_000), Some(2_000)),
            DatasetKind::SynthSeq => (Some(4_000), Some(1_000)),
            DatasetKind::SynthImage => (Some(2_000), Some(500)),
            DatasetKind::TokenizedFile => (None, None),
        };
        let defaults = if self.full_data && !self.is_synthetic() { (None, None) } else { defaults };
        (self.subset.or(defaults.0), self.test_subset.or(defaults.1))
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self.dataset, DatasetKind::SynthSeq | DatasetKind::SynthImage)
    }

    pub fn scaled(&self, units: usize) -> usize {
        ((units as f64 * self.width).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::config(format!("width multiplier {} must be > 0", self.width)));
        }
        if self.clip.is_some_and(|c| !(c >= 0.0)) {
            return Err(Error::config("clip norm must be >= 0"));
        }
        if self.lr.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::config("learning rate must be > 0"));
        }
        if self.eta_layers.values().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::config("per-layer eta must be > 0"));
        }
        let seq_data = matches!(self.dataset, DatasetKind::SynthSeq | DatasetKind::TokenizedFile);
        if self.model.is_sequence() != seq_data {
            return Err(Error::config(format!(
                "model {} cannot be trained on dataset {}",
                self.model, self.dataset
            )));
        }
        if self.dataset == DatasetKind::TokenizedFile && self.data_dir.is_none() {
            return Err(Error::config("tokenized-file needs --data-dir"));
        }
        Ok(())
    }
}

//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use proboost::boosting::Variant;
use proboost::data::{Contamination, SplitSpec};
use proboost::ensemble::WeightScheme;
use proboost::nn::{LearnerMode, TrainConfig, DEFAULT_DROPOUT};
use proboost::uncertainty::UncertaintyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{require, CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[serde(alias = "deterministic")]
    Det,
    Vi,
    Mcd,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Det => "det",
            Family::Vi => "vi",
            Family::Mcd => "mcd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Dense,
    Lenet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub family: Family,
    #[serde(default = "default_architecture")]
    pub architecture: Architecture,
    /// Hidden widths of the dense stack.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Dropout rate for the `mcd` family.
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

impl LearnerConfig {
    pub fn mode(&self) -> LearnerMode {
        match self.family {
            Family::Det => LearnerMode::Deterministic,
            Family::Vi => LearnerMode::Variational,
            Family::Mcd => LearnerMode::McDropout { rate: self.dropout },
        }
    }
}

fn default_architecture() -> Architecture {
    Architecture::Dense
}

fn default_hidden() -> Vec<usize> {
    vec![32]
}

fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostSection {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    /// Every `V` to evaluate.
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// MC draws for scoring and prediction; the learner's default otherwise.
    #[serde(default)]
    pub mc_samples: Option<usize>,
}

impl Default for BoostSection {
    fn default() -> Self {
        BoostSection {
            variant: default_variant(),
            levels: default_levels(),
            tau: default_tau(),
            mc_samples: None,
        }
    }
}

impl BoostSection {
    pub fn uncertainty(&self, mode: LearnerMode) -> UncertaintyConfig {
        match self.mc_samples {
            Some(t) => UncertaintyConfig::new(t),
            None => UncertaintyConfig::for_mode(mode),
        }
    }
}

fn default_variant() -> Variant {
    Variant::Weighted
}

fn default_levels() -> Vec<usize> {
    vec![1, 2, 3, 4]
}

fn default_tau() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// IDX image pools, optionally contaminated, then split.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Donor pool for superimposition.
        #[serde(default)]
        donor_images: Option<PathBuf>,
        #[serde(default)]
        donor_labels: Option<PathBuf>,
        #[serde(default)]
        contamination: Option<Contamination>,
        #[serde(default = "default_split")]
        split: SplitSpec,
    },
    /// One labelled CSV, split by a stratified test fraction. A fraction of 0
    /// declares no test set; metrics are then taken on the training set.
    Csv {
        path: PathBuf,
        #[serde(default)]
        columns: Option<Vec<usize>>,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn default_split() -> SplitSpec {
    SplitSpec::Provider
}

fn default_test_fraction() -> f64 {
    0.3
}

impl DataConfig {
    pub fn has_test_set(&self) -> bool {
        match self {
            DataConfig::Idx { .. } => true,
            DataConfig::Csv { test_fraction, .. } => *test_fraction > 0.0,
        }
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            DataConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                donor_images,
                donor_labels,
                ..
            } => {
                let mut v = vec![train_images, train_labels, test_images, test_labels];
                v.extend(donor_images.as_mut());
                v.extend(donor_labels.as_mut());
                v
            }
            DataConfig::Csv { path, .. } => vec![path],
        }
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.clone()
            .paths_mut()
            .into_iter()
            .map(|p| p.clone())
            .collect()
    }
}

/// One experiment: a dataset recipe, a learner family, a boosting grid over
/// `V`, weighting schemes and repeated seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub data: DataConfig,
    pub learner: LearnerConfig,
    #[serde(default)]
    pub boost: BoostSection,
    #[serde(default = "default_weights")]
    pub weights: Vec<WeightScheme>,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_repetitions() -> usize {
    10
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_weights() -> Vec<WeightScheme> {
    vec![WeightScheme::Vw]
}

/// Command-line values that replace config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub repetitions: Option<usize>,
    pub variant: Option<Variant>,
    pub levels: Option<Vec<usize>>,
    pub family: Option<Family>,
    pub weights: Option<Vec<WeightScheme>>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses TOML text; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::invalid(e.to_string()))?;
        for p in cfg.data.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        require(path, "config file")?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.repetitions {
            self.repetitions = r;
        }
        if let Some(v) = o.variant {
            self.boost.variant = v;
        }
        if let Some(l) = &o.levels {
            self.boost.levels = l.clone();
        }
        if let Some(f) = o.family {
            self.learner.family = f;
        }
        if let Some(w) = &o.weights {
            self.weights = w.clone();
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(CliError::invalid("repetitions must be at least 1"));
        }
        if self.boost.levels.is_empty() || self.boost.levels.contains(&0) {
            return Err(CliError::invalid(
                "levels must be a non-empty list of positive integers",
            ));
        }
        if self.weights.is_empty() {
            return Err(CliError::invalid(
                "at least one weighting scheme is required",
            ));
        }
        if self.weights.contains(&WeightScheme::Vwo) && !self.data.has_test_set() {
            return Err(CliError::invalid("vwo weights need a declared test set"));
        }
        if self.boost.mc_samples == Some(0) {
            return Err(CliError::invalid("mc_samples must be positive"));
        }
        if self.learner.family == Family::Mcd
            && !(self.learner.dropout > 0.0 && self.learner.dropout < 1.0)
        {
            return Err(CliError::invalid(
                "mcd learners need a dropout rate in (0, 1)",
            ));
        }
        if self.learner.architecture == Architecture::Lenet && self.learner.family == Family::Vi {
            return Err(CliError::invalid(
                "the convolutional learner has no variational form",
            ));
        }
        match &self.data {
            DataConfig::Csv { test_fraction, .. } if !(0.0..1.0).contains(test_fraction) => {
                return Err(CliError::invalid("test_fraction must lie in [0, 1)"));
            }
            DataConfig::Idx {
                contamination: Some(c),
                donor_images,
                donor_labels,
                ..
            } => {
                c.validate()?;
                if matches!(c, Contamination::Superimpose { .. })
                    && (donor_images.is_none() || donor_labels.is_none())
                {
                    return Err(CliError::invalid(
                        "superimposition needs donor_images and donor_labels",
                    ));
                }
            }
            _ => {}
        }
        proboost::boosting::BoostConfig {
            tau: self.boost.tau,
            train: self.train.clone(),
            ..proboost::boosting::BoostConfig::new(self.boost.variant, 1, 0)
        }
        .validate()?;
        Ok(())
    }

    pub fn max_levels(&self) -> usize {
        self.boost.levels.iter().copied().max().unwrap_or(1)
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::transforms::{
    check_tau, div_value, oversample_step, top_set, undersample_step, weight_step,
};
use super::Dataset;
use crate::nn::{checkpoint, train, History, TrainConfig, WeakLearner};
use crate::numerics::PrngStream;
use crate::uncertainty::{epistemic_variance, mc_predict, UncertaintyConfig};
use crate::{Error, Result};

/// How each level reshapes the training set for the next one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Drop the least uncertain samples.
    #[serde(alias = "under")]
    Undersampled,
    /// Duplicate the most uncertain samples.
    #[serde(alias = "over")]
    Oversampled,
    /// Bump the loss weight of the most uncertain samples.
    Weighted,
}

impl Variant {
    pub fn short_name(&self) -> &'static str {
        match self {
            Variant::Undersampled => "under",
            Variant::Oversampled => "over",
            Variant::Weighted => "weighted",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub variant: Variant,
    pub levels: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Scoring draws; when absent the learner mode's default is used.
    #[serde(default)]
    pub uncertainty: Option<UncertaintyConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    pub seed: u64,
}

fn default_tau() -> f64 {
    0.25
}

impl BoostConfig {
    pub fn new(variant: Variant, levels: usize, seed: u64) -> Self {
        BoostConfig {
            variant,
            levels,
            tau: default_tau(),
            uncertainty: None,
            train: TrainConfig::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::invalid("at least one level is required"));
        }
        check_tau(self.tau)?;
        self.train.validate()
    }

    /// Stream owning everything random about level `level` (0-based). It
    /// depends on the seed and the level index only.
    pub fn level_stream(&self, level: usize) -> PrngStream {
        PrngStream::new(self.seed, 0).fork(level as u64)
    }
}

/// What happened at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    /// Training set the level's learner saw, as origins and weights.
    pub origins: Vec<usize>,
    pub weights: Vec<f64>,
    pub history: History,
    /// Epistemic variance of every training sample, aligned with `origins`;
    /// absent for the last level, which is never scored.
    pub uncertainty: Option<Vec<f64>>,
    /// Origins the transform acted on: the dropped samples when
    /// undersampling, the duplicated or re-weighted ones otherwise.
    pub selected: Vec<usize>,
}

impl LevelRecord {
    pub fn size(&self) -> usize {
        self.origins.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `V` trained learners plus their level log.
#[derive(Clone, Debug, PartialEq)]
pub struct BoostedModel {
    pub learners: Vec<WeakLearner>,
    pub levels: Vec<LevelRecord>,
    pub config: BoostConfig,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: BoostConfig,
    sizes: Vec<usize>,
    levels: Vec<LevelRecord>,
    files: Vec<String>,
}

impl BoostedModel {
    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(LevelRecord::size).collect()
    }

    /// The first `k` levels as a model of their own.
    ///
    /// Oversampled and weighted transforms do not depend on `V`, and every
    /// level draws from its own stream, so this equals a fresh `V = k` run.
    /// Undersampling's drop rate depends on `V`, so it has no such prefix.
    pub fn prefix(&self, k: usize) -> Result<BoostedModel> {
        if k == 0 || k > self.learners.len() {
            return Err(Error::invalid(format!(
                "prefix length {k} outside 1..={}",
                self.learners.len()
            )));
        }
        if self.config.variant == Variant::Undersampled && k != self.learners.len() {
            return Err(Error::UnsupportedConfiguration(
                "undersampled runs depend on the level count and have no prefixes".into(),
            ));
        }
        let mut levels = self.levels[..k].to_vec();
        let last = levels.last_mut().expect("k >= 1");
        last.uncertainty = None;
        last.selected.clear();
        Ok(BoostedModel {
            learners: self.learners[..k].to_vec(),
            levels,
            config: BoostConfig {
                levels: k,
                ..self.config.clone()
            },
        })
    }

    /// Writes `level_<v>.bin` per learner and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (v, learner) in self.learners.iter().enumerate() {
            let name = format!("level_{v}.bin");
            checkpoint::save(learner, &dir.join(&name))?;
            files.push(name);
        }
        let manifest = Manifest {
            config: self.config.clone(),
            sizes: self.sizes(),
            levels: self.levels.clone(),
            files,
        };
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_vec_pretty(&manifest)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<BoostedModel> {
        let manifest: Manifest =
            serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
        let learners = manifest
            .files
            .iter()
            .map(|f| checkpoint::load(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        if learners.len() != manifest.config.levels || manifest.levels.len() != learners.len() {
            return Err(Error::format(
                "manifest.json",
                "level count does not match the stored learners",
            ));
        }
        Ok(BoostedModel {
            learners,
            levels: manifest.levels,
            config: manifest.config,
        })
    }
}

/// Trains `cfg.levels` learners, reshaping the training set between levels.
///
/// `factory(level, init)` must return a freshly initialised learner drawing
/// its initial weights from `init`. Level `v` uses sub-streams of
/// [`BoostConfig::level_stream`]: `0` initialisation, `1` training, `2` MC
/// scoring, `3` the transform's shuffle.
pub fn run_proboost<F>(d: &Dataset, cfg: &BoostConfig, mut factory: F) -> Result<BoostedModel>
where
    F: FnMut(usize, &mut PrngStream) -> Result<WeakLearner>,
{
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    let drop_div = match (cfg.variant, cfg.levels) {
        (Variant::Undersampled, v) if v >= 2 => Some(div_value(cfg.tau, v)?),
        _ => None,
    };
    let mut current = d.clone();
    let mut learners = Vec::with_capacity(cfg.levels);
    let mut levels = Vec::with_capacity(cfg.levels);
    for level in 0..cfg.levels {
        let ls = cfg.level_stream(level);
        let mut learner = factory(level, &mut ls.fork(0))?;
        if learner.n_classes() != d.n_classes() {
            return Err(Error::shape(format!(
                "learner predicts {} classes, data has {}",
                learner.n_classes(),
                d.n_classes()
            )));
        }
        log::info!(
            "level {}/{}: training on {} samples",
            level + 1,
            cfg.levels,
            current.len()
        );
        let history = train(
            &mut learner,
            current.features(),
            current.labels(),
            current.weights(),
            &cfg.train,
            &ls.fork(1),
        )
        .map_err(|e| match e {
            Error::Data(msg) => Error::data(format!("level {}: {msg}", level + 1)),
            other => other,
        })?;
        let mut record = LevelRecord {
            level,
            origins: current.origin().to_vec(),
            weights: current.weights().to_vec(),
            history,
            uncertainty: None,
            selected: Vec::new(),
        };
        if level + 1 < cfg.levels {
            let ucfg = UncertaintyConfig {
                keep_samples: true,
                ..cfg
                    .uncertainty
                    .clone()
                    .unwrap_or_else(|| UncertaintyConfig::for_mode(learner.mode()))
            };
            let dist = mc_predict(&learner, current.features(), &ucfg, &ls.fork(2))?;
            let scores = epistemic_variance(&dist)?;
            let mut shuffle = ls.fork(3);
            let next = match cfg.variant {
                Variant::Undersampled => {
                    let div = drop_div.expect("set for V >= 2");
                    let n_drop = (current.len() as f64 / div).floor() as usize;
                    let order = crate::numerics::stable_argsort_ascending(&scores.u)?;
                    record.selected = order[..n_drop]
                        .iter()
                        .map(|&i| current.origin()[i])
                        .collect();
                    undersample_step(&current, &scores, div, &mut shuffle).map_err(|_| {
                        Error::data(format!("level {}: training set exhausted", level + 2))
                    })?
                }
                Variant::Oversampled | Variant::Weighted => {
                    record.selected = top_set(&scores, cfg.tau)?
                        .iter()
                        .map(|&i| current.origin()[i])
                        .collect();
                    if cfg.variant == Variant::Oversampled {
                        oversample_step(&current, &scores, cfg.tau, &mut shuffle)?
                    } else {
                        weight_step(&current, &scores, cfg.tau, &mut shuffle)?
                    }
                }
            };
            record.uncertainty = Some(scores.u);
            current = next;
        }
        learners.push(learner);
        levels.push(record);
    }
    Ok(BoostedModel {
        learners,
        levels,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_dense_stack, LearnerMode};
    use crate::numerics::Tensor;

    fn blobs(n_per: usize) -> Dataset {
        let mut s = PrngStream::new(5, 0);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..n_per {
                rows.push(vec![
                    c as f64 + 0.6 * s.standard_normal(),
                    0.6 * s.standard_normal(),
                ]);
                labels.push(c);
            }
        }
        Dataset::new(Tensor::from_rows(&rows).unwrap(), labels, 3).unwrap()
    }

    fn quick(variant: Variant, levels: usize) -> BoostConfig {
        BoostConfig {
            uncertainty: Some(UncertaintyConfig::new(8)),
            train: TrainConfig {
                max_epochs: 4,
                patience: 2,
                ..TrainConfig::default()
            },
            ..BoostConfig::new(variant, levels, 17)
        }
    }

    fn factory(_: usize, init: &mut PrngStream) -> Result<WeakLearner> {
        build_dense_stack(2, &[6], 3, LearnerMode::Variational, init)
    }

    #[test]
    fn single_level_applies_no_transform() {
        let d = blobs(10);
        let m = run_proboost(&d, &quick(Variant::Weighted, 1), factory).unwrap();
        assert_eq!(m.learners.len(), 1);
        assert_eq!(m.sizes(), vec![30]);
        assert!(m.levels[0].uncertainty.is_none());
    }

    #[test]
    fn weighted_prefix_matches_shorter_run() {
        let d = blobs(10);
        let long = run_proboost(&d, &quick(Variant::Weighted, 3), factory).unwrap();
        let short = run_proboost(&d, &quick(Variant::Weighted, 2), factory).unwrap();
        assert_eq!(long.prefix(2).unwrap(), short);
        let over = run_proboost(&d, &quick(Variant::Oversampled, 3), factory).unwrap();
        assert_eq!(over.sizes(), vec![30, 38, 48]);
    }

    #[test]
    fn undersampled_sizes_and_persistence() {
        let d = blobs(20);
        let m = run_proboost(&d, &quick(Variant::Undersampled, 3), factory).unwrap();
        assert_eq!(m.sizes(), vec![60, 30, 15]);
        assert!(m.prefix(2).is_err());
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(BoostedModel::load(dir.path()).unwrap(), m);
    }
}

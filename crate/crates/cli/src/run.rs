//! Seeded train-and-evaluate repetitions and their records.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use proboost::boosting::{run_proboost, BoostConfig, BoostedModel, Dataset, Variant};
use proboost::ensemble::{
    fw_weights, level_probabilities, predict_from_probs, vw_from_probs, vwo_from_probs,
    EnsembleWeights, VwoSearch, WeightScheme, VWO_CANDIDATES,
};
use proboost::eval::{auc_ova, macro_metrics, MetricsReport};
use proboost::nn::{build_dense_stack, build_lenet_variant, TrainConfig, WeakLearner};
use proboost::numerics::{PrngStream, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{Architecture, DataConfig, ExperimentConfig, LearnerConfig};
use crate::error::{CliError, Result};
use crate::prepare::{obtain, DataManifest, Prepared};
use crate::{read_json, write_json, RepSeeds};

/// The configuration of one evaluated cell, echoed into every record so a
/// record is readable on its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellEcho {
    pub name: String,
    pub base_seed: u64,
    pub data: DataConfig,
    pub learner: LearnerConfig,
    pub variant: Variant,
    pub levels: usize,
    pub tau: f64,
    pub mc_samples: usize,
    pub weights: WeightScheme,
    pub train: TrainConfig,
}

/// Outcome of one (cell, repetition). Wall-clock time is kept in
/// `timings.csv` so that records are reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub run_id: String,
    pub cell: String,
    pub repetition: usize,
    pub seeds: RepSeeds,
    pub config: CellEcho,
    pub data: DataManifest,
    /// Test-set metrics of the weighted ensemble.
    pub metrics: MetricsReport,
    /// Classes left out of the macro AUC.
    pub auc_skipped: Vec<usize>,
    pub psi: Vec<f64>,
    pub level_sizes: Vec<usize>,
    pub level_total_weights: Vec<f64>,
    pub epochs_run: Vec<usize>,
    pub best_epochs: Vec<usize>,
}

pub fn cell_id(family: &str, variant: Variant, levels: usize, scheme: WeightScheme) -> String {
    format!(
        "{family}-{}-V{levels}-{}",
        variant.short_name(),
        scheme.short_name()
    )
}

pub fn record_path(out: &Path, cell: &str, repetition: usize) -> PathBuf {
    out.join("records")
        .join(cell)
        .join(format!("rep_{repetition:03}.json"))
}

fn model_dir(cfg: &ExperimentConfig, repetition: usize, levels: Option<usize>) -> PathBuf {
    let d = cfg.out.join("models").join(format!("rep_{repetition:03}"));
    match levels {
        Some(v) => d.join(format!("V{v}")),
        None => d,
    }
}

/// Fresh weak learner for `lc` on `input_len` features.
pub fn build_learner(
    lc: &LearnerConfig,
    input_len: usize,
    k: usize,
    init: &mut PrngStream,
) -> proboost::Result<WeakLearner> {
    match lc.architecture {
        Architecture::Dense => build_dense_stack(input_len, &lc.hidden, k, lc.mode(), init),
        Architecture::Lenet => {
            let side = (input_len as f64).sqrt().round() as usize;
            if side * side != input_len {
                return Err(proboost::Error::UnsupportedConfiguration(format!(
                    "convolutional learner needs square images, got {input_len} features"
                )));
            }
            build_lenet_variant([1, side, side], k, lc.mode(), init)
        }
    }
}

fn boost_config(cfg: &ExperimentConfig, levels: usize, seed: u64) -> BoostConfig {
    BoostConfig {
        tau: cfg.boost.tau,
        uncertainty: Some(cfg.boost.uncertainty(cfg.learner.mode())),
        train: cfg.train.clone(),
        ..BoostConfig::new(cfg.boost.variant, levels, seed)
    }
}

pub fn train_model(
    cfg: &ExperimentConfig,
    train: &Dataset,
    levels: usize,
    seed: u64,
) -> Result<BoostedModel> {
    let bc = boost_config(cfg, levels, seed);
    let width = train.features().row_len();
    let k = train.n_classes();
    Ok(run_proboost(train, &bc, |_, init| {
        build_learner(&cfg.learner, width, k, init)
    })?)
}

/// Models of one repetition: one model whose prefixes serve every `V`, or,
/// for undersampling, one model per `V`.
#[derive(Clone, Debug)]
pub enum RepModels {
    Shared(BoostedModel),
    PerLevel(Vec<(usize, BoostedModel)>),
}

impl RepModels {
    fn for_levels(&self, v: usize) -> Result<BoostedModel> {
        match self {
            RepModels::Shared(m) => Ok(m.prefix(v)?),
            RepModels::PerLevel(ms) => ms
                .iter()
                .find(|(l, _)| *l == v)
                .map(|(_, m)| m.clone())
                .ok_or_else(|| CliError::Data(format!("no model with {v} levels"))),
        }
    }

    fn save(&self, cfg: &ExperimentConfig, repetition: usize) -> Result<()> {
        match self {
            RepModels::Shared(m) => m.save(&model_dir(cfg, repetition, None))?,
            RepModels::PerLevel(ms) => {
                for (v, m) in ms {
                    m.save(&model_dir(cfg, repetition, Some(*v)))?;
                }
            }
        }
        Ok(())
    }

    fn load(cfg: &ExperimentConfig, repetition: usize) -> Result<Option<RepModels>> {
        let present = |d: &Path| d.join("manifest.json").exists();
        if cfg.boost.variant == Variant::Undersampled {
            let mut ms = Vec::new();
            for &v in &cfg.boost.levels {
                let d = model_dir(cfg, repetition, Some(v));
                if !present(&d) {
                    return Ok(None);
                }
                ms.push((v, BoostedModel::load(&d)?));
            }
            Ok(Some(RepModels::PerLevel(ms)))
        } else {
            let d = model_dir(cfg, repetition, None);
            if !present(&d) {
                return Ok(None);
            }
            let m = BoostedModel::load(&d)?;
            if m.learners.len() < cfg.max_levels() {
                return Ok(None);
            }
            Ok(Some(RepModels::Shared(m)))
        }
    }
}

pub fn train_models(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    seeds: &RepSeeds,
) -> Result<RepModels> {
    if cfg.boost.variant == Variant::Undersampled {
        let mut levels = cfg.boost.levels.clone();
        levels.sort_unstable();
        levels.dedup();
        let ms = levels
            .into_iter()
            .map(|v| Ok((v, train_model(cfg, &prepared.train, v, seeds.boost)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RepModels::PerLevel(ms))
    } else {
        Ok(RepModels::Shared(train_model(
            cfg,
            &prepared.train,
            cfg.max_levels(),
            seeds.boost,
        )?))
    }
}

/// Everything evaluated for one repetition. `vwo` keeps each VWO search
/// (keyed by `V`) with all of its candidates.
#[derive(Clone, Debug)]
pub struct RepOutcome {
    pub records: Vec<ResultRecord>,
    pub vwo: Vec<(usize, VwoSearch)>,
}

struct LevelProbs {
    test: Vec<Tensor>,
    train: Option<Vec<Tensor>>,
}

/// Scores `models` on the prepared data for every `(V, scheme)` of `cfg`.
///
/// Sub-streams of the evaluation seed: `0` test-set predictions, `1`
/// training-set predictions for VW, `[2, V]` the VWO candidates.
pub fn evaluate(
    cfg: &ExperimentConfig,
    repetition: usize,
    seeds: &RepSeeds,
    prepared: &Prepared,
    models: &RepModels,
) -> Result<RepOutcome> {
    let es = PrngStream::new(seeds.eval, 0);
    let ucfg = cfg.boost.uncertainty(cfg.learner.mode());
    let test = prepared.test.as_ref().unwrap_or(&prepared.train);
    let k = prepared.train.n_classes();
    let need_train = cfg.weights.contains(&WeightScheme::Vw);
    let probs_of = |m: &BoostedModel| -> Result<LevelProbs> {
        let test_p = level_probabilities(m, test.features(), Some(&ucfg), &es.fork(0))?;
        let train_p = if need_train {
            Some(level_probabilities(
                m,
                prepared.train.features(),
                Some(&ucfg),
                &es.fork(1),
            )?)
        } else {
            None
        };
        Ok(LevelProbs {
            test: test_p,
            train: train_p,
        })
    };
    let shared = match models {
        RepModels::Shared(m) => Some(probs_of(m)?),
        RepModels::PerLevel(_) => None,
    };
    let mut records = Vec::new();
    let mut vwo = Vec::new();
    for &v in &cfg.boost.levels {
        let model = models.for_levels(v)?;
        let own;
        let probs = match &shared {
            Some(p) => p,
            None => {
                own = probs_of(&model)?;
                &own
            }
        };
        let test_p = &probs.test[..v];
        for &scheme in &cfg.weights {
            let weights = match scheme {
                WeightScheme::Fw => fw_weights(v)?,
                WeightScheme::Vw => {
                    let train_p = probs.train.as_ref().expect("computed when VW is requested");
                    vw_from_probs(&train_p[..v], prepared.train.labels())?
                }
                WeightScheme::Vwo => {
                    let search = vwo_from_probs(
                        test_p,
                        test.labels(),
                        VWO_CANDIDATES,
                        &mut es.fork_path(&[2, v as u64]),
                    )?;
                    let w = search.weights.clone();
                    vwo.push((v, search));
                    w
                }
            };
            records.push(make_record(
                cfg, repetition, seeds, prepared, &model, test, test_p, k, weights,
            )?);
        }
    }
    Ok(RepOutcome { records, vwo })
}

#[allow(clippy::too_many_arguments)]
fn make_record(
    cfg: &ExperimentConfig,
    repetition: usize,
    seeds: &RepSeeds,
    prepared: &Prepared,
    model: &BoostedModel,
    test: &Dataset,
    test_p: &[Tensor],
    k: usize,
    weights: EnsembleWeights,
) -> Result<ResultRecord> {
    let v = model.learners.len();
    let (pred, scores) = predict_from_probs(test_p, &weights.psi)?;
    let mut metrics = macro_metrics(test.labels(), &pred, k)?;
    let auc = auc_ova(&scores, test.labels())?;
    metrics.auc = Some(auc.value);
    let cell = cell_id(
        cfg.learner.family.name(),
        cfg.boost.variant,
        v,
        weights.scheme,
    );
    Ok(ResultRecord {
        run_id: format!("{}/{cell}/rep_{repetition:03}", cfg.name),
        cell,
        repetition,
        seeds: *seeds,
        config: CellEcho {
            name: cfg.name.clone(),
            base_seed: cfg.seed,
            data: cfg.data.clone(),
            learner: cfg.learner.clone(),
            variant: cfg.boost.variant,
            levels: v,
            tau: cfg.boost.tau,
            mc_samples: cfg.boost.uncertainty(cfg.learner.mode()).mc_samples,
            weights: weights.scheme,
            train: cfg.train.clone(),
        },
        data: prepared.manifest.clone(),
        metrics,
        auc_skipped: auc.skipped,
        psi: weights.psi,
        level_sizes: model.sizes(),
        level_total_weights: model.levels.iter().map(|l| l.total_weight()).collect(),
        epochs_run: model
            .levels
            .iter()
            .map(|l| l.history.epochs_run())
            .collect(),
        best_epochs: model.levels.iter().map(|l| l.history.best_epoch).collect(),
    })
}

/// Trains and evaluates repetition `r` in memory, touching no files.
pub fn run_repetition(cfg: &ExperimentConfig, repetition: usize) -> Result<RepOutcome> {
    cfg.validate()?;
    let seeds = RepSeeds::derive(cfg.seed, repetition);
    let prepared = obtain(cfg, repetition, &seeds)?;
    let models = train_models(cfg, &prepared, &seeds)?;
    evaluate(cfg, repetition, &seeds, &prepared, &models)
}

fn expected_cells(cfg: &ExperimentConfig) -> Vec<String> {
    cfg.boost
        .levels
        .iter()
        .flat_map(|&v| {
            cfg.weights
                .iter()
                .map(move |&s| cell_id(cfg.learner.family.name(), cfg.boost.variant, v, s))
        })
        .collect()
}

/// Counts of records written and of repetitions that were already complete.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub written: usize,
    pub skipped_repetitions: usize,
}

fn append_timing(out: &Path, run: &str, seconds: f64) -> Result<()> {
    let path = out.join("timings.csv");
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
    let mut line = String::new();
    if fresh {
        line.push_str("run,seconds\n");
    }
    line.push_str(&format!("{run},{seconds:.3}\n"));
    f.write_all(line.as_bytes())
        .map_err(|e| CliError::io("appending timing", e))
}

fn process(cfg: &ExperimentConfig, allow_train: bool) -> Result<RunSummary> {
    cfg.validate()?;
    let cells = expected_cells(cfg);
    let mut summary = RunSummary::default();
    for r in 0..cfg.repetitions {
        if cells.iter().all(|c| record_path(&cfg.out, c, r).exists()) {
            summary.skipped_repetitions += 1;
            continue;
        }
        let started = Instant::now();
        let seeds = RepSeeds::derive(cfg.seed, r);
        let prepared = obtain(cfg, r, &seeds)?;
        let models = match RepModels::load(cfg, r)? {
            Some(m) => m,
            None if allow_train => {
                log::info!("{}: training repetition {r}", cfg.name);
                let m = train_models(cfg, &prepared, &seeds)?;
                m.save(cfg, r)?;
                m
            }
            None => {
                return Err(CliError::MissingInput {
                    path: model_dir(cfg, r, None),
                    reason: "no trained model for this repetition".into(),
                })
            }
        };
        let outcome = evaluate(cfg, r, &seeds, &prepared, &models)?;
        for rec in &outcome.records {
            let path = record_path(&cfg.out, &rec.cell, r);
            if !path.exists() {
                write_json(&path, rec)?;
                summary.written += 1;
            }
        }
        append_timing(
            &cfg.out,
            &format!("{}/rep_{r:03}", cfg.name),
            started.elapsed().as_secs_f64(),
        )?;
    }
    Ok(summary)
}

/// Runs every missing (cell, repetition), training models where none are
/// stored. Complete repetitions are skipped, so an interrupted run resumes.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunSummary> {
    process(cfg, true)
}

/// Like [`cmd_train`] but only evaluates stored models.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<RunSummary> {
    process(cfg, false)
}

/// Every record under `out/records`, sorted by run id.
pub fn load_records(out: &Path) -> Result<Vec<ResultRecord>> {
    let root = out.join("records");
    crate::error::require(&root, "records directory")?;
    let mut paths = Vec::new();
    for cell in std::fs::read_dir(&root)
        .map_err(|e| CliError::io(format!("listing {}", root.display()), e))?
    {
        let cell = cell.map_err(|e| CliError::io("listing records", e))?.path();
        if !cell.is_dir() {
            continue;
        }
        for f in std::fs::read_dir(&cell)
            .map_err(|e| CliError::io(format!("listing {}", cell.display()), e))?
        {
            let f = f.map_err(|e| CliError::io("listing records", e))?.path();
            if f.extension().is_some_and(|e| e == "json") {
                paths.push(f);
            }
        }
    }
    let mut records = paths
        .iter()
        .map(|p| read_json::<ResultRecord>(p))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(records)
}

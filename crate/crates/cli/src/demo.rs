//! Per-sample weight and uncertainty trace of weighted boosting on two Iris
//! features.

use std::path::{Path, PathBuf};

use proboost::boosting::{run_proboost, BoostConfig, BoostedModel, Variant};
use proboost::data::load_csv_labeled;
use proboost::nn::{build_dense_stack, LearnerMode, TrainConfig};
use proboost::uncertainty::UncertaintyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{require, CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrisDemoConfig {
    pub path: PathBuf,
    /// Feature columns; sepal length and petal length by default.
    #[serde(default = "default_columns")]
    pub columns: Vec<usize>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_columns() -> Vec<usize> {
    vec![0, 2]
}

fn default_levels() -> usize {
    3
}

fn default_tau() -> f64 {
    0.25
}

fn default_mc() -> usize {
    UncertaintyConfig::for_vi().mc_samples
}

impl IrisDemoConfig {
    pub fn new(path: impl Into<PathBuf>, seed: u64) -> Self {
        IrisDemoConfig {
            path: path.into(),
            columns: default_columns(),
            levels: default_levels(),
            tau: default_tau(),
            seed,
            mc_samples: default_mc(),
            train: TrainConfig::default(),
        }
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: IrisDemoConfig =
            toml::from_str(text).map_err(|e| CliError::invalid(e.to_string()))?;
        if cfg.path.is_relative() {
            cfg.path = base.join(&cfg.path);
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub index: usize,
    pub features: Vec<f64>,
    pub class: usize,
    /// Loss weight at each level.
    pub weights: Vec<f64>,
    /// Epistemic variance at each scored level (all but the last).
    pub uncertainty: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrisTrace {
    pub rows: Vec<TraceRow>,
    /// Samples whose weight was raised after each scored level.
    pub selected: Vec<Vec<usize>>,
}

impl IrisTrace {
    pub fn from_model(
        model: &BoostedModel,
        features: &proboost::numerics::Tensor,
        labels: &[usize],
    ) -> Self {
        let n = labels.len();
        let mut rows: Vec<TraceRow> = (0..n)
            .map(|i| TraceRow {
                index: i,
                features: features.row(i).to_vec(),
                class: labels[i],
                weights: Vec::new(),
                uncertainty: Vec::new(),
            })
            .collect();
        for level in &model.levels {
            let mut w = vec![0.0; n];
            for (&o, &x) in level.origins.iter().zip(&level.weights) {
                w[o] += x;
            }
            for (row, x) in rows.iter_mut().zip(w) {
                row.weights.push(x);
            }
            if let Some(u) = &level.uncertainty {
                let mut by_origin = vec![0.0; n];
                for (&o, &x) in level.origins.iter().zip(u) {
                    by_origin[o] = x;
                }
                for (row, x) in rows.iter_mut().zip(by_origin) {
                    row.uncertainty.push(x);
                }
            }
        }
        let selected = model
            .levels
            .iter()
            .filter(|l| l.uncertainty.is_some())
            .map(|l| l.selected.clone())
            .collect();
        IrisTrace { rows, selected }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let first = self.rows.first();
        let (nf, nw, nu) = first.map_or((0, 0, 0), |r| {
            (r.features.len(), r.weights.len(), r.uncertainty.len())
        });
        let mut header = vec!["index".to_string()];
        header.extend((0..nf).map(|j| format!("x{j}")));
        header.push("class".into());
        header.extend((1..=nw).map(|v| format!("weight_{v}")));
        header.extend((1..=nu).map(|v| format!("u_{v}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.index.to_string()];
            rec.extend(r.features.iter().map(|x| x.to_string()));
            rec.push(r.class.to_string());
            rec.extend(r.weights.iter().map(|x| x.to_string()));
            rec.extend(r.uncertainty.iter().map(|x| format!("{x:.9e}")));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Data(e.to_string()))
    }
}

/// Weighted boosting with a single flipout dense layer on the chosen
/// columns, trained on every sample.
pub fn demo_iris(cfg: &IrisDemoConfig) -> Result<(BoostedModel, IrisTrace)> {
    require(&cfg.path, "Iris CSV")?;
    let d = load_csv_labeled(&cfg.path, Some(&cfg.columns))?;
    let bc = BoostConfig {
        tau: cfg.tau,
        uncertainty: Some(UncertaintyConfig::new(cfg.mc_samples)),
        train: cfg.train.clone(),
        ..BoostConfig::new(Variant::Weighted, cfg.levels, cfg.seed)
    };
    let width = d.features().row_len();
    let k = d.n_classes();
    let model = run_proboost(&d, &bc, |_, init| {
        build_dense_stack(width, &[], k, LearnerMode::Variational, init)
    })?;
    let trace = IrisTrace::from_model(&model, d.features(), d.labels());
    Ok((model, trace))
}

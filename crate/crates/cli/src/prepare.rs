//! Dataset preparation: load, contaminate, split, and cache per repetition.

use std::path::{Path, PathBuf};

use proboost::data::{
    bytes_hash, contaminate_awgn, contaminate_superimpose, content_hash, load_csv_labeled,
    load_idx, to_dataset, train_test_interface, Contamination, Dataset, RawImageSet,
};
use proboost::nn::stratified_split;
use proboost::numerics::{PrngStream, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, ExperimentConfig};
use crate::error::{require, CliError, Result};
use crate::{read_json, write_atomic, write_json, RepSeeds};

/// What was prepared, identified by content hashes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataManifest {
    pub data_seed: u64,
    /// Hash of the data recipe and seed; a cache is reused only on a match.
    pub fingerprint: String,
    pub n_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_hash: String,
    pub test_hash: Option<String>,
    /// Superimposed images in the train and test pools.
    #[serde(default)]
    pub superimposed: Option<[usize; 2]>,
    /// Superimposition pairs whose base and donor classes differ; always 0.
    #[serde(default)]
    pub mixed_pairs: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub manifest: DataManifest,
}

pub fn fingerprint(data: &DataConfig, seed: u64) -> Result<String> {
    Ok(bytes_hash(&serde_json::to_vec(&(data, seed))?))
}

fn scaled(set: &RawImageSet) -> Result<Tensor> {
    let px = set.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Ok(Tensor::new(vec![set.len(), set.image_len()], px)?)
}

fn load_pool(images: &Path, labels: &Path) -> Result<RawImageSet> {
    require(images, "image file")?;
    require(labels, "label file")?;
    Ok(load_idx(images, labels)?)
}

/// Builds the train and test sets of one repetition from `seed`.
///
/// Sub-streams: `0` train-pool contamination, `1` test-pool contamination,
/// `2` the split.
pub fn prepare(data: &DataConfig, seed: u64) -> Result<Prepared> {
    let s = PrngStream::new(seed, 0);
    let fp = fingerprint(data, seed)?;
    let (train, test, superimposed, mixed_pairs) = match data {
        DataConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            donor_images,
            donor_labels,
            contamination,
            split,
        } => {
            let tr = load_pool(train_images, train_labels)?;
            let te = load_pool(test_images, test_labels)?;
            let k = tr.n_classes().max(te.n_classes());
            let (xtr, xte, sup, mixed) = match contamination {
                None => (scaled(&tr)?, scaled(&te)?, None, None),
                Some(Contamination::Awgn { mean, variance }) => (
                    contaminate_awgn(&tr, *mean, *variance, &s.fork(0))?,
                    contaminate_awgn(&te, *mean, *variance, &s.fork(1))?,
                    None,
                    None,
                ),
                Some(Contamination::Superimpose { fraction }) => {
                    let (Some(di), Some(dl)) = (donor_images, donor_labels) else {
                        return Err(CliError::invalid("superimposition needs a donor pool"));
                    };
                    let donor = load_pool(di, dl)?;
                    let a = contaminate_superimpose(&tr, &donor, *fraction, &s.fork(0))?;
                    let b = contaminate_superimpose(&te, &donor, *fraction, &s.fork(1))?;
                    let mixed = [(&tr, &a.pairs), (&te, &b.pairs)]
                        .iter()
                        .map(|(base, pairs)| {
                            pairs
                                .iter()
                                .filter(|&&(i, j)| base.labels[i] != donor.labels[j])
                                .count()
                        })
                        .sum::<usize>();
                    log::info!(
                        "superimposed {} train and {} test images, {mixed} cross-class pairs",
                        a.pairs.len(),
                        b.pairs.len()
                    );
                    let counts = [a.pairs.len(), b.pairs.len()];
                    (a.features, b.features, Some(counts), Some(mixed))
                }
            };
            let (train, test) = train_test_interface(
                &to_dataset(xtr, &tr, k)?,
                &to_dataset(xte, &te, k)?,
                split,
                &s.fork(2),
            )?;
            (train, Some(test), sup, mixed)
        }
        DataConfig::Csv {
            path,
            columns,
            test_fraction,
        } => {
            require(path, "CSV file")?;
            let all = load_csv_labeled(path, columns.as_deref())?;
            if *test_fraction > 0.0 {
                let (tr, te) = stratified_split(
                    all.labels(),
                    all.n_classes(),
                    *test_fraction,
                    &mut s.fork(2),
                )?;
                let fresh = |d: Dataset| {
                    Dataset::new(d.features().clone(), d.labels().to_vec(), d.n_classes())
                };
                (
                    fresh(all.select(&tr)?)?,
                    Some(fresh(all.select(&te)?)?),
                    None,
                    None,
                )
            } else {
                (all, None, None, None)
            }
        }
    };
    let manifest = DataManifest {
        data_seed: seed,
        fingerprint: fp,
        n_classes: train.n_classes(),
        n_train: train.len(),
        n_test: test.as_ref().map_or(0, Dataset::len),
        train_hash: content_hash(train.features(), train.labels()),
        test_hash: test
            .as_ref()
            .map(|t| content_hash(t.features(), t.labels())),
        superimposed,
        mixed_pairs,
    };
    Ok(Prepared {
        train,
        test,
        manifest,
    })
}

pub fn cache_paths(out: &Path, repetition: usize) -> (PathBuf, PathBuf) {
    let dir = out.join("prepared");
    (
        dir.join(format!("rep_{repetition:03}.json")),
        dir.join(format!("rep_{repetition:03}.bin")),
    )
}

fn labels_tensor(d: &Dataset) -> Result<Tensor> {
    Ok(Tensor::new(
        vec![d.len()],
        d.labels().iter().map(|&y| y as f64).collect(),
    )?)
}

fn encode(p: &Prepared) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    for d in std::iter::once(&p.train).chain(p.test.as_ref()) {
        bytes.extend(d.features().to_le_bytes());
        bytes.extend(labels_tensor(d)?.to_le_bytes());
    }
    Ok(bytes)
}

fn decode(bytes: &[u8], manifest: DataManifest, n_classes: usize) -> Result<Prepared> {
    let mut at = 0;
    let mut next = || -> Result<Tensor> {
        let (t, used) = Tensor::from_le_bytes(&bytes[at..])?;
        at += used;
        Ok(t)
    };
    let mut read_set = || -> Result<Dataset> {
        let x = next()?;
        let y = next()?.data().iter().map(|&v| v as usize).collect();
        Ok(Dataset::new(x, y, n_classes)?)
    };
    let train = read_set()?;
    let test = if manifest.test_hash.is_some() {
        Some(read_set()?)
    } else {
        None
    };
    Ok(Prepared {
        train,
        test,
        manifest,
    })
}

/// Cached preparation of `repetition`, if one with a matching fingerprint and
/// intact content exists.
pub fn load_cached(
    cfg: &ExperimentConfig,
    repetition: usize,
    seeds: &RepSeeds,
) -> Result<Option<Prepared>> {
    let (json, bin) = cache_paths(&cfg.out, repetition);
    if !json.exists() || !bin.exists() {
        return Ok(None);
    }
    let manifest: DataManifest = read_json(&json)?;
    if manifest.fingerprint != fingerprint(&cfg.data, seeds.data)? {
        return Ok(None);
    }
    let bytes =
        std::fs::read(&bin).map_err(|e| CliError::io(format!("reading {}", bin.display()), e))?;
    let k = manifest.n_classes;
    let p = decode(&bytes, manifest, k)?;
    let intact = content_hash(p.train.features(), p.train.labels()) == p.manifest.train_hash
        && p.test
            .as_ref()
            .map(|t| content_hash(t.features(), t.labels()))
            == p.manifest.test_hash;
    if !intact {
        log::warn!(
            "cached data for repetition {repetition} does not match its manifest; rebuilding"
        );
        return Ok(None);
    }
    Ok(Some(p))
}

pub fn store(cfg: &ExperimentConfig, repetition: usize, p: &Prepared) -> Result<()> {
    let (json, bin) = cache_paths(&cfg.out, repetition);
    write_atomic(&bin, &encode(p)?)?;
    write_json(&json, &p.manifest)
}

/// Cached data when available, otherwise a fresh preparation.
pub fn obtain(cfg: &ExperimentConfig, repetition: usize, seeds: &RepSeeds) -> Result<Prepared> {
    match load_cached(cfg, repetition, seeds)? {
        Some(p) => Ok(p),
        None => prepare(&cfg.data, seeds.data),
    }
}

/// Prepares and caches every repetition; existing matching caches are kept.
/// Returns the manifests and writes them, in order, to `prepared/manifest.json`.
pub fn cmd_prepare_data(cfg: &ExperimentConfig) -> Result<Vec<DataManifest>> {
    cfg.validate()?;
    let mut manifests = Vec::with_capacity(cfg.repetitions);
    for r in 0..cfg.repetitions {
        let seeds = RepSeeds::derive(cfg.seed, r);
        let p = match load_cached(cfg, r, &seeds)? {
            Some(p) => p,
            None => {
                let p = prepare(&cfg.data, seeds.data)?;
                store(cfg, r, &p)?;
                p
            }
        };
        log::info!(
            "repetition {r}: {} train / {} test, train hash {}",
            p.manifest.n_train,
            p.manifest.n_test,
            p.manifest.train_hash
        );
        manifests.push(p.manifest);
    }
    write_json(&cfg.out.join("prepared").join("manifest.json"), &manifests)?;
    Ok(manifests)
}

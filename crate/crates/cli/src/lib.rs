//! Experiment orchestration for ProBoost: configuration, seeded repetitions,
//! persisted models and records, summary reports and the Iris weight trace.

pub mod config;
pub mod demo;
mod error;
pub mod prepare;
pub mod report;
pub mod run;

use std::path::Path;

use proboost::numerics::PrngStream;
use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, Result};

/// Stream id of the per-repetition seed derivation.
const REPETITION_STREAM: u64 = 0x7265_7073;

/// Sub-seeds of one repetition. Every repetition re-draws both the dataset
/// noise and the network initialisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepSeeds {
    pub data: u64,
    pub boost: u64,
    pub eval: u64,
}

impl RepSeeds {
    pub fn derive(base_seed: u64, repetition: usize) -> Self {
        let s = PrngStream::new(base_seed, REPETITION_STREAM).fork(repetition as u64);
        RepSeeds {
            data: s.fork(0).next_u64(),
            boost: s.fork(1).next_u64(),
            eval: s.fork(2).next_u64(),
        }
    }
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::io(format!("writing {}", tmp.display()), e))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::io(format!("renaming into {}", path.display()), e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

//! Parameter learning: initialization, Baum–Welch EM, and BIC model-order scans.

mod bic;
mod em;
mod init;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EventSequence, DEFAULT_REG_SCALE};

pub use bic::{bic_score, select_k, BicScan};
pub use em::{em_step, fit, fit_from, fit_gmm, gmm_em_step, TrainingTrace, COLLAPSE_FRACTION};
pub use init::{init_gmm, init_k_bins, init_k_means, k_bins_labels, k_means_labels, KMEANS_MAX_ITERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    /// Equal contiguous time bins per sequence.
    KBins,
    /// k-means++ seeded Lloyd iterations on pooled frames.
    KMeans,
}

impl InitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            InitMethod::KBins => "k-bins",
            InitMethod::KMeans => "k-means",
        }
    }
}

impl fmt::Display for InitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "k-bins" | "kbins" => Ok(InitMethod::KBins),
            "k-means" | "kmeans" => Ok(InitMethod::KMeans),
            other => Err(Error::Config(format!("unknown init method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub k: usize,
    pub init: InitMethod,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub reg_scale: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            k: 3,
            init: InitMethod::KBins,
            max_iters: 200,
            rel_tol: 1e-6,
            seed: 0,
            reg_scale: DEFAULT_REG_SCALE,
        }
    }
}

impl TrainingConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("rel_tol must be positive".into()));
        }
        if !(self.reg_scale >= 0.0) {
            return Err(Error::Config("regularization scale must be non-negative".into()));
        }
        Ok(())
    }
}

fn check_training_set(seqs: &[EventSequence]) -> Result<()> {
    let first = seqs
        .first()
        .ok_or_else(|| Error::Data("no training sequences".into()))?;
    for s in seqs {
        if s.schema() != first.schema() {
            return Err(Error::Data(format!(
                "event '{}' has a different feature schema",
                s.event_id()
            )));
        }
    }
    Ok(())
}

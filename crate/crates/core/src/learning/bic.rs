use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::total_log_likelihood;
use crate::model::{hmm_free_params, EventSequence, HmmModel};

use super::em::fit;
use super::TrainingConfig;

/// `-sum log p(x) + n_p / 2 * ln(T_total)` with `T_total` the pooled frame count.
/// Returns the score and `n_p`.
pub fn bic_score(model: &HmmModel, seqs: &[EventSequence]) -> Result<(f64, usize)> {
    let ll = total_log_likelihood(model, seqs)?;
    let n_frames: usize = seqs.iter().map(|s| s.len()).sum();
    let n_p = model.n_free_params();
    Ok((bic_from_parts(ll, n_p, n_frames), n_p))
}

fn bic_from_parts(log_likelihood: f64, n_params: usize, n_frames: usize) -> f64 {
    -log_likelihood + 0.5 * n_params as f64 * (n_frames as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicScan {
    pub k_values: Vec<usize>,
    /// `+inf` where training failed.
    pub scores: Vec<f64>,
    pub n_params: Vec<usize>,
    pub log_likelihoods: Vec<f64>,
    pub best_k: usize,
}

/// Trains one model per candidate K with the settings of `config` and picks the
/// smallest BIC (smaller K wins ties).
pub fn select_k(seqs: &[EventSequence], k_range: &[usize], config: &TrainingConfig) -> Result<BicScan> {
    if k_range.is_empty() {
        return Err(Error::Config("empty K range".into()));
    }
    let d = seqs
        .first()
        .ok_or_else(|| Error::Data("no training sequences".into()))?
        .schema()
        .dim();
    let n_frames: usize = seqs.iter().map(|s| s.len()).sum();
    let results: Vec<(f64, f64)> = k_range
        .par_iter()
        .map(|&k| {
            let cfg = TrainingConfig {
                k,
                ..config.clone()
            };
            match fit(seqs, &cfg) {
                Ok((_, trace)) => {
                    let ll = *trace.log_likelihoods.last().expect("trace is never empty");
                    (bic_from_parts(ll, hmm_free_params(k, d), n_frames), ll)
                }
                Err(e) => {
                    warn!("K = {k} failed to train: {e}");
                    (f64::INFINITY, f64::NAN)
                }
            }
        })
        .collect();
    let scores: Vec<f64> = results.iter().map(|r| r.0).collect();
    let mut best: Option<(f64, usize)> = None;
    for (&k, &s) in k_range.iter().zip(&scores) {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            Some((bs, bk)) if bs < s || (bs == s && bk <= k) => Some((bs, bk)),
            _ => Some((s, k)),
        };
    }
    let best_k = best
        .ok_or_else(|| Error::Init("no candidate K could be trained".into()))?
        .1;
    Ok(BicScan {
        k_values: k_range.to_vec(),
        n_params: k_range.iter().map(|&k| hmm_free_params(k, d)).collect(),
        log_likelihoods: results.iter().map(|r| r.1).collect(),
        scores,
        best_k,
    })
}

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// A seeded train/test partition of event ids. Both lists keep corpus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub seed: u64,
    pub fraction: f64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    /// Checks that the manifest partitions `ids` exactly.
    pub fn validate(&self, ids: &[String]) -> Result<()> {
        let all: HashSet<&str> = ids.iter().map(String::as_str).collect();
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.test) {
            if !all.contains(id.as_str()) {
                return Err(Error::Data(format!("split lists unknown event '{id}'")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("split lists event '{id}' twice")));
            }
        }
        if seen.len() != all.len() {
            return Err(Error::Data(format!(
                "split covers {} of {} events",
                seen.len(),
                all.len()
            )));
        }
        Ok(())
    }
}

/// Shuffles `ids` with `seed` and assigns the first `round(fraction * n)` to
/// training, keeping at least one event on each side when `n >= 2`.
pub fn split_ids(ids: &[String], fraction: f64, seed: u64) -> Result<SplitManifest> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {fraction} is not in (0, 1)")));
    }
    let n = ids.len();
    if n < 2 {
        return Err(Error::Data(format!("cannot split {n} event(s)")));
    }
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let (train, test) = ids
        .iter()
        .zip(&is_train)
        .fold((vec![], vec![]), |(mut tr, mut te), (id, &t)| {
            if t { tr.push(id.clone()) } else { te.push(id.clone()) }
            (tr, te)
        });
    Ok(SplitManifest {
        seed,
        fraction,
        train,
        test,
    })
}

//! Internal-state learning for highway on-ramp merge interactions.
//!
//! A Gaussian-emission hidden Markov model is fitted to merge events with
//! Baum–Welch EM. The trained model is then read as a mixture whose weights
//! follow the HMM forward recursion (HMM-GMR), which reproduces the ego
//! vehicle's lateral velocity from the other observed features and exposes
//! the per-frame state beliefs for interpretation.
//!
//! Module map:
//!
//! * [`model`]: Gaussian components, model types, model documents.
//! * [`inference`]: scaled forward/backward passes and posteriors.
//! * [`learning`]: initialization, EM, BIC model-order selection.
//! * [`regression`]: HMM-GMR and GMM-GMR prediction.
//! * [`evaluation`]: skill scores and experiment protocols.
//! * [`data`]: track ingestion, event extraction, alignment, synthetic corpora.
//! * [`cli`]: command implementations behind the `hmmgmr` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod learning;
pub mod model;
pub mod regression;

pub use error::{Error, Result};
pub use model::{
    EventSequence, FeatureSchema, FrameMatrix, GaussianComponent, GmmModel, HmmModel, Model,
};

/// Library version recorded in every output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Domain types, Gaussian primitives and model documents.

pub mod document;
pub mod gaussian;
pub mod hmm;
pub mod schema;
pub mod sequence;

pub use document::{deserialize_model, serialize_model, serialize_with_provenance, Provenance};
pub use gaussian::{
    condition_gaussian, gaussian_logpdf, regularize_covariance, ConditionalGaussian,
    GaussianComponent, DEFAULT_REG_SCALE,
};
pub use hmm::{hmm_free_params, GmmModel, HmmModel, Model};
pub use schema::{Feature, FeatureSchema};
pub use sequence::{EventSequence, FrameMatrix};

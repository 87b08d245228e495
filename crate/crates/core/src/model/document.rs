//! Versioned JSON model documents.
//!
//! ```text
//! {
//!   "format": "hmmgmr-model",
//!   "version": 1,
//!   "kind": "hmm" | "gmm",
//!   "k": <number of states>,
//!   "features": [<feature name>, ...],      // column order of every vector
//!   "inputs": [<feature name>, ...],        // optional, default: all non-outputs
//!   "outputs": [<feature name>, ...],
//!   "pi": [<K reals>],                      // hmm; optional when k = 1
//!   "transition": [<K*K reals, row-major>], // hmm; optional when k = 1
//!   "weights": [<K reals>],                 // gmm; optional when k = 1
//!   "components": [{"mean": [<D reals>], "covariance": [<D*D reals, row-major>]}],
//!   "provenance": {...}                     // optional, ignored on load
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle
//! reproduces every parameter bit for bit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::gaussian::GaussianComponent;
use super::hmm::{GmmModel, HmmModel, Model};
use super::schema::FeatureSchema;

pub const FORMAT_NAME: &str = "hmmgmr-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Hmm,
    Gmm,
}

#[derive(Debug, Serialize, Deserialize)]
struct ComponentDoc {
    mean: Vec<f64>,
    covariance: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    version: u32,
    kind: Kind,
    k: usize,
    features: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inputs: Option<Vec<String>>,
    outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transition: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    components: Vec<ComponentDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

/// Metadata recorded alongside a model; not part of the model itself.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub library_version: String,
    pub command: String,
    pub seed: Option<u64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub fn serialize_model(model: &Model) -> Result<String> {
    serialize_with_provenance(model, None)
}

pub fn serialize_with_provenance(model: &Model, provenance: Option<&Provenance>) -> Result<String> {
    let schema = model.schema();
    let components = match model {
        Model::Hmm(m) => m.components(),
        Model::Gmm(m) => m.components(),
    };
    let mut doc = ModelDoc {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        kind: Kind::Hmm,
        k: model.n_states(),
        features: schema.names().to_vec(),
        inputs: Some(schema.input_names().iter().map(|s| s.to_string()).collect()),
        outputs: schema.output_names().iter().map(|s| s.to_string()).collect(),
        pi: None,
        transition: None,
        weights: None,
        components: components
            .iter()
            .map(|c| ComponentDoc {
                mean: c.mean().iter().copied().collect(),
                covariance: row_major(c.covariance()),
            })
            .collect(),
        provenance: provenance.map(serde_json::to_value).transpose()?,
    };
    match model {
        Model::Hmm(m) => {
            doc.pi = Some(m.pi().to_vec());
            doc.transition = Some(row_major(m.trans()));
        }
        Model::Gmm(m) => {
            doc.kind = Kind::Gmm;
            doc.weights = Some(m.weights().to_vec());
        }
    }
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn deserialize_model(text: &str) -> Result<Model> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    if doc.format != FORMAT_NAME {
        return Err(Error::InvalidModel(format!("unknown document format '{}'", doc.format)));
    }
    if doc.version != FORMAT_VERSION {
        return Err(Error::Version {
            found: doc.version,
            expected: FORMAT_VERSION,
        });
    }
    let k = doc.k;
    if doc.components.len() != k {
        return Err(Error::InvalidModel(format!(
            "k = {k} but {} components are listed",
            doc.components.len()
        )));
    }
    let schema = match &doc.inputs {
        Some(inputs) => {
            let idx = |n: &String| {
                doc.features
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::InvalidSchema(format!("'{n}' is not a listed feature")))
            };
            FeatureSchema::with_indices(
                doc.features.clone(),
                inputs.iter().map(idx).collect::<Result<_>>()?,
                doc.outputs.iter().map(idx).collect::<Result<_>>()?,
            )?
        }
        None => FeatureSchema::new(&doc.features, &doc.outputs)?,
    };
    let components = doc
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| {
            GaussianComponent::from_slices(&c.mean, &c.covariance).map_err(|e| {
                Error::InvalidModel(format!("component {i}: {e}"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match doc.kind {
        Kind::Hmm => {
            if doc.weights.is_some() {
                return Err(Error::InvalidModel("hmm document must not carry 'weights'".into()));
            }
            let (pi, trans) = if k == 1 {
                (vec![1.0], DMatrix::from_element(1, 1, 1.0))
            } else {
                let pi = doc
                    .pi
                    .ok_or_else(|| Error::InvalidModel("missing 'pi'".into()))?;
                let t = doc
                    .transition
                    .ok_or_else(|| Error::InvalidModel("missing 'transition'".into()))?;
                if t.len() != k * k {
                    return Err(Error::InvalidModel(format!(
                        "transition has {} entries, expected {}",
                        t.len(),
                        k * k
                    )));
                }
                (pi, DMatrix::from_row_slice(k, k, &t))
            };
            Ok(Model::Hmm(HmmModel::new(pi, trans, components, schema)?))
        }
        Kind::Gmm => {
            if doc.pi.is_some() || doc.transition.is_some() {
                return Err(Error::InvalidModel("gmm document must not carry 'pi'/'transition'".into()));
            }
            let w = if k == 1 {
                vec![1.0]
            } else {
                doc.weights
                    .ok_or_else(|| Error::InvalidModel("missing 'weights'".into()))?
            };
            Ok(Model::Gmm(GmmModel::new(w, components, schema)?))
        }
    }
}

impl HmmModel {
    pub fn to_document(&self) -> Result<String> {
        serialize_model(&Model::Hmm(self.clone()))
    }

    pub fn from_document(text: &str) -> Result<Self> {
        match deserialize_model(text)? {
            Model::Hmm(m) => Ok(m),
            Model::Gmm(_) => Err(Error::InvalidModel("expected an hmm document, found gmm".into())),
        }
    }
}

impl GmmModel {
    pub fn to_document(&self) -> Result<String> {
        serialize_model(&Model::Gmm(self.clone()))
    }

    pub fn from_document(text: &str) -> Result<Self> {
        match deserialize_model(text)? {
            Model::Gmm(m) => Ok(m),
            Model::Hmm(_) => Err(Error::InvalidModel("expected a gmm document, found hmm".into())),
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

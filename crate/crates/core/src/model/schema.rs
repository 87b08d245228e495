use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation features that can be extracted from a merge event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// Lead vehicle longitudinal speed minus ego longitudinal speed (m/s).
    DvLead,
    /// Bumper gap from the lag vehicle to the ego vehicle, positive when the lag trails (m).
    DxLag,
    /// Ego longitudinal speed (m/s).
    VxEgo,
    /// Ego lateral speed (m/s).
    VyEgo,
    /// Lag vehicle longitudinal speed minus ego longitudinal speed (m/s).
    DvLag,
    /// Bumper gap from the ego vehicle to the lead vehicle, positive when the lead is ahead (m).
    DxLead,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::DvLead,
        Feature::DxLag,
        Feature::VxEgo,
        Feature::VyEgo,
        Feature::DvLag,
        Feature::DxLead,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::DvLead => "dv_lead",
            Feature::DxLag => "dx_lag",
            Feature::VxEgo => "vx_ego",
            Feature::VyEgo => "vy_ego",
            Feature::DvLag => "dv_lag",
            Feature::DxLead => "dx_lead",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidSchema(format!("unknown feature '{s}'")))
    }
}

/// Ordered feature names with their split into regression inputs and outputs.
///
/// Names are free-form identifiers so that synthetic and generic data can be
/// modelled; the merge features of [`Feature`] are the usual vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    names: Vec<String>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
}

impl FeatureSchema {
    /// Builds a schema whose outputs are the named features and whose
    /// inputs are every other feature, in order.
    pub fn new<S: AsRef<str>>(names: &[S], outputs: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let mut out_idx = Vec::with_capacity(outputs.len());
        for o in outputs {
            let i = names
                .iter()
                .position(|n| n == o.as_ref())
                .ok_or_else(|| {
                    Error::InvalidSchema(format!("output '{}' is not a schema feature", o.as_ref()))
                })?;
            out_idx.push(i);
        }
        let inputs = (0..names.len()).filter(|i| !out_idx.contains(i)).collect();
        Self::with_indices(names, inputs, out_idx)
    }

    pub fn with_indices(names: Vec<String>, inputs: Vec<usize>, outputs: Vec<usize>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidSchema("no features".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains(|c: char| c == ',' || c.is_whitespace()) {
                return Err(Error::InvalidSchema(format!("bad feature name '{n}'")));
            }
            if names[..i].contains(n) {
                return Err(Error::InvalidSchema(format!("duplicate feature '{n}'")));
            }
        }
        if outputs.is_empty() {
            return Err(Error::InvalidSchema("output block is empty".into()));
        }
        let d = names.len();
        let mut seen = vec![false; d];
        for &i in inputs.iter().chain(&outputs) {
            if i >= d {
                return Err(Error::InvalidSchema(format!("index {i} out of range for {d} features")));
            }
            if seen[i] {
                return Err(Error::InvalidSchema(format!(
                    "feature '{}' appears in both blocks or twice",
                    names[i]
                )));
            }
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidSchema(format!(
                "feature '{}' is in neither the input nor the output block",
                names[i]
            )));
        }
        Ok(Self { names, inputs, outputs })
    }

    /// `[dv_lead, dx_lag, vx_ego, vy_ego]` with `vy_ego` as the output.
    pub fn merge_default() -> Self {
        Self::new(&["dv_lead", "dx_lag", "vx_ego", "vy_ego"], &["vy_ego"])
            .expect("default schema is valid")
    }

    /// Inputs from `inputs`, then `vy_ego` as the single output.
    pub fn merge_with_inputs<S: AsRef<str>>(inputs: &[S]) -> Result<Self> {
        let mut names: Vec<&str> = inputs.iter().map(|s| s.as_ref()).collect();
        names.push(Feature::VyEgo.as_str());
        Self::new(&names, &[Feature::VyEgo.as_str()])
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn input_indices(&self) -> &[usize] {
        &self.inputs
    }

    pub fn output_indices(&self) -> &[usize] {
        &self.outputs
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.inputs.iter().map(|&i| self.names[i].as_str()).collect()
    }

    pub fn output_names(&self) -> Vec<&str> {
        self.outputs.iter().map(|&i| self.names[i].as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Short label such as `dv_lead,dx_lag,vx_ego -> vy_ego`.
    pub fn label(&self) -> String {
        format!("{} -> {}", self.input_names().join(","), self.output_names().join(","))
    }
}

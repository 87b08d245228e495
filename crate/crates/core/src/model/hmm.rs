use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::gaussian::GaussianComponent;
use super::schema::FeatureSchema;

/// Tolerance on probability-vector and transition-row sums.
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// Gaussian-emission HMM: initial probabilities, row-stochastic transition
/// matrix (`trans[(j, k)] = p(z_t = k | z_{t-1} = j)`), and one full-covariance
/// component per state.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pi: Vec<f64>,
    trans: DMatrix<f64>,
    components: Vec<GaussianComponent>,
    schema: FeatureSchema,
}

impl HmmModel {
    pub fn new(
        pi: Vec<f64>,
        trans: DMatrix<f64>,
        components: Vec<GaussianComponent>,
        schema: FeatureSchema,
    ) -> Result<Self> {
        let k = components.len();
        if k == 0 {
            return Err(Error::InvalidModel("model needs at least one state".into()));
        }
        check_components(&components, &schema)?;
        check_probability_vector(&pi, k, "pi")?;
        if trans.nrows() != k || trans.ncols() != k {
            return Err(Error::InvalidModel(format!(
                "transition matrix is {}x{}, expected {k}x{k}",
                trans.nrows(),
                trans.ncols()
            )));
        }
        for j in 0..k {
            let row: Vec<f64> = trans.row(j).iter().copied().collect();
            check_probability_vector(&row, k, &format!("transition row {j}"))?;
        }
        Ok(Self {
            pi,
            trans,
            components,
            schema,
        })
    }

    pub fn n_states(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.schema.dim()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn trans(&self) -> &DMatrix<f64> {
        &self.trans
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    /// Relabels states: state `i` of the result is state `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.n_states();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Config(format!("{perm:?} is not a permutation of 0..{k}")));
        }
        Self::new(
            perm.iter().map(|&p| self.pi[p]).collect(),
            DMatrix::from_fn(k, k, |i, j| self.trans[(perm[i], perm[j])]),
            perm.iter().map(|&p| self.components[p].clone()).collect(),
            self.schema.clone(),
        )
    }

    /// Number of free parameters: `(K-1) + K(K-1) + K*D + K*D(D+1)/2`.
    pub fn n_free_params(&self) -> usize {
        hmm_free_params(self.n_states(), self.dim())
    }
}

pub fn hmm_free_params(k: usize, d: usize) -> usize {
    (k - 1) + k * (k - 1) + k * d + k * d * (d + 1) / 2
}

/// Static Gaussian mixture sharing the component representation of [`HmmModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    components: Vec<GaussianComponent>,
    schema: FeatureSchema,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianComponent>, schema: FeatureSchema) -> Result<Self> {
        let k = components.len();
        if k == 0 {
            return Err(Error::InvalidModel("mixture needs at least one component".into()));
        }
        check_components(&components, &schema)?;
        check_probability_vector(&weights, k, "weights")?;
        Ok(Self {
            weights,
            components,
            schema,
        })
    }

    pub fn n_states(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.schema.dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }
}

/// Either kind of model, as stored in a model document.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Hmm(HmmModel),
    Gmm(GmmModel),
}

impl Model {
    pub fn schema(&self) -> &FeatureSchema {
        match self {
            Model::Hmm(m) => m.schema(),
            Model::Gmm(m) => m.schema(),
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            Model::Hmm(m) => m.n_states(),
            Model::Gmm(m) => m.n_states(),
        }
    }
}

fn check_components(components: &[GaussianComponent], schema: &FeatureSchema) -> Result<()> {
    for (i, c) in components.iter().enumerate() {
        if c.dim() != schema.dim() {
            return Err(Error::InvalidModel(format!(
                "component {i} has dimension {}, schema has {}",
                c.dim(),
                schema.dim()
            )));
        }
    }
    Ok(())
}

fn check_probability_vector(p: &[f64], k: usize, what: &str) -> Result<()> {
    if p.len() != k {
        return Err(Error::InvalidModel(format!("{what} has length {}, expected {k}", p.len())));
    }
    if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidModel(format!("{what} has entry {v} outside [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(mu: f64) -> GaussianComponent {
        GaussianComponent::from_slices(&[mu, 0.0], &[1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    fn schema() -> FeatureSchema {
        FeatureSchema::new(&["a", "b"], &["b"]).unwrap()
    }

    #[test]
    fn validates_rows() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.3, 0.7]);
        let err = HmmModel::new(vec![0.5, 0.5], bad, vec![comp(0.0), comp(1.0)], schema()).unwrap_err();
        assert!(err.to_string().contains("transition row 0"), "{err}");
    }

    #[test]
    fn validates_pi_and_dims() {
        let a = DMatrix::identity(2, 2);
        assert!(HmmModel::new(vec![0.7, 0.7], a.clone(), vec![comp(0.0), comp(1.0)], schema()).is_err());
        let one_d = GaussianComponent::from_slices(&[0.0], &[1.0]).unwrap();
        assert!(HmmModel::new(vec![0.5, 0.5], a, vec![comp(0.0), one_d], schema()).is_err());
    }

    #[test]
    fn param_counts() {
        assert_eq!(hmm_free_params(1, 1), 2);
        assert_eq!(hmm_free_params(3, 4), 50);
    }

    #[test]
    fn permutation_relabels_everything() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let m = HmmModel::new(vec![0.3, 0.7], a, vec![comp(0.0), comp(5.0)], schema()).unwrap();
        let p = m.permuted(&[1, 0]).unwrap();
        assert_eq!(p.pi(), &[0.7, 0.3]);
        assert_eq!(p.trans()[(0, 0)], 0.8);
        assert_eq!(p.trans()[(0, 1)], 0.2);
        assert_eq!(p.components()[0].mean()[0], 5.0);
        assert!(m.permuted(&[0, 0]).is_err());
    }
}

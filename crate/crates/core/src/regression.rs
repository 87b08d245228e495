//! Gaussian mixture regression driven by HMM beliefs (HMM-GMR) and by static
//! mixture weights (GMM-GMR).
//!
//! Both predictors share the per-component conditionals of the output block
//! given the input block. They differ only in the activation weights: HMM-GMR
//! propagates the previous frame's weights through the transition matrix
//! before weighing in the input-block density, GMM-GMR uses fixed weights.
//! Beliefs only ever see the input block.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ConditionalGaussian, FeatureSchema, FrameMatrix, GaussianComponent, GmmModel, HmmModel};

/// Per-frame state activation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefTrajectory {
    /// `T x K`, rows sum to one.
    pub h: DMatrix<f64>,
    /// Row-wise argmax of `h` (lowest index on ties).
    pub dominant_state: Vec<usize>,
}

impl BeliefTrajectory {
    fn from_rows(h: DMatrix<f64>) -> Self {
        let dominant_state = (0..h.nrows())
            .map(|t| {
                let row = h.row(t);
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect();
        Self { h, dominant_state }
    }

    /// Number of frames whose dominant state differs from the previous frame's.
    pub fn switches(&self) -> usize {
        self.dominant_state.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Output mixture at every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    /// `T x K` mixture weights (identical to the belief rows).
    pub weights: DMatrix<f64>,
    /// One `K x |O|` matrix per frame: the conditional mean of each component.
    pub component_means: Vec<DMatrix<f64>>,
    /// One `|O| x |O|` conditional covariance per component; input-independent.
    pub component_covariances: Vec<DMatrix<f64>>,
    /// `T x |O|`, the weight-averaged conditional means.
    pub point_estimate: DMatrix<f64>,
}

impl PredictiveDistribution {
    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.nrows() == 0
    }

    /// First output dimension of the point estimate, one value per frame.
    pub fn point_column(&self, o: usize) -> Vec<f64> {
        self.point_estimate.column(o).iter().copied().collect()
    }
}

/// Input-marginal densities and output conditionals for each component.
#[derive(Debug, Clone)]
struct Conditionals {
    parts: Vec<ConditionalGaussian>,
    n_inputs: usize,
    n_outputs: usize,
}

impl Conditionals {
    fn new(components: &[GaussianComponent], schema: &FeatureSchema) -> Result<Self> {
        Ok(Self {
            parts: components
                .iter()
                .map(|c| c.conditional(schema))
                .collect::<Result<_>>()?,
            n_inputs: schema.input_indices().len(),
            n_outputs: schema.output_indices().len(),
        })
    }

    fn check_inputs(&self, inputs: &FrameMatrix) -> Result<()> {
        if inputs.dim() != self.n_inputs {
            return Err(Error::Dimension(format!(
                "inputs have width {}, model has {} input features",
                inputs.dim(),
                self.n_inputs
            )));
        }
        Ok(())
    }

    /// `prior_k * N(x_in | mu_k^I, Sigma_k^II)`, normalized in log space.
    fn weigh(&self, prior: &[f64], x_in: &[f64], t: usize) -> Result<Vec<f64>> {
        if x_in.len() != self.n_inputs {
            return Err(Error::Dimension(format!(
                "input has length {}, expected {}",
                x_in.len(),
                self.n_inputs
            )));
        }
        let mut logs: Vec<f64> = self
            .parts
            .iter()
            .zip(prior)
            .map(|(c, &p)| p.ln() + c.input_marginal().log_density(x_in))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::ImpossibleObservation { t });
        }
        let mut sum = 0.0;
        for v in &mut logs {
            *v = (*v - max).exp();
            sum += *v;
        }
        logs.iter_mut().for_each(|v| *v /= sum);
        Ok(logs)
    }

    fn distribution(&self, h: DMatrix<f64>, inputs: &FrameMatrix) -> PredictiveDistribution {
        let k = self.parts.len();
        let mut component_means = Vec::with_capacity(inputs.len());
        let mut point = DMatrix::zeros(inputs.len(), self.n_outputs);
        for (t, x) in inputs.rows().enumerate() {
            let mut means = DMatrix::zeros(k, self.n_outputs);
            for (kk, c) in self.parts.iter().enumerate() {
                let mu = c.mean_given(x);
                for o in 0..self.n_outputs {
                    means[(kk, o)] = mu[o];
                    point[(t, o)] += h[(t, kk)] * mu[o];
                }
            }
            component_means.push(means);
        }
        PredictiveDistribution {
            weights: h,
            component_means,
            component_covariances: self.parts.iter().map(|c| c.covariance().clone()).collect(),
            point_estimate: point,
        }
    }
}

/// HMM-GMR predictor with the per-component conditionals precomputed.
#[derive(Debug, Clone)]
pub struct HmmGmr {
    pi: Vec<f64>,
    trans: DMatrix<f64>,
    cond: Conditionals,
}

impl HmmGmr {
    pub fn new(model: &HmmModel) -> Result<Self> {
        Ok(Self {
            pi: model.pi().to_vec(),
            trans: model.trans().clone(),
            cond: Conditionals::new(model.components(), model.schema())?,
        })
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    /// `h_k ∝ pi_k N(x_in | mu_k^I, Sigma_k^II)`.
    pub fn belief_init(&self, x_in: &[f64]) -> Result<Vec<f64>> {
        self.cond.weigh(&self.pi, x_in, 0)
    }

    /// `h_k ∝ (sum_m h_prev[m] A[m][k]) N(x_in | mu_k^I, Sigma_k^II)`.
    pub fn belief_update(&self, h_prev: &[f64], x_in: &[f64]) -> Result<Vec<f64>> {
        self.update_at(h_prev, x_in, 0)
    }

    fn update_at(&self, h_prev: &[f64], x_in: &[f64], t: usize) -> Result<Vec<f64>> {
        let k = self.n_states();
        if h_prev.len() != k {
            return Err(Error::Dimension(format!("belief has length {}, expected {k}", h_prev.len())));
        }
        let pred: Vec<f64> = (0..k)
            .map(|kk| (0..k).map(|m| h_prev[m] * self.trans[(m, kk)]).sum())
            .collect();
        self.cond.weigh(&pred, x_in, t)
    }

    pub fn beliefs(&self, inputs: &FrameMatrix) -> Result<BeliefTrajectory> {
        self.cond.check_inputs(inputs)?;
        let k = self.n_states();
        let mut h = DMatrix::zeros(inputs.len(), k);
        let mut prev: Vec<f64> = Vec::new();
        for (t, x) in inputs.rows().enumerate() {
            let cur = if t == 0 {
                self.belief_init(x)?
            } else {
                self.update_at(&prev, x, t)?
            };
            for kk in 0..k {
                h[(t, kk)] = cur[kk];
            }
            prev = cur;
        }
        Ok(BeliefTrajectory::from_rows(h))
    }

    pub fn predict(&self, inputs: &FrameMatrix) -> Result<(BeliefTrajectory, PredictiveDistribution)> {
        let beliefs = self.beliefs(inputs)?;
        let dist = self.cond.distribution(beliefs.h.clone(), inputs);
        Ok((beliefs, dist))
    }
}

/// GMM-GMR predictor: frame-wise activations from fixed weights.
#[derive(Debug, Clone)]
pub struct GmmGmr {
    weights: Vec<f64>,
    cond: Conditionals,
}

impl GmmGmr {
    pub fn new(model: &GmmModel) -> Result<Self> {
        Ok(Self {
            weights: model.weights().to_vec(),
            cond: Conditionals::new(model.components(), model.schema())?,
        })
    }

    pub fn activation(&self, x_in: &[f64]) -> Result<Vec<f64>> {
        self.cond.weigh(&self.weights, x_in, 0)
    }

    pub fn predict(&self, inputs: &FrameMatrix) -> Result<(BeliefTrajectory, PredictiveDistribution)> {
        self.cond.check_inputs(inputs)?;
        let k = self.weights.len();
        let mut h = DMatrix::zeros(inputs.len(), k);
        for (t, x) in inputs.rows().enumerate() {
            let a = self.cond.weigh(&self.weights, x, t)?;
            for kk in 0..k {
                h[(t, kk)] = a[kk];
            }
        }
        let beliefs = BeliefTrajectory::from_rows(h);
        let dist = self.cond.distribution(beliefs.h.clone(), inputs);
        Ok((beliefs, dist))
    }
}

pub fn belief_init(model: &HmmModel, x_in: &[f64]) -> Result<Vec<f64>> {
    HmmGmr::new(model)?.belief_init(x_in)
}

pub fn belief_update(model: &HmmModel, h_prev: &[f64], x_in: &[f64]) -> Result<Vec<f64>> {
    HmmGmr::new(model)?.belief_update(h_prev, x_in)
}

/// HMM-GMR over a `T x |I|` input stream.
pub fn predict_sequence(model: &HmmModel, inputs: &FrameMatrix) -> Result<(BeliefTrajectory, PredictiveDistribution)> {
    HmmGmr::new(model)?.predict(inputs)
}

/// GMM-GMR over a `T x |I|` input stream.
pub fn gmm_gmr_predict(model: &GmmModel, inputs: &FrameMatrix) -> Result<(BeliefTrajectory, PredictiveDistribution)> {
    GmmGmr::new(model)?.predict(inputs)
}

/// Stationary distribution of a row-stochastic matrix, or `None` when it is
/// not unique (more than one closed communicating class).
pub fn stationary_distribution(trans: &DMatrix<f64>) -> Option<Vec<f64>> {
    let k = trans.nrows();
    if k == 1 {
        return Some(vec![1.0]);
    }
    // reachability closure over positive entries
    let mut reach = vec![vec![false; k]; k];
    for i in 0..k {
        reach[i][i] = true;
        for j in 0..k {
            if trans[(i, j)] > 0.0 {
                reach[i][j] = true;
            }
        }
    }
    for m in 0..k {
        for i in 0..k {
            if reach[i][m] {
                for j in 0..k {
                    if reach[m][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    // a state is in a closed class iff everything it reaches reaches it back
    let closed: Vec<usize> = (0..k)
        .filter(|&i| (0..k).all(|j| !reach[i][j] || reach[j][i]))
        .collect();
    let first = closed[0];
    if closed.iter().any(|&i| !reach[first][i]) {
        return None;
    }
    let mut m = trans.transpose() - DMatrix::<f64>::identity(k, k);
    for j in 0..k {
        m[(k - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(k);
    rhs[k - 1] = 1.0;
    let sol = m.lu().solve(&rhs)?;
    let mut w: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    Some(w)
}

/// Static mixture with the HMM's components and the stationary distribution
/// of its transition matrix as weights. Falls back to uniform weights (with a
/// warning) when the stationary distribution is not unique; the flag reports
/// whether the fallback was taken.
pub fn gmm_from_hmm(model: &HmmModel) -> Result<(GmmModel, bool)> {
    let k = model.n_states();
    let (weights, fallback) = match stationary_distribution(model.trans()) {
        Some(w) => (w, false),
        None => {
            warn!("transition matrix has no unique stationary distribution; using uniform weights");
            (vec![1.0 / k as f64; k], true)
        }
    };
    Ok((
        GmmModel::new(weights, model.components().to_vec(), model.schema().clone())?,
        fallback,
    ))
}

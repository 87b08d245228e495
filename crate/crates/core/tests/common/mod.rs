//! Fixtures and reference computations shared by the integration tests.
//! Densities here are computed from an explicit inverse and determinant,
//! independently of the library's Cholesky path.
#![allow(dead_code)]

use hmmgmr::{FeatureSchema, FrameMatrix, GaussianComponent, HmmModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn schema(d: usize) -> FeatureSchema {
    let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    FeatureSchema::new(&names, &names[d - 1..]).unwrap()
}

pub fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

pub fn random_component(rng: &mut ChaCha8Rng, d: usize) -> GaussianComponent {
    let mean = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
    let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cov = &b * b.transpose() * 0.5 + DMatrix::identity(d, d) * 0.3;
    GaussianComponent::new(mean, cov).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, k: usize, d: usize) -> HmmModel {
    let pi = simplex(rng, k);
    let rows: Vec<Vec<f64>> = (0..k).map(|_| simplex(rng, k)).collect();
    let trans = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
    let comps = (0..k).map(|_| random_component(rng, d)).collect();
    HmmModel::new(pi, trans, comps, schema(d)).unwrap()
}

pub fn random_frames(rng: &mut ChaCha8Rng, t: usize, d: usize) -> FrameMatrix {
    let data = (0..t * d).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0).collect();
    FrameMatrix::new(d, data).unwrap()
}

/// `N(x | mean, cov)` via inverse and determinant.
pub fn density(x: &[f64], mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = mean.len();
    let diff = DVector::from_column_slice(x) - mean;
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let q = (diff.transpose() * inv * &diff)[(0, 0)];
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(d as i32) * cov.determinant()).sqrt()
}

pub struct Enumerated {
    pub likelihood: f64,
    pub gamma: DMatrix<f64>,
    pub xi: Vec<DMatrix<f64>>,
}

/// Sums `p(X, Z)` over every state path by recursion on the path prefix.
pub fn enumerate(model: &HmmModel, frames: &FrameMatrix) -> Enumerated {
    let k = model.n_states();
    let t_len = frames.len();
    let dens: Vec<Vec<f64>> = frames
        .rows()
        .map(|x| {
            model
                .components()
                .iter()
                .map(|c| density(x, c.mean(), c.covariance()))
                .collect()
        })
        .collect();
    let mut out = Enumerated {
        likelihood: 0.0,
        gamma: DMatrix::zeros(t_len, k),
        xi: vec![DMatrix::zeros(k, k); t_len.saturating_sub(1)],
    };
    let mut path = Vec::with_capacity(t_len);
    fn walk(model: &HmmModel, dens: &[Vec<f64>], path: &mut Vec<usize>, p: f64, out: &mut Enumerated) {
        let t = path.len();
        if t == dens.len() {
            out.likelihood += p;
            for (s, &z) in path.iter().enumerate() {
                out.gamma[(s, z)] += p;
                if s > 0 {
                    out.xi[s - 1][(path[s - 1], z)] += p;
                }
            }
            return;
        }
        for z in 0..model.n_states() {
            let step = if t == 0 {
                model.pi()[z]
            } else {
                model.trans()[(path[t - 1], z)]
            };
            path.push(z);
            walk(model, dens, path, p * step * dens[t][z], out);
            path.pop();
        }
    }
    walk(model, &dens, &mut path, 1.0, &mut out);
    let l = out.likelihood;
    out.gamma /= l;
    for m in &mut out.xi {
        *m /= l;
    }
    out
}

pub fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

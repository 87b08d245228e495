//! Exact inference for a fixed [`HmmModel`].
//!
//! The forward and backward recursions run on per-frame renormalized
//! variables. Emission densities enter in log space and are shifted by their
//! per-frame maximum before exponentiation, so no frame underflows unless every
//! state assigns it zero density. The log normalizers double as the sequence
//! log-likelihood.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{EventSequence, FrameMatrix, HmmModel};

/// Output of the scaled forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `T x K`; row `t` is `p(z_t | x_1..x_t)`.
    pub scaled_alpha: DMatrix<f64>,
    /// `log c_t` with `c_t = p(x_t | x_1..x_{t-1})`; sums to the log-likelihood.
    pub log_scales: Vec<f64>,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct ForwardBackwardResult {
    pub log_likelihood: f64,
    /// `T x K` state posteriors.
    pub gamma: DMatrix<f64>,
    /// `T - 1` matrices; `xi[t - 1][(j, k)] = p(z_{t-1} = j, z_t = k | X)` for `t >= 1`.
    pub xi: Vec<DMatrix<f64>>,
    pub scaled_alpha: DMatrix<f64>,
    pub scaled_beta: DMatrix<f64>,
    pub log_scales: Vec<f64>,
}

/// `T x K` matrix of `log N(x_t | mu_k, Sigma_k)`.
pub fn log_emissions(model: &HmmModel, frames: &FrameMatrix) -> Result<DMatrix<f64>> {
    if frames.dim() != model.dim() {
        return Err(Error::Dimension(format!(
            "frames have width {}, model has dimension {}",
            frames.dim(),
            model.dim()
        )));
    }
    let k = model.n_states();
    let mut out = DMatrix::zeros(frames.len(), k);
    for (t, x) in frames.rows().enumerate() {
        for (j, c) in model.components().iter().enumerate() {
            out[(t, j)] = c.log_density(x);
        }
    }
    Ok(out)
}

/// Forward recursion over precomputed log emissions.
pub fn forward_log_em(pi: &[f64], trans: &DMatrix<f64>, log_em: &DMatrix<f64>) -> Result<ForwardPass> {
    let (t_len, k) = log_em.shape();
    if t_len == 0 {
        return Err(Error::InvalidSequence("empty sequence".into()));
    }
    if pi.len() != k || trans.shape() != (k, k) {
        return Err(Error::Dimension("emission columns do not match the state count".into()));
    }
    let mut alpha = DMatrix::zeros(t_len, k);
    let mut log_scales = Vec::with_capacity(t_len);
    let mut em = vec![0.0; k];
    let mut pred = vec![0.0; k];
    for t in 0..t_len {
        let shift = shifted_emissions(log_em, t, &mut em)?;
        if t == 0 {
            pred.copy_from_slice(pi);
        } else {
            for (kk, p) in pred.iter_mut().enumerate() {
                *p = (0..k).map(|m| alpha[(t - 1, m)] * trans[(m, kk)]).sum();
            }
        }
        let mut c = 0.0;
        for kk in 0..k {
            let v = pred[kk] * em[kk];
            alpha[(t, kk)] = v;
            c += v;
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::ImpossibleObservation { t });
        }
        for kk in 0..k {
            alpha[(t, kk)] /= c;
        }
        log_scales.push(c.ln() + shift);
    }
    let log_likelihood = log_scales.iter().sum();
    Ok(ForwardPass {
        scaled_alpha: alpha,
        log_scales,
        log_likelihood,
    })
}

/// Backward recursion scaled by the forward pass's normalizers; row `T-1` is all ones.
pub fn backward_log_em(trans: &DMatrix<f64>, log_em: &DMatrix<f64>, log_scales: &[f64]) -> DMatrix<f64> {
    let (t_len, k) = log_em.shape();
    let mut beta = DMatrix::from_element(t_len, k, 1.0);
    let mut w = vec![0.0; k];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for (m, wm) in w.iter_mut().enumerate() {
            *wm = (log_em[(t + 1, m)] - log_scales[t + 1]).exp() * beta[(t + 1, m)];
        }
        for j in 0..k {
            beta[(t, j)] = (0..k).map(|m| trans[(j, m)] * w[m]).sum();
        }
    }
    beta
}

/// Full E-step quantities over precomputed log emissions.
pub fn posteriors_log_em(pi: &[f64], trans: &DMatrix<f64>, log_em: &DMatrix<f64>) -> Result<ForwardBackwardResult> {
    let fwd = forward_log_em(pi, trans, log_em)?;
    let beta = backward_log_em(trans, log_em, &fwd.log_scales);
    let (t_len, k) = log_em.shape();
    let alpha = &fwd.scaled_alpha;

    let mut gamma = alpha.component_mul(&beta);
    for t in 0..t_len {
        let s: f64 = gamma.row(t).sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::ImpossibleObservation { t });
        }
        gamma.row_mut(t).unscale_mut(s);
    }

    let mut xi = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 1..t_len {
        let mut m = DMatrix::zeros(k, k);
        let mut total = 0.0;
        for kk in 0..k {
            let right = (log_em[(t, kk)] - fwd.log_scales[t]).exp() * beta[(t, kk)];
            for j in 0..k {
                let v = alpha[(t - 1, j)] * trans[(j, kk)] * right;
                m[(j, kk)] = v;
                total += v;
            }
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ImpossibleObservation { t });
        }
        m.unscale_mut(total);
        xi.push(m);
    }

    Ok(ForwardBackwardResult {
        log_likelihood: fwd.log_likelihood,
        gamma,
        xi,
        scaled_alpha: fwd.scaled_alpha,
        scaled_beta: beta,
        log_scales: fwd.log_scales,
    })
}

pub fn forward_frames(model: &HmmModel, frames: &FrameMatrix) -> Result<ForwardPass> {
    forward_log_em(model.pi(), model.trans(), &log_emissions(model, frames)?)
}

pub fn posteriors_frames(model: &HmmModel, frames: &FrameMatrix) -> Result<ForwardBackwardResult> {
    posteriors_log_em(model.pi(), model.trans(), &log_emissions(model, frames)?)
}

pub fn forward(model: &HmmModel, seq: &EventSequence) -> Result<ForwardPass> {
    check_schema(model, seq)?;
    forward_frames(model, seq.frames())
}

/// Scaled backward variables. `fwd` must come from [`forward`] on the same pair.
pub fn backward(model: &HmmModel, seq: &EventSequence, fwd: &ForwardPass) -> Result<DMatrix<f64>> {
    check_schema(model, seq)?;
    if fwd.log_scales.len() != seq.len() {
        return Err(Error::Dimension("forward pass does not belong to this sequence".into()));
    }
    let log_em = log_emissions(model, seq.frames())?;
    Ok(backward_log_em(model.trans(), &log_em, &fwd.log_scales))
}

pub fn posteriors(model: &HmmModel, seq: &EventSequence) -> Result<ForwardBackwardResult> {
    check_schema(model, seq)?;
    posteriors_frames(model, seq.frames())
}

/// Sum of per-sequence log-likelihoods.
pub fn total_log_likelihood<'a, I>(model: &HmmModel, seqs: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a EventSequence>,
{
    seqs.into_iter()
        .map(|s| forward(model, s).map(|f| f.log_likelihood))
        .sum()
}

fn check_schema(model: &HmmModel, seq: &EventSequence) -> Result<()> {
    if seq.schema().names() != model.schema().names() {
        return Err(Error::Dimension(format!(
            "event '{}' features [{}] differ from model features [{}]",
            seq.event_id(),
            seq.schema().names().join(","),
            model.schema().names().join(",")
        )));
    }
    Ok(())
}

fn shifted_emissions(log_em: &DMatrix<f64>, t: usize, out: &mut [f64]) -> Result<f64> {
    let shift = log_em.row(t).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::ImpossibleObservation { t });
    }
    for (k, o) in out.iter_mut().enumerate() {
        *o = (log_em[(t, k)] - shift).exp();
    }
    Ok(shift)
}

/// Brute-force posteriors obtained by summing over every state path.
#[derive(Debug, Clone)]
pub struct EnumerationResult {
    pub likelihood: f64,
    pub gamma: DMatrix<f64>,
    pub xi: Vec<DMatrix<f64>>,
}

/// Largest number of state paths [`enumerate_oracle`] will visit.
pub const MAX_ENUMERATED_PATHS: f64 = 1e6;

/// Sums `p(X, Z)` over all `K^T` state paths in linear space. Test oracle
/// for the scaled recursions; only usable at desk scale.
pub fn enumerate_oracle(model: &HmmModel, frames: &FrameMatrix) -> Result<EnumerationResult> {
    let k = model.n_states();
    let t_len = frames.len();
    let paths = (k as f64).powi(t_len as i32);
    if paths > MAX_ENUMERATED_PATHS {
        return Err(Error::StateSpaceTooLarge { paths });
    }
    if t_len == 0 {
        return Err(Error::InvalidSequence("empty sequence".into()));
    }
    if frames.dim() != model.dim() {
        return Err(Error::Dimension("frame width differs from model dimension".into()));
    }
    let density: Vec<Vec<f64>> = frames
        .rows()
        .map(|x| model.components().iter().map(|c| c.log_density(x).exp()).collect())
        .collect();
    let mut total = 0.0;
    let mut gamma = DMatrix::zeros(t_len, k);
    let mut xi = vec![DMatrix::zeros(k, k); t_len - 1];
    let mut path = vec![0usize; t_len];
    loop {
        let mut p = model.pi()[path[0]] * density[0][path[0]];
        for t in 1..t_len {
            p *= model.trans()[(path[t - 1], path[t])] * density[t][path[t]];
        }
        total += p;
        for t in 0..t_len {
            gamma[(t, path[t])] += p;
            if t > 0 {
                xi[t - 1][(path[t - 1], path[t])] += p;
            }
        }
        // odometer increment, last frame fastest
        let mut pos = t_len;
        loop {
            if pos == 0 {
                if !(total > 0.0) {
                    return Err(Error::ImpossibleObservation { t: 0 });
                }
                gamma.unscale_mut(total);
                for m in &mut xi {
                    m.unscale_mut(total);
                }
                return Ok(EnumerationResult {
                    likelihood: total,
                    gamma,
                    xi,
                });
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < k {
                break;
            }
            path[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureSchema, GaussianComponent};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn schema(d: usize) -> FeatureSchema {
        let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
        FeatureSchema::new(&names, &names[d - 1..]).unwrap()
    }

    fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    fn random_model(rng: &mut ChaCha8Rng, k: usize, d: usize) -> HmmModel {
        let pi = simplex(rng, k);
        let rows: Vec<Vec<f64>> = (0..k).map(|_| simplex(rng, k)).collect();
        let trans = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        let comps = (0..k)
            .map(|_| {
                let mean = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
                let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let cov = &b * b.transpose() * 0.5 + DMatrix::identity(d, d) * 0.3;
                GaussianComponent::new(mean, cov).unwrap()
            })
            .collect();
        HmmModel::new(pi, trans, comps, schema(d)).unwrap()
    }

    fn random_frames(rng: &mut ChaCha8Rng, t: usize, d: usize) -> FrameMatrix {
        let data = (0..t * d).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0).collect();
        FrameMatrix::new(d, data).unwrap()
    }

    fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn matches_enumeration_on_small_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (k, t) in [(2, 3), (3, 4), (2, 2), (3, 6), (1, 5)] {
            let m = random_model(&mut rng, k, 2);
            let x = random_frames(&mut rng, t, 2);
            let fb = posteriors_frames(&m, &x).unwrap();
            let or = enumerate_oracle(&m, &x).unwrap();
            let rel = (fb.log_likelihood.exp() - or.likelihood).abs() / or.likelihood;
            assert!(rel < 1e-12, "K={k} T={t}: relative likelihood error {rel}");
            assert!(max_abs(&fb.gamma, &or.gamma) < 1e-10);
            for (a, b) in fb.xi.iter().zip(&or.xi) {
                assert!(max_abs(a, b) < 1e-10);
            }
        }
    }

    #[test]
    fn single_state_is_sum_of_log_densities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_model(&mut rng, 1, 3);
        let x = random_frames(&mut rng, 7, 3);
        let expected: f64 = x.rows().map(|r| m.components()[0].log_density(r)).sum();
        let fb = posteriors_frames(&m, &x).unwrap();
        assert!((fb.log_likelihood - expected).abs() < 1e-12);
        assert!(fb.gamma.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn frozen_chain_is_mixture_of_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_model(&mut rng, 3, 2);
        let m = HmmModel::new(
            vec![1.0 / 3.0; 3],
            DMatrix::identity(3, 3),
            base.components().to_vec(),
            base.schema().clone(),
        )
        .unwrap();
        let x = random_frames(&mut rng, 5, 2);
        let per_state: Vec<f64> = m
            .components()
            .iter()
            .map(|c| x.rows().map(|r| c.log_density(r)).sum::<f64>().exp())
            .collect();
        let expected = per_state.iter().sum::<f64>() / 3.0;
        let fb = posteriors_frames(&m, &x).unwrap();
        assert!((fb.log_likelihood.exp() - expected).abs() / expected < 1e-12);
        // a frozen chain has one posterior for every frame
        for t in 1..5 {
            for k in 0..3 {
                assert!((fb.gamma[(t, k)] - fb.gamma[(0, k)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_frame_is_weighted_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(&mut rng, 3, 2);
        let x = random_frames(&mut rng, 1, 2);
        let expected: f64 = m
            .pi()
            .iter()
            .zip(m.components())
            .map(|(p, c)| p * c.log_density(x.row(0)).exp())
            .sum();
        let or = enumerate_oracle(&m, &x).unwrap();
        let fb = forward_frames(&m, &x).unwrap();
        assert!((or.likelihood - expected).abs() / expected < 1e-14);
        assert!((fb.log_likelihood - expected.ln()).abs() < 1e-12);
        assert!(fb.scaled_alpha.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn log_likelihood_is_label_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&mut rng, 3, 2);
        let x = random_frames(&mut rng, 20, 2);
        let a = forward_frames(&m, &x).unwrap().log_likelihood;
        let p = m.permuted(&[2, 0, 1]).unwrap();
        let fb = posteriors_frames(&p, &x).unwrap();
        assert!((fb.log_likelihood - a).abs() < 1e-9);
        let orig = posteriors_frames(&m, &x).unwrap();
        for t in 0..20 {
            for (i, &src) in [2, 0, 1].iter().enumerate() {
                assert!((fb.gamma[(t, i)] - orig.gamma[(t, src)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn posteriors_ignore_per_frame_emission_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_model(&mut rng, 3, 2);
        let x = random_frames(&mut rng, 8, 2);
        let log_em = log_emissions(&m, &x).unwrap();
        let mut shifted = log_em.clone();
        for k in 0..3 {
            shifted[(4, k)] += 250.0;
        }
        let a = posteriors_log_em(m.pi(), m.trans(), &log_em).unwrap();
        let b = posteriors_log_em(m.pi(), m.trans(), &shifted).unwrap();
        assert!(max_abs(&a.gamma, &b.gamma) < 1e-12);
        for (p, q) in a.xi.iter().zip(&b.xi) {
            assert!(max_abs(p, q) < 1e-12);
        }
        assert!((b.log_likelihood - a.log_likelihood - 250.0).abs() < 1e-9);
    }

    #[test]
    fn first_posterior_is_normalized_alpha_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_model(&mut rng, 2, 1);
        let x = random_frames(&mut rng, 6, 1);
        let fb = posteriors_frames(&m, &x).unwrap();
        let ab: Vec<f64> = (0..2).map(|k| fb.scaled_alpha[(0, k)] * fb.scaled_beta[(0, k)]).collect();
        let s: f64 = ab.iter().sum();
        for k in 0..2 {
            assert!((fb.gamma[(0, k)] - ab[k] / s).abs() < 1e-14);
        }
        assert!(fb.scaled_beta.row(5).iter().all(|&b| b == 1.0));
    }

    #[test]
    fn xi_marginals_match_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_model(&mut rng, 3, 3);
        let x = random_frames(&mut rng, 30, 3);
        let fb = posteriors_frames(&m, &x).unwrap();
        for (i, xi) in fb.xi.iter().enumerate() {
            assert!((xi.sum() - 1.0).abs() < 1e-10);
            for k in 0..3 {
                assert!((xi.column(k).sum() - fb.gamma[(i + 1, k)]).abs() < 1e-9);
                assert!((xi.row(k).sum() - fb.gamma[(i, k)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn impossible_frame_is_reported() {
        let log_em = DMatrix::from_row_slice(3, 2, &[0.0, -1.0, f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, 0.0]);
        let trans = DMatrix::from_element(2, 2, 0.5);
        let err = forward_log_em(&[0.5, 0.5], &trans, &log_em).unwrap_err();
        assert!(matches!(err, Error::ImpossibleObservation { t: 1 }));
    }

    #[test]
    fn far_outliers_do_not_underflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_model(&mut rng, 2, 2);
        let x = FrameMatrix::from_rows(&[[1e3, -1e3], [0.0, 0.0]]).unwrap();
        let fb = posteriors_frames(&m, &x).unwrap();
        assert!(fb.log_likelihood.is_finite());
        assert!((fb.gamma.row(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_width_and_large_enumeration_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = random_model(&mut rng, 3, 2);
        let x = random_frames(&mut rng, 4, 3);
        assert!(matches!(forward_frames(&m, &x), Err(Error::Dimension(_))));
        let long = random_frames(&mut rng, 13, 2);
        assert!(matches!(enumerate_oracle(&m, &long), Err(Error::StateSpaceTooLarge { .. })));
    }

    #[test]
    fn schema_names_must_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_model(&mut rng, 2, 2);
        let other = FeatureSchema::new(&["a", "b"], &["b"]).unwrap();
        let seq = EventSequence::with_uniform_time("e", random_frames(&mut rng, 3, 2), other).unwrap();
        assert!(matches!(posteriors(&m, &seq), Err(Error::Dimension(_))));
    }
}

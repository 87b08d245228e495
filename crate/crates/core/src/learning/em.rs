use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{log_emissions, posteriors_log_em};
use crate::model::{EventSequence, GaussianComponent, GmmModel, HmmModel};

use super::init::{init_gmm, init_model};
use super::{check_training_set, TrainingConfig};

/// A state whose posterior mass falls below this fraction of all frames keeps
/// its previous emission parameters.
pub const COLLAPSE_FRACTION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Pooled log-likelihood of each successive model, starting with the initial one.
    pub log_likelihoods: Vec<f64>,
    /// Number of M-steps applied.
    pub iterations_run: usize,
    pub converged: bool,
}

struct SeqStats {
    log_likelihood: f64,
    gamma: DMatrix<f64>,
    xi_sum: DMatrix<f64>,
}

fn e_step(model: &HmmModel, seqs: &[EventSequence]) -> Result<Vec<SeqStats>> {
    seqs.par_iter()
        .map(|s| {
            let log_em = log_emissions(model, s.frames())?;
            let fb = posteriors_log_em(model.pi(), model.trans(), &log_em)?;
            let k = model.n_states();
            let xi_sum = fb.xi.iter().fold(DMatrix::zeros(k, k), |acc, m| acc + m);
            Ok(SeqStats {
                log_likelihood: fb.log_likelihood,
                gamma: fb.gamma,
                xi_sum,
            })
        })
        .collect()
}

fn m_step(model: &HmmModel, seqs: &[EventSequence], stats: &[SeqStats], reg_scale: f64) -> Result<HmmModel> {
    let k = model.n_states();
    let mut pi = vec![0.0; k];
    let mut xi = DMatrix::zeros(k, k);
    for st in stats {
        for (p, g) in pi.iter_mut().zip(st.gamma.row(0).iter()) {
            *p += g;
        }
        xi += &st.xi_sum;
    }
    let n_seq = stats.len() as f64;
    pi.iter_mut().for_each(|p| *p /= n_seq);
    renormalize(&mut pi);

    let mut trans = DMatrix::zeros(k, k);
    for j in 0..k {
        let row_sum = xi.row(j).sum();
        if row_sum > 0.0 {
            for kk in 0..k {
                trans[(j, kk)] = xi[(j, kk)] / row_sum;
            }
        } else {
            trans.set_row(j, &model.trans().row(j));
        }
    }

    let components = weighted_components(
        model.components(),
        seqs,
        |seq_idx, t, kk| stats[seq_idx].gamma[(t, kk)],
        reg_scale,
    )?;
    HmmModel::new(pi, trans, components, model.schema().clone())
}

/// Gamma-weighted means and covariances pooled over every frame of every sequence.
fn weighted_components<F>(
    previous: &[GaussianComponent],
    seqs: &[EventSequence],
    weight: F,
    reg_scale: f64,
) -> Result<Vec<GaussianComponent>>
where
    F: Fn(usize, usize, usize) -> f64 + Sync,
{
    let k = previous.len();
    let total_frames: usize = seqs.iter().map(|s| s.len()).sum();
    (0..k)
        .into_par_iter()
        .map(|kk| {
            let d = previous[kk].dim();
            let mut mass = 0.0;
            let mut mean = DVector::zeros(d);
            for (si, s) in seqs.iter().enumerate() {
                for (t, x) in s.frames().rows().enumerate() {
                    let w = weight(si, t, kk);
                    mass += w;
                    for i in 0..d {
                        mean[i] += w * x[i];
                    }
                }
            }
            if !(mass >= COLLAPSE_FRACTION * total_frames as f64) {
                warn!("state {kk} collapsed (posterior mass {mass:.3e}); keeping its previous emission");
                return Ok(previous[kk].clone());
            }
            mean /= mass;
            let mut cov = DMatrix::zeros(d, d);
            for (si, s) in seqs.iter().enumerate() {
                for (t, x) in s.frames().rows().enumerate() {
                    let w = weight(si, t, kk);
                    for i in 0..d {
                        let di = w * (x[i] - mean[i]);
                        for j in 0..=i {
                            cov[(i, j)] += di * (x[j] - mean[j]);
                        }
                    }
                }
            }
            for i in 0..d {
                for j in 0..=i {
                    cov[(i, j)] /= mass;
                    cov[(j, i)] = cov[(i, j)];
                }
            }
            GaussianComponent::regularized(mean, cov, reg_scale)
        })
        .collect()
}

fn renormalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
}

/// One Baum–Welch iteration. Returns the updated model and the pooled
/// log-likelihood of the input model.
pub fn em_step(model: &HmmModel, seqs: &[EventSequence], reg_scale: f64) -> Result<(HmmModel, f64)> {
    check_training_set(seqs)?;
    let stats = e_step(model, seqs)?;
    let ll = stats.iter().map(|s| s.log_likelihood).sum();
    Ok((m_step(model, seqs, &stats, reg_scale)?, ll))
}

/// Baum–Welch EM from the initialization named in `config`.
pub fn fit(seqs: &[EventSequence], config: &TrainingConfig) -> Result<(HmmModel, TrainingTrace)> {
    config.validate()?;
    check_training_set(seqs)?;
    let init = init_model(seqs, config.k, config.init, config.seed, config.reg_scale)?;
    fit_from(init, seqs, config)
}

/// Baum–Welch EM from an explicit initial model; `config.k` and `config.init` are ignored.
pub fn fit_from(init: HmmModel, seqs: &[EventSequence], config: &TrainingConfig) -> Result<(HmmModel, TrainingTrace)> {
    check_training_set(seqs)?;
    if seqs[0].schema() != init.schema() {
        return Err(Error::Data("training events do not match the model schema".into()));
    }
    run_em(
        init,
        config,
        |m| {
            let stats = e_step(m, seqs)?;
            let ll = stats.iter().map(|s| s.log_likelihood).sum();
            Ok((ll, stats))
        },
        |m, stats| m_step(m, seqs, &stats, config.reg_scale),
    )
}

fn run_em<M, S, E, U>(init: M, config: &TrainingConfig, e: E, m: U) -> Result<(M, TrainingTrace)>
where
    E: Fn(&M) -> Result<(f64, S)>,
    U: Fn(&M, S) -> Result<M>,
{
    let mut model = init;
    let mut lls: Vec<f64> = Vec::new();
    let mut iterations_run = 0;
    let mut converged = false;
    for iteration in 0..=config.max_iters {
        let (ll, stats) = e(&model)?;
        if !ll.is_finite() {
            return Err(Error::NonFinite { iteration });
        }
        if let Some(&prev) = lls.last() {
            lls.push(ll);
            if (ll - prev) / prev.abs().max(f64::MIN_POSITIVE) < config.rel_tol {
                converged = true;
                break;
            }
        } else {
            lls.push(ll);
        }
        if iteration == config.max_iters {
            break;
        }
        model = m(&model, stats)?;
        iterations_run += 1;
    }
    Ok((
        model,
        TrainingTrace {
            log_likelihoods: lls,
            iterations_run,
            converged,
        },
    ))
}

struct GmmStats {
    log_likelihood: f64,
    resp: DMatrix<f64>,
}

fn gmm_e_step(model: &GmmModel, seqs: &[EventSequence]) -> Result<Vec<GmmStats>> {
    let log_w: Vec<f64> = model.weights().iter().map(|w| w.ln()).collect();
    seqs.par_iter()
        .map(|s| {
            let k = model.n_states();
            let mut resp = DMatrix::zeros(s.len(), k);
            let mut ll = 0.0;
            for (t, x) in s.frames().rows().enumerate() {
                let mut max = f64::NEG_INFINITY;
                for (kk, c) in model.components().iter().enumerate() {
                    let v = log_w[kk] + c.log_density(x);
                    resp[(t, kk)] = v;
                    max = max.max(v);
                }
                if !max.is_finite() {
                    return Err(Error::ImpossibleObservation { t });
                }
                let mut sum = 0.0;
                for kk in 0..k {
                    let e = (resp[(t, kk)] - max).exp();
                    resp[(t, kk)] = e;
                    sum += e;
                }
                resp.row_mut(t).unscale_mut(sum);
                ll += max + sum.ln();
            }
            Ok(GmmStats {
                log_likelihood: ll,
                resp,
            })
        })
        .collect()
}

fn gmm_m_step(model: &GmmModel, seqs: &[EventSequence], stats: &[GmmStats], reg_scale: f64) -> Result<GmmModel> {
    let k = model.n_states();
    let mut w = vec![0.0; k];
    for st in stats {
        for kk in 0..k {
            w[kk] += st.resp.column(kk).sum();
        }
    }
    renormalize(&mut w);
    let components = weighted_components(
        model.components(),
        seqs,
        |si, t, kk| stats[si].resp[(t, kk)],
        reg_scale,
    )?;
    GmmModel::new(w, components, model.schema().clone())
}

/// One EM iteration for a static mixture, frames treated as independent.
pub fn gmm_em_step(model: &GmmModel, seqs: &[EventSequence], reg_scale: f64) -> Result<(GmmModel, f64)> {
    check_training_set(seqs)?;
    let stats = gmm_e_step(model, seqs)?;
    let ll = stats.iter().map(|s| s.log_likelihood).sum();
    Ok((gmm_m_step(model, seqs, &stats, reg_scale)?, ll))
}

/// Standard mixture EM (frame independence) with the same initializations and
/// stopping rule as [`fit`].
pub fn fit_gmm(seqs: &[EventSequence], config: &TrainingConfig) -> Result<(GmmModel, TrainingTrace)> {
    config.validate()?;
    check_training_set(seqs)?;
    let init = init_gmm(seqs, config.k, config.init, config.seed, config.reg_scale)?;
    run_em(
        init,
        config,
        |m| {
            let stats = gmm_e_step(m, seqs)?;
            let ll = stats.iter().map(|s| s.log_likelihood).sum();
            Ok((ll, stats))
        },
        |m, stats| gmm_m_step(m, seqs, &stats, config.reg_scale),
    )
}

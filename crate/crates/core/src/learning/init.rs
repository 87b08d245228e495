use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{EventSequence, GaussianComponent, GmmModel, HmmModel};

use super::{check_training_set, InitMethod};

pub const KMEANS_MAX_ITERS: usize = 100;

/// Per-frame bin labels: frame `t` of a length-`T` sequence goes to bin `floor(t K / T)`.
pub fn k_bins_labels(seqs: &[EventSequence], k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    seqs.iter()
        .map(|s| {
            let t_len = s.len();
            if t_len < k {
                return Err(Error::Init(format!(
                    "event '{}' has {t_len} frames, too few for {k} bins",
                    s.event_id()
                )));
            }
            Ok((0..t_len).map(|t| t * k / t_len).collect())
        })
        .collect()
}

/// Per-frame cluster labels from k-means on the pooled frames.
///
/// Seeding is k-means++ driven by `seed`. A cluster that empties during the
/// Lloyd iterations is re-seeded at the frame farthest from its current
/// centroid (lowest pooled index on ties).
pub fn k_means_labels(seqs: &[EventSequence], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let points: Vec<&[f64]> = seqs.iter().flat_map(|s| s.frames().rows()).collect();
    let n = points.len();
    if n < k {
        return Err(Error::Init(format!("{n} frames cannot seed {k} clusters")));
    }
    let d = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].to_vec();
        for (dist, p) in d2.iter_mut().zip(&points) {
            *dist = dist.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = nearest(p, &centroids).0;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &centroids[labels[i]])))
                    .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                centroids[c] = points[far].to_vec();
                labels[far] = c;
                changed = true;
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }

    let mut out = Vec::with_capacity(seqs.len());
    let mut offset = 0;
    for s in seqs {
        out.push(labels[offset..offset + s.len()].to_vec());
        offset += s.len();
    }
    Ok(out)
}

pub fn init_k_bins(seqs: &[EventSequence], k: usize, reg_scale: f64) -> Result<HmmModel> {
    check_training_set(seqs)?;
    let labels = k_bins_labels(seqs, k)?;
    hmm_from_labels(seqs, &labels, k, reg_scale)
}

pub fn init_k_means(seqs: &[EventSequence], k: usize, seed: u64, reg_scale: f64) -> Result<HmmModel> {
    check_training_set(seqs)?;
    let labels = k_means_labels(seqs, k, seed)?;
    hmm_from_labels(seqs, &labels, k, reg_scale)
}

/// Mixture initialization sharing the HMM labelings; weights are add-one
/// smoothed label frequencies.
pub fn init_gmm(seqs: &[EventSequence], k: usize, method: InitMethod, seed: u64, reg_scale: f64) -> Result<GmmModel> {
    check_training_set(seqs)?;
    let labels = labels_for(seqs, k, method, seed)?;
    let components = components_from_labels(seqs, &labels, k, reg_scale)?;
    let mut counts = vec![1.0; k];
    for l in labels.iter().flatten() {
        counts[*l] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    let weights = counts.iter().map(|c| c / total).collect();
    GmmModel::new(weights, components, seqs[0].schema().clone())
}

pub(super) fn init_model(seqs: &[EventSequence], k: usize, method: InitMethod, seed: u64, reg_scale: f64) -> Result<HmmModel> {
    match method {
        InitMethod::KBins => init_k_bins(seqs, k, reg_scale),
        InitMethod::KMeans => init_k_means(seqs, k, seed, reg_scale),
    }
}

fn labels_for(seqs: &[EventSequence], k: usize, method: InitMethod, seed: u64) -> Result<Vec<Vec<usize>>> {
    match method {
        InitMethod::KBins => k_bins_labels(seqs, k),
        InitMethod::KMeans => k_means_labels(seqs, k, seed),
    }
}

/// Components from per-label moments; `pi` and `A` from add-one smoothed
/// counts of first-frame labels and consecutive label pairs.
fn hmm_from_labels(seqs: &[EventSequence], labels: &[Vec<usize>], k: usize, reg_scale: f64) -> Result<HmmModel> {
    let components = components_from_labels(seqs, labels, k, reg_scale)?;
    let mut pi = vec![1.0; k];
    let mut trans = DMatrix::from_element(k, k, 1.0);
    for l in labels {
        pi[l[0]] += 1.0;
        for w in l.windows(2) {
            trans[(w[0], w[1])] += 1.0;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    for j in 0..k {
        let s = trans.row(j).sum();
        trans.row_mut(j).unscale_mut(s);
    }
    HmmModel::new(pi, trans, components, seqs[0].schema().clone())
}

fn components_from_labels(
    seqs: &[EventSequence],
    labels: &[Vec<usize>],
    k: usize,
    reg_scale: f64,
) -> Result<Vec<GaussianComponent>> {
    let d = seqs[0].frames().dim();
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); k];
    for (s, l) in seqs.iter().zip(labels) {
        for (x, &c) in s.frames().rows().zip(l) {
            members[c].push(x);
        }
    }
    members
        .iter()
        .enumerate()
        .map(|(c, pts)| {
            if pts.is_empty() {
                return Err(Error::Init(format!("state {c} received no frames")));
            }
            let (mean, cov) = sample_moments(pts, d);
            GaussianComponent::regularized(mean, cov, reg_scale)
        })
        .collect()
}

/// Mean and maximum-likelihood (divide-by-n) covariance.
pub(super) fn sample_moments(points: &[&[f64]], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = points.len() as f64;
    let mut mean = DVector::zeros(d);
    for p in points {
        for i in 0..d {
            mean[i] += p[i];
        }
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for p in points {
        for i in 0..d {
            let di = p[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            cov[(i, j)] /= n;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    (mean, cov)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureSchema, FrameMatrix};

    fn seq(id: &str, rows: &[[f64; 2]]) -> EventSequence {
        EventSequence::with_uniform_time(
            id,
            FrameMatrix::from_rows(rows).unwrap(),
            FeatureSchema::new(&["x", "y"], &["y"]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn bin_labels_are_contiguous_and_equal() {
        let s = seq("a", &[[0.0, 0.0]; 7]);
        assert_eq!(k_bins_labels(std::slice::from_ref(&s), 3).unwrap()[0], vec![0, 0, 0, 1, 1, 2, 2]);
        assert!(matches!(k_bins_labels(&[s], 8), Err(Error::Init(_))));
    }

    #[test]
    fn k1_is_global_moments() {
        let s = seq("a", &[[1.0, 2.0], [3.0, 2.0], [2.0, 5.0]]);
        let m = init_k_bins(std::slice::from_ref(&s), 1, 0.0).unwrap();
        assert_eq!(m.pi(), &[1.0]);
        assert_eq!(m.trans()[(0, 0)], 1.0);
        assert_eq!(m.components()[0].mean().as_slice(), &[2.0, 3.0]);
        let km = init_k_means(&[s], 1, 9, 0.0).unwrap();
        assert_eq!(km, m);
    }

    #[test]
    fn identical_frames_regularize_to_scaled_identity() {
        let s = seq("a", &[[1.5, -0.5]; 4]);
        let m = init_k_bins(&[s], 2, 1e-6).unwrap();
        for c in m.components() {
            assert_eq!(c.mean().as_slice(), &[1.5, -0.5]);
            assert_eq!(c.covariance(), &(DMatrix::identity(2, 2) * 1e-6));
        }
    }

    #[test]
    fn k_means_is_deterministic_and_finds_blobs() {
        let mut rows = Vec::new();
        for i in 0..40 {
            let e = (i as f64 * 0.37).sin() * 0.2;
            rows.push(if i % 2 == 0 { [e, 1.0 + e] } else { [10.0 + e, -5.0 - e] });
        }
        let s = seq("a", &rows);
        let a = init_k_means(std::slice::from_ref(&s), 2, 3, 1e-6).unwrap();
        let b = init_k_means(&[s], 2, 3, 1e-6).unwrap();
        assert_eq!(a, b);
        let mut xs: Vec<f64> = a.components().iter().map(|c| c.mean()[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!(xs[0].abs() < 0.05 && (xs[1] - 10.0).abs() < 0.5);
    }

    #[test]
    fn left_to_right_counts() {
        let rows: Vec<[f64; 2]> = (0..6).map(|t| [t as f64, 0.1 * t as f64]).collect();
        let m = init_k_bins(&[seq("a", &rows)], 2, 1e-6).unwrap();
        // labels 0 0 0 1 1 1: pairs 00 x2, 01 x1, 11 x2 plus one each
        assert_eq!(m.pi(), &[2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(m.trans()[(0, 0)], 3.0 / 5.0);
        assert_eq!(m.trans()[(0, 1)], 2.0 / 5.0);
        assert_eq!(m.trans()[(1, 0)], 1.0 / 4.0);
    }
}

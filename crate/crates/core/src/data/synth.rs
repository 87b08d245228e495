use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EventSequence, FeatureSchema, FrameMatrix, GaussianComponent, HmmModel};

use super::split::{split_ids, DEFAULT_TRAIN_FRACTION};
use super::Corpus;

/// Generator configuration: a ground-truth HMM plus corpus size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub features: Vec<String>,
    pub outputs: Vec<String>,
    pub pi: Vec<f64>,
    /// Row-stochastic, `transition[j][k] = p(k | j)`.
    pub transition: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub n_events: usize,
    pub length: usize,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    /// State-independent channels appended after `features` as inputs.
    #[serde(default)]
    pub noise: Vec<NoiseChannel>,
}

/// A channel unrelated to the states and the outputs: a stationary AR(1)
/// process per event with the given mean, spread and lag-one correlation
/// (`persistence = 0` is white noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseChannel {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    #[serde(default)]
    pub persistence: f64,
}

fn default_fraction() -> f64 {
    DEFAULT_TRAIN_FRACTION
}

/// Left-to-right-biased three-phase chain used by the presets.
pub const PHASE_TRANSITION: [[f64; 3]; 3] = [[0.95, 0.04, 0.01], [0.01, 0.95, 0.04], [0.005, 0.005, 0.99]];

fn cov_from_sd_corr(sd: &[f64], corr: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let d = sd.len();
    let mut c = vec![vec![0.0; d]; d];
    for i in 0..d {
        c[i][i] = sd[i] * sd[i];
    }
    for &(i, j, r) in corr {
        c[i][j] = r * sd[i] * sd[j];
        c[j][i] = c[i][j];
    }
    c
}

fn phase_pi() -> Vec<f64> {
    vec![0.90, 0.08, 0.02]
}

fn phase_trans() -> Vec<Vec<f64>> {
    PHASE_TRANSITION.iter().map(|r| r.to_vec()).collect()
}

impl SynthSpec {
    /// Three merge phases over `[dv_lead, dx_lag, vx_ego, vy_ego]`, `vy_ego`
    /// as output. State centres and spreads follow typical per-phase ranges of
    /// the merge variables (spread = range / 4). The approach phase has a much
    /// wider lag gap than the later phases, so its cloud swallows theirs along
    /// that axis and only the time ordering separates them cleanly.
    pub fn merge_default() -> Self {
        let means = vec![
            vec![0.25, 5.6, -3.35, 0.05],
            vec![-0.55, 6.5, -2.1, 0.30],
            vec![-0.95, 7.25, -3.8, 0.12],
        ];
        let sds = [[0.475, 5.0, 0.675, 0.06], [0.275, 0.85, 0.35, 0.06], [0.375, 0.925, 0.45, 0.06]];
        let corr = [(0, 3, 0.3), (1, 3, -0.3), (2, 3, 0.4), (0, 2, 0.2)];
        Self {
            features: ["dv_lead", "dx_lag", "vx_ego", "vy_ego"].map(String::from).to_vec(),
            outputs: vec!["vy_ego".into()],
            pi: phase_pi(),
            transition: phase_trans(),
            means,
            covariances: sds.iter().map(|s| cov_from_sd_corr(s, &corr)).collect(),
            n_events: 600,
            length: 100,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            noise: Vec::new(),
        }
    }

    /// [`Self::merge_default`] plus the two low-significance channels
    /// `dv_lag` and `dx_lead` as slowly drifting state-independent noise.
    pub fn merge_with_noise() -> Self {
        Self {
            noise: vec![
                NoiseChannel {
                    name: "dv_lag".into(),
                    mean: 0.3,
                    sd: 0.5,
                    persistence: 0.95,
                },
                NoiseChannel {
                    name: "dx_lead".into(),
                    mean: 12.0,
                    sd: 4.0,
                    persistence: 0.95,
                },
            ],
            ..Self::merge_default()
        }
    }

    /// Two features `x`, `y` with three isotropic states (sd 0.5) at
    /// `(1,1)`, `(4,1)`, `(4,4)`; `y` is the output.
    pub fn separated_2d(n_events: usize, length: usize) -> Self {
        let iso = vec![vec![0.25, 0.0], vec![0.0, 0.25]];
        Self {
            features: vec!["x".into(), "y".into()],
            outputs: vec!["y".into()],
            pi: phase_pi(),
            transition: phase_trans(),
            means: vec![vec![1.0, 1.0], vec![4.0, 1.0], vec![4.0, 4.0]],
            covariances: vec![iso.clone(), iso.clone(), iso],
            n_events,
            length,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            noise: Vec::new(),
        }
    }

    /// State features followed by the noise channels.
    pub fn schema(&self) -> Result<FeatureSchema> {
        let names: Vec<&str> = self
            .features
            .iter()
            .map(String::as_str)
            .chain(self.noise.iter().map(|n| n.name.as_str()))
            .collect();
        let outputs: Vec<&str> = self.outputs.iter().map(String::as_str).collect();
        FeatureSchema::new(&names, &outputs)
    }

    /// The generating model. Noise channels enter with their stationary
    /// marginal, identical in every state. Rejects non-stochastic `pi` or
    /// `transition` and non-positive-definite covariances.
    pub fn truth_model(&self) -> Result<HmmModel> {
        let ds = self.features.len();
        let states = self.state_components()?;
        let d = ds + self.noise.len();
        let components = states
            .iter()
            .map(|c| {
                let mean = DVector::from_fn(d, |i, _| if i < ds { c.mean()[i] } else { self.noise[i - ds].mean });
                let cov = DMatrix::from_fn(d, d, |i, j| match (i < ds, j < ds) {
                    (true, true) => c.covariance()[(i, j)],
                    (false, false) if i == j => self.noise[i - ds].sd.powi(2),
                    _ => 0.0,
                });
                GaussianComponent::new(mean, cov)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Config(format!("invalid spec: {e}")))?;
        let k = components.len();
        let trans = DMatrix::from_fn(k, k, |j, l| self.transition[j][l]);
        HmmModel::new(self.pi.clone(), trans, components, self.schema()?)
            .map_err(|e| Error::Config(format!("invalid spec: {e}")))
    }

    fn state_components(&self) -> Result<Vec<GaussianComponent>> {
        for n in &self.noise {
            if !(n.sd > 0.0 && n.sd.is_finite() && n.mean.is_finite()) {
                return Err(Error::Config(format!("noise channel '{}' needs a finite mean and positive sd", n.name)));
            }
            if !(0.0..1.0).contains(&n.persistence) {
                return Err(Error::Config(format!("noise channel '{}' persistence must be in [0, 1)", n.name)));
            }
        }
        let k = self.means.len();
        let d = self.features.len();
        if self.covariances.len() != k || self.transition.len() != k {
            return Err(Error::Config(format!(
                "spec has {k} means, {} covariances, {} transition rows",
                self.covariances.len(),
                self.transition.len()
            )));
        }
        if self.transition.iter().any(|r| r.len() != k) {
            return Err(Error::Config("transition rows must have one entry per state".into()));
        }
        self
            .means
            .iter()
            .zip(&self.covariances)
            .map(|(m, c)| {
                if m.len() != d || c.len() != d || c.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("state parameters must be {d}-dimensional")));
                }
                GaussianComponent::new(DVector::from_column_slice(m), DMatrix::from_fn(d, d, |i, j| c[i][j]))
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Config(format!("invalid spec: {e}")))
    }
}

/// Synthetic corpus with its generator and the sampled state paths.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub truth: HmmModel,
    pub paths: Vec<Vec<usize>>,
}

fn draw_index(rng: &mut ChaCha8Rng, p: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in p.enumerate() {
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Samples state paths from `(pi, A)` and observations from the emissions.
/// Events are named `syn0000`, `syn0001`, ... and split with the same seed.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthOutput> {
    if spec.n_events < 2 || spec.length < 2 {
        return Err(Error::Config("spec needs at least 2 events of at least 2 frames".into()));
    }
    let truth = spec.truth_model()?;
    let schema = truth.schema().clone();
    let (k, d) = (truth.n_states(), truth.dim());
    let states = spec.state_components()?;
    let ds = spec.features.len();
    let chols: Vec<DMatrix<f64>> = states
        .iter()
        .map(|c| {
            c.covariance()
                .clone()
                .cholesky()
                .map(|ch| ch.l())
                .ok_or_else(|| Error::Config("covariance is not positive definite".into()))
        })
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(spec.n_events);
    let mut paths = Vec::with_capacity(spec.n_events);
    let mut z = DVector::zeros(ds);
    let mut drift = vec![0.0; spec.noise.len()];
    for e in 0..spec.n_events {
        let mut path = Vec::with_capacity(spec.length);
        let mut data = Vec::with_capacity(spec.length * d);
        let mut state = draw_index(&mut rng, truth.pi().iter().copied());
        for t in 0..spec.length {
            if t > 0 {
                state = draw_index(&mut rng, (0..k).map(|l| truth.trans()[(state, l)]));
            }
            path.push(state);
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let x = states[state].mean() + &chols[state] * &z;
            data.extend(x.iter());
            for (n, u) in spec.noise.iter().zip(&mut drift) {
                let eps: f64 = rng.sample(StandardNormal);
                *u = if t == 0 {
                    eps
                } else {
                    n.persistence * *u + (1.0 - n.persistence * n.persistence).sqrt() * eps
                };
                data.push(n.mean + n.sd * *u);
            }
        }
        events.push(EventSequence::with_uniform_time(
            format!("syn{e:04}"),
            FrameMatrix::new(d, data)?,
            schema.clone(),
        )?);
        paths.push(path);
    }
    let ids: Vec<String> = events.iter().map(|e| e.event_id().to_string()).collect();
    let split = split_ids(&ids, spec.train_fraction, seed)?;
    Ok(SynthOutput {
        corpus: Corpus::new(events, split, schema)?,
        truth,
        paths,
    })
}

//! Prediction scores and the two experiment protocols: a sweep over input
//! feature sets and a comparison of regression approaches and initializations.

use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::learning::{fit, fit_gmm, InitMethod, TrainingConfig};
use crate::model::{EventSequence, FeatureSchema, GmmModel, HmmModel};
use crate::regression::{gmm_from_hmm, gmm_gmr_predict, predict_sequence, BeliefTrajectory, PredictiveDistribution};

/// Scores of one prediction against its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventScore {
    pub mse: f64,
    /// MSE of the reference's own mean.
    pub mse_ref: f64,
    /// `(mse - mse_ref) / (0 - mse_ref)`; `None` for a constant reference.
    pub s_mse: Option<f64>,
    pub rmse: f64,
}

/// Scores `predicted` against `reference`. A constant reference has
/// `mse_ref = 0` and no skill score.
pub fn score_event(predicted: &[f64], reference: &[f64]) -> Result<EventScore> {
    if predicted.len() != reference.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} reference values",
            predicted.len(),
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Dimension("cannot score an empty sequence".into()));
    }
    if predicted.iter().chain(reference).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in scored sequence".into()));
    }
    let n = reference.len() as f64;
    let mean = reference.iter().sum::<f64>() / n;
    let mse = predicted.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum::<f64>() / n;
    let mse_ref = reference.iter().map(|r| (mean - r) * (mean - r)).sum::<f64>() / n;
    let s_mse = (mse_ref > 0.0).then(|| (mse - mse_ref) / (0.0 - mse_ref));
    Ok(EventScore {
        mse,
        mse_ref,
        s_mse,
        rmse: mse.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    HmmGmr,
    GmmGmr,
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::HmmGmr => "HMM-GMR",
            Approach::GmmGmr => "GMM-GMR",
        })
    }
}

/// Where GMM-GMR takes its mixture from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GmmSource {
    /// A GMM fitted by its own EM on the pooled training frames.
    #[default]
    Trained,
    /// The HMM's components weighted by its stationary distribution.
    FromHmm,
}

impl fmt::Display for GmmSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GmmSource::Trained => "trained",
            GmmSource::FromHmm => "from-hmm",
        })
    }
}

/// One experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub schema: FeatureSchema,
    pub approach: Approach,
    pub gmm_source: GmmSource,
    pub training: TrainingConfig,
}

impl EvalConfig {
    pub fn hmm(schema: FeatureSchema, training: TrainingConfig) -> Self {
        Self {
            schema,
            approach: Approach::HmmGmr,
            gmm_source: GmmSource::Trained,
            training,
        }
    }

    pub fn descriptor(&self) -> ConfigDescriptor {
        ConfigDescriptor {
            inputs: self.schema.input_names().join("+"),
            output: self.schema.output_names().join("+"),
            approach: self.approach,
            init: self.training.init,
            k: self.training.k,
            seed: self.training.seed,
            gmm_source: (self.approach == Approach::GmmGmr).then_some(self.gmm_source),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDescriptor {
    pub inputs: String,
    pub output: String,
    pub approach: Approach,
    pub init: InitMethod,
    pub k: usize,
    pub seed: u64,
    pub gmm_source: Option<GmmSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub event_id: String,
    pub score: EventScore,
    /// Dominant-state changes along the event.
    pub switches: usize,
    /// Set when the event is left out of the skill-score mean.
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: ConfigDescriptor,
    pub per_event: Vec<EventReport>,
    /// Mean skill score over the events that have one.
    pub mean_s_mse: f64,
    /// Mean RMSE over all scored events.
    pub mean_rmse: f64,
    pub mean_switches: f64,
    /// True when a stationary-weight GMM fell back to uniform weights.
    pub uniform_fallback: bool,
}

/// A fitted predictor for one configuration.
#[derive(Debug, Clone)]
pub enum Predictor {
    Hmm(HmmModel),
    Gmm(GmmModel, bool),
}

impl Predictor {
    pub fn predict(&self, event: &EventSequence) -> Result<(BeliefTrajectory, PredictiveDistribution)> {
        let inputs = event.inputs();
        match self {
            Predictor::Hmm(m) => predict_sequence(m, &inputs),
            Predictor::Gmm(g, _) => gmm_gmr_predict(g, &inputs),
        }
    }
}

/// Fits the predictor described by `config` on `train`, which must already
/// carry `config.schema`.
pub fn train_predictor(train: &[EventSequence], config: &EvalConfig) -> Result<Predictor> {
    match (config.approach, config.gmm_source) {
        (Approach::HmmGmr, _) => Ok(Predictor::Hmm(fit(train, &config.training)?.0)),
        (Approach::GmmGmr, GmmSource::Trained) => Ok(Predictor::Gmm(fit_gmm(train, &config.training)?.0, false)),
        (Approach::GmmGmr, GmmSource::FromHmm) => {
            let (g, fallback) = gmm_from_hmm(&fit(train, &config.training)?.0)?;
            Ok(Predictor::Gmm(g, fallback))
        }
    }
}

fn check_single_output(schema: &FeatureSchema) -> Result<()> {
    if schema.output_indices().len() != 1 {
        return Err(Error::Config(format!(
            "evaluation scores exactly one output, schema has {}",
            schema.output_indices().len()
        )));
    }
    Ok(())
}

/// Trains on the corpus's training split and scores every test event.
pub fn evaluate_config(corpus: &Corpus, config: &EvalConfig) -> Result<EvaluationReport> {
    check_single_output(&config.schema)?;
    let view = corpus.project(&config.schema)?;
    let predictor = train_predictor(&view.train_events(), config)?;
    let test = view.test_events();
    if test.is_empty() {
        return Err(Error::Data("the test split is empty".into()));
    }
    let per_event = test
        .iter()
        .map(|e| {
            let (beliefs, dist) = predictor.predict(e)?;
            let reference: Vec<f64> = e.outputs().rows().map(|r| r[0]).collect();
            let score = score_event(&dist.point_column(0), &reference)?;
            Ok(EventReport {
                event_id: e.event_id().to_string(),
                score,
                switches: beliefs.switches(),
                excluded: score.s_mse.is_none().then(|| "constant reference output".to_string()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scored: Vec<f64> = per_event.iter().filter_map(|r| r.score.s_mse).collect();
    let n = per_event.len() as f64;
    Ok(EvaluationReport {
        config: config.descriptor(),
        mean_s_mse: if scored.is_empty() {
            f64::NAN
        } else {
            scored.iter().sum::<f64>() / scored.len() as f64
        },
        mean_rmse: per_event.iter().map(|r| r.score.rmse).sum::<f64>() / n,
        mean_switches: per_event.iter().map(|r| r.switches as f64).sum::<f64>() / n,
        uniform_fallback: matches!(predictor, Predictor::Gmm(_, true)),
        per_event,
    })
}

/// A configuration that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFailure {
    pub config: ConfigDescriptor,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    /// Sorted by mean skill score, best first; ties keep input order.
    pub reports: Vec<EvaluationReport>,
    pub failures: Vec<ConfigFailure>,
}

fn sort_by_skill(reports: &mut [EvaluationReport]) {
    reports.sort_by(|a, b| b.mean_s_mse.total_cmp(&a.mean_s_mse));
}

/// Trains one HMM-GMR per feature set with `training` and scores it on the
/// test split. Failing sets are collected and the sweep carries on.
pub fn run_variable_sweep(corpus: &Corpus, feature_sets: &[FeatureSchema], training: &TrainingConfig) -> SweepResult {
    let configs: Vec<EvalConfig> = feature_sets
        .iter()
        .map(|s| EvalConfig::hmm(s.clone(), training.clone()))
        .collect();
    let outcomes: Vec<Result<EvaluationReport>> = configs.par_iter().map(|c| evaluate_config(corpus, c)).collect();
    let mut out = SweepResult::default();
    for (c, o) in configs.iter().zip(outcomes) {
        match o {
            Ok(r) => out.reports.push(r),
            Err(e) => {
                log::warn!("feature set {} failed: {e}", c.schema.label());
                out.failures.push(ConfigFailure {
                    config: c.descriptor(),
                    message: e.to_string(),
                })
            }
        }
    }
    sort_by_skill(&mut out.reports);
    out
}

/// The four configurations of the approach comparison, in report order.
pub fn comparison_configs(schema: &FeatureSchema, training: &TrainingConfig, gmm_source: GmmSource) -> Vec<EvalConfig> {
    let mut v = Vec::with_capacity(4);
    for approach in [Approach::HmmGmr, Approach::GmmGmr] {
        for init in [InitMethod::KBins, InitMethod::KMeans] {
            v.push(EvalConfig {
                schema: schema.clone(),
                approach,
                gmm_source,
                training: TrainingConfig {
                    init,
                    ..training.clone()
                },
            });
        }
    }
    v
}

/// HMM-GMR and GMM-GMR, each with k-bins and k-means initialization, on the
/// same split and seed. Reports come back in that fixed order.
pub fn run_approach_comparison(
    corpus: &Corpus,
    schema: &FeatureSchema,
    training: &TrainingConfig,
    gmm_source: GmmSource,
) -> Result<Vec<EvaluationReport>> {
    comparison_configs(schema, training, gmm_source)
        .par_iter()
        .map(|c| evaluate_config(corpus, c))
        .collect()
}

fn approach_label(c: &ConfigDescriptor) -> String {
    format!("{} ({})", c.approach, c.init)
}

/// Fixed-width table of the aggregate scores, one row per report.
pub fn format_table(title: &str, reports: &[EvaluationReport], failures: &[ConfigFailure]) -> String {
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            [
                r.config.inputs.clone(),
                approach_label(&r.config),
                format!("{:.3}", r.mean_s_mse),
                format!("{:.3}", r.mean_rmse),
                format!("{:.2}", r.mean_switches),
            ]
        })
        .collect();
    let head = ["inputs", "approach", "mean S_MSE", "mean RMSE", "mean switches"];
    let mut width = head.map(str::len);
    for r in &rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let line = |s: &mut String, cells: [&str; 5]| {
        let _ = writeln!(
            s,
            "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}  {:>w4$}",
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            cells[4],
            w0 = width[0],
            w1 = width[1],
            w2 = width[2],
            w3 = width[3],
            w4 = width[4]
        );
    };
    line(&mut s, head);
    let _ = writeln!(s, "{}", "-".repeat(width.iter().sum::<usize>() + 8));
    for r in &rows {
        line(&mut s, [&r[0], &r[1], &r[2], &r[3], &r[4]]);
    }
    for f in failures {
        let _ = writeln!(s, "{:<w0$}  FAILED: {}", f.config.inputs, f.message, w0 = width[0]);
    }
    s
}

/// Aggregate scores as comma-separated values.
pub fn format_csv(reports: &[EvaluationReport], failures: &[ConfigFailure]) -> String {
    let mut s = String::from("inputs,output,approach,init,k,seed,gmm_source,mean_s_mse,mean_rmse,mean_switches,status\n");
    let src = |g: Option<GmmSource>| g.map(|g| g.to_string()).unwrap_or_default();
    for r in reports {
        let c = &r.config;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},ok",
            c.inputs,
            c.output,
            c.approach,
            c.init,
            c.k,
            c.seed,
            src(c.gmm_source),
            r.mean_s_mse,
            r.mean_rmse,
            r.mean_switches
        );
    }
    for f in failures {
        let c = &f.config;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},,,,failed",
            c.inputs,
            c.output,
            c.approach,
            c.init,
            c.k,
            c.seed,
            src(c.gmm_source)
        );
    }
    s
}

/// Per-event scores of several reports as comma-separated values.
pub fn format_events_csv(reports: &[EvaluationReport]) -> String {
    let mut s = String::from("inputs,approach,init,event_id,mse,mse_ref,s_mse,rmse,switches,excluded\n");
    for r in reports {
        for e in &r.per_event {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.config.inputs,
                r.config.approach,
                r.config.init,
                e.event_id,
                e.score.mse,
                e.score.mse_ref,
                e.score.s_mse.map(|v| v.to_string()).unwrap_or_default(),
                e.score.rmse,
                e.switches,
                e.excluded.as_deref().unwrap_or("")
            );
        }
    }
    s
}

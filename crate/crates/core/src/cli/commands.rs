use std::fs;
use std::path::Path;

use log::info;

use crate::data::{
    build_corpus, load_labels_file, load_tracks_file, read_corpus, read_split, synth_corpus, write_corpus, Corpus,
    SynthSpec,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    format_csv, format_events_csv, format_table, run_approach_comparison, run_variable_sweep,
    score_event, GmmSource,
};
use crate::learning::{fit, fit_gmm, select_k, TrainingConfig};
use crate::model::{
    deserialize_model, serialize_with_provenance, EventSequence, Feature, FeatureSchema, Model, Provenance,
};
use crate::regression::{gmm_gmr_predict, predict_sequence, BeliefTrajectory, PredictiveDistribution};

use super::output::{fixed, num, write_text, Header, Table};
use super::{
    split_list, Command, DecodeArgs, EvaluateArgs, IngestArgs, ModelKind, Preset, PredictArgs, SelectKArgs,
    SplitChoice, StateRangesArgs, SynthArgs, TrainArgs,
};

pub fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::SelectK(a) => cmd_select_k(a),
        Command::Decode(a) => decode(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::StateRanges(a) => state_ranges(a),
    }
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn training_line(c: &TrainingConfig) -> String {
    format!(
        "k={} init={} max_iters={} rel_tol={:e} reg_scale={:e}",
        c.k, c.init, c.max_iters, c.rel_tol, c.reg_scale
    )
}

fn provenance(header: &Header) -> Provenance {
    Provenance {
        library_version: crate::VERSION.to_string(),
        command: header.command.clone(),
        seed: header.seed,
        notes: header.config.clone(),
    }
}

fn write_model(path: &Path, model: &Model, header: &Header) -> Result<()> {
    crate::data::write_file(path, serialize_with_provenance(model, Some(&provenance(header)))?.as_bytes())
}

fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    deserialize_model(&text)
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SynthSpec>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => match a.preset {
            Preset::Merge => SynthSpec::merge_default(),
            Preset::MergeNoise => SynthSpec::merge_with_noise(),
            Preset::Separated => SynthSpec::separated_2d(200, 50),
        },
    };
    if let Some(n) = a.events {
        spec.n_events = n;
    }
    if let Some(t) = a.length {
        spec.length = t;
    }
    let out = synth_corpus(&spec, a.seed)?;
    let header = Header {
        command: "synth".into(),
        seed: Some(a.seed),
        config: vec![format!(
            "events={} length={} states={} features={}",
            spec.n_events,
            spec.length,
            spec.means.len(),
            out.corpus.schema().label()
        )],
    };
    write_corpus(&a.out, &out.corpus, &header.lines())?;
    write_model(&a.out.join("truth.json"), &Model::Hmm(out.truth.clone()), &header)?;
    crate::data::write_file(
        &a.out.join("spec.json"),
        (serde_json::to_string_pretty(&spec)? + "\n").as_bytes(),
    )?;
    let mut states = String::from("event_id,frame,state\n");
    for (e, path) in out.corpus.events().iter().zip(&out.paths) {
        for (t, z) in path.iter().enumerate() {
            states.push_str(&format!("{},{},{}\n", e.event_id(), t, z + 1));
        }
    }
    write_text(&a.out.join("states.csv"), &header, &states)?;
    info!("wrote {} events to {}", out.corpus.events().len(), a.out.display());
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let mut features = split_list(&a.features)
        .iter()
        .map(|s| s.parse::<Feature>())
        .collect::<Result<Vec<_>>>()?;
    if !features.contains(&Feature::VyEgo) {
        features.push(Feature::VyEgo);
    }
    let tracks = load_tracks_file(&a.tracks)?;
    let labels = load_labels_file(&a.labels)?;
    let align = (a.align > 0).then_some(a.align);
    let corpus = build_corpus(&tracks, &labels, &features, align, a.train_fraction, a.seed)?;
    let header = Header {
        command: "ingest".into(),
        seed: Some(a.seed),
        config: vec![format!(
            "features={} align={} train_fraction={}",
            corpus.schema().label(),
            a.align,
            a.train_fraction
        )],
    };
    write_corpus(&a.out, &corpus, &header.lines())
}

/// The corpus viewed with `inputs` as inputs and its own outputs as outputs.
fn corpus_view(corpus: &Corpus, inputs: Option<&[String]>) -> Result<Corpus> {
    match inputs {
        None => Ok(corpus.clone()),
        Some(inputs) => corpus.project(&schema_with_inputs(corpus.schema(), inputs)?),
    }
}

fn schema_with_inputs(base: &FeatureSchema, inputs: &[String]) -> Result<FeatureSchema> {
    let outputs: Vec<String> = base.output_names().iter().map(|s| s.to_string()).collect();
    let names: Vec<String> = inputs.iter().cloned().chain(outputs.iter().cloned()).collect();
    FeatureSchema::new(&names, &outputs)
}

fn pick(corpus: &Corpus, split: SplitChoice) -> Vec<EventSequence> {
    match split {
        SplitChoice::Train => corpus.train_events(),
        SplitChoice::Test => corpus.test_events(),
        SplitChoice::All => corpus.events().to_vec(),
    }
}

fn split_name(s: SplitChoice) -> &'static str {
    match s {
        SplitChoice::Train => "train",
        SplitChoice::Test => "test",
        SplitChoice::All => "all",
    }
}

fn train(a: &TrainArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let (cfg, inputs) = a.opts.resolve()?;
    let view = corpus_view(&corpus, inputs.as_deref())?;
    let events = pick(&view, a.split);
    let header = Header {
        command: "train".into(),
        seed: Some(cfg.seed),
        config: vec![
            training_line(&cfg),
            format!(
                "kind={} split={} features={}",
                match a.kind {
                    ModelKind::Hmm => "hmm",
                    ModelKind::Gmm => "gmm",
                },
                split_name(a.split),
                view.schema().label()
            ),
        ],
    };
    let (model, trace) = match a.kind {
        ModelKind::Hmm => {
            let (m, t) = fit(&events, &cfg)?;
            (Model::Hmm(m), t)
        }
        ModelKind::Gmm => {
            let (m, t) = fit_gmm(&events, &cfg)?;
            (Model::Gmm(m), t)
        }
    };
    make_dir(&a.out)?;
    write_model(&a.out.join("model.json"), &model, &header)?;
    let mut t = Table::new(["iteration", "log_likelihood", "improvement"]);
    for (i, ll) in trace.log_likelihoods.iter().enumerate() {
        let d = if i == 0 { String::new() } else { num(ll - trace.log_likelihoods[i - 1]) };
        t.push(vec![i.to_string(), num(*ll), d]);
    }
    let mut h = header.clone();
    h.config
        .push(format!("iterations_run={} converged={}", trace.iterations_run, trace.converged));
    t.write(&a.out, "trace", &h)?;
    info!(
        "trained K={} in {} iterations (converged: {})",
        cfg.k, trace.iterations_run, trace.converged
    );
    Ok(())
}

fn parse_k_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad K range '{s}'"));
    let v: Vec<usize> = if let Some((lo, hi)) = s.split_once('-') {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        (lo..=hi).collect()
    } else {
        split_list(s)
            .iter()
            .map(|p| p.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if v.is_empty() || v.contains(&0) {
        return Err(bad());
    }
    Ok(v)
}

fn cmd_select_k(a: &SelectKArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let (cfg, inputs) = a.opts.resolve()?;
    let ks = parse_k_range(&a.k_range)?;
    let view = corpus_view(&corpus, inputs.as_deref())?;
    let events = pick(&view, a.split);
    let scan = select_k(&events, &ks, &cfg)?;
    let header = Header {
        command: "select-k".into(),
        seed: Some(cfg.seed),
        config: vec![
            training_line(&cfg),
            format!(
                "k_range={} split={} features={}",
                a.k_range,
                split_name(a.split),
                view.schema().label()
            ),
        ],
    };
    let mut t = Table::new(["k", "n_params", "log_likelihood", "bic", "best"]);
    for i in 0..scan.k_values.len() {
        t.push(vec![
            scan.k_values[i].to_string(),
            scan.n_params[i].to_string(),
            num(scan.log_likelihoods[i]),
            num(scan.scores[i]),
            if scan.k_values[i] == scan.best_k { "*".into() } else { String::new() },
        ]);
    }
    make_dir(&a.out)?;
    t.write(&a.out, "bic", &header)?;
    info!("best K = {}", scan.best_k);
    Ok(())
}

fn find_event(corpus: &Corpus, id: &str) -> Result<EventSequence> {
    corpus
        .events()
        .iter()
        .find(|e| e.event_id() == id)
        .cloned()
        .ok_or_else(|| Error::Data(format!("no event '{id}' in the corpus")))
}

fn run_model(model: &Model, event: &EventSequence) -> Result<(BeliefTrajectory, PredictiveDistribution)> {
    let e = event.project(model.schema())?;
    let inputs = e.inputs();
    match model {
        Model::Hmm(m) => predict_sequence(m, &inputs),
        Model::Gmm(g) => gmm_gmr_predict(g, &inputs),
    }
}

fn model_line(model: &Model) -> String {
    format!(
        "model={} k={} features={}",
        match model {
            Model::Hmm(_) => "hmm",
            Model::Gmm(_) => "gmm",
        },
        model.n_states(),
        model.schema().label()
    )
}

fn safe_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn decode(a: &DecodeArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let corpus = read_corpus(&a.corpus)?;
    let event = find_event(&corpus, &a.event)?;
    let (beliefs, _) = run_model(&model, &event)?;
    let k = model.n_states();
    let mut cols = vec!["frame".to_string(), "timestamp_ms".to_string()];
    cols.extend((1..=k).map(|i| format!("h_{i}")));
    cols.extend(["row_sum".to_string(), "dominant_state".to_string()]);
    let mut t = Table::new(cols);
    for (f, ts) in event.timestamps_ms().iter().enumerate() {
        let mut row = vec![f.to_string(), num(*ts)];
        let h = beliefs.h.row(f);
        row.extend(h.iter().map(|v| fixed(*v)));
        row.push(fixed(h.sum()));
        row.push((beliefs.dominant_state[f] + 1).to_string());
        t.push(row);
    }
    let header = Header {
        command: "decode".into(),
        seed: None,
        config: vec![model_line(&model), format!("event={}", a.event)],
    };
    make_dir(&a.out)?;
    t.write(&a.out, &format!("beliefs_{}", safe_stem(&a.event)), &header)
}

fn predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let corpus = read_corpus(&a.corpus)?;
    let events = match &a.event {
        Some(id) => vec![find_event(&corpus, id)?],
        None => pick(&corpus, a.split),
    };
    let schema = model.schema();
    let outs = schema.output_names();
    let k = model.n_states();
    let mut cols = vec!["event_id".to_string(), "frame".into(), "timestamp_ms".into()];
    for o in &outs {
        cols.push(format!("reference_{o}"));
        cols.push(format!("predicted_{o}"));
    }
    cols.extend((1..=k).map(|i| format!("h_{i}")));
    for i in 1..=k {
        for o in &outs {
            cols.push(format!("mean_{i}_{o}"));
        }
    }
    let mut frames = Table::new(cols);
    let mut scores = Table::new(["event_id", "mse", "mse_ref", "s_mse", "rmse", "switches"]);
    for e in &events {
        let (beliefs, dist) = run_model(&model, e)?;
        let reference = e.project(schema)?.outputs();
        for f in 0..e.len() {
            let mut row = vec![e.event_id().to_string(), f.to_string(), num(e.timestamps_ms()[f])];
            for o in 0..outs.len() {
                row.push(num(reference.row(f)[o]));
                row.push(num(dist.point_estimate[(f, o)]));
            }
            row.extend(dist.weights.row(f).iter().map(|v| num(*v)));
            let means = &dist.component_means[f];
            for i in 0..k {
                for o in 0..outs.len() {
                    row.push(num(means[(i, o)]));
                }
            }
            frames.push(row);
        }
        let refs: Vec<f64> = reference.rows().map(|r| r[0]).collect();
        let s = score_event(&dist.point_column(0), &refs)?;
        scores.push(vec![
            e.event_id().to_string(),
            num(s.mse),
            num(s.mse_ref),
            s.s_mse.map(num).unwrap_or_else(|| "excluded".into()),
            num(s.rmse),
            beliefs.switches().to_string(),
        ]);
    }
    let header = Header {
        command: "predict".into(),
        seed: None,
        config: vec![
            model_line(&model),
            match &a.event {
                Some(id) => format!("event={id}"),
                None => format!("split={}", split_name(a.split)),
            },
        ],
    };
    make_dir(&a.out)?;
    frames.write(&a.out, "predictions", &header)?;
    scores.write(&a.out, "prediction_scores", &header)
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut corpus = read_corpus(&a.corpus)?;
    if let Some(p) = &a.split_file {
        corpus = corpus.with_manifest(read_split(p)?)?;
    }
    let (cfg, inputs) = a.opts.resolve()?;
    let gmm_source: GmmSource = a.gmm_source.into();
    let header = Header {
        command: "evaluate".into(),
        seed: Some(cfg.seed),
        config: vec![
            training_line(&cfg),
            format!(
                "train_events={} test_events={} split_seed={} gmm_source={gmm_source}",
                corpus.split().train.len(),
                corpus.split().test.len(),
                corpus.split().seed
            ),
        ],
    };
    make_dir(&a.out)?;
    let run_compare = a.compare || a.feature_sets.is_empty();
    if !a.feature_sets.is_empty() {
        let sets = a
            .feature_sets
            .iter()
            .map(|s| schema_with_inputs(corpus.schema(), &split_list(s)))
            .collect::<Result<Vec<_>>>()?;
        let sweep = run_variable_sweep(&corpus, &sets, &cfg);
        write_text(
            &a.out.join("variables.txt"),
            &header,
            &format_table("Feature-set sweep (HMM-GMR)", &sweep.reports, &sweep.failures),
        )?;
        write_text(
            &a.out.join("variables.csv"),
            &header,
            &format_csv(&sweep.reports, &sweep.failures),
        )?;
        write_text(
            &a.out.join("variables_events.csv"),
            &header,
            &format_events_csv(&sweep.reports),
        )?;
        if sweep.reports.is_empty() {
            return Err(Error::Data("every feature set failed".into()));
        }
    }
    if run_compare {
        let view = corpus_view(&corpus, inputs.as_deref())?;
        let reports = run_approach_comparison(&view, view.schema(), &cfg, gmm_source)?;
        write_text(
            &a.out.join("approaches.txt"),
            &header,
            &format_table("Approach comparison", &reports, &[]),
        )?;
        write_text(&a.out.join("approaches.csv"), &header, &format_csv(&reports, &[]))?;
        write_text(
            &a.out.join("approaches_events.csv"),
            &header,
            &format_events_csv(&reports),
        )?;
    }
    Ok(())
}

fn state_ranges(a: &StateRangesArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let corpus = read_corpus(&a.corpus)?;
    let events = pick(&corpus, a.split);
    let schema = model.schema().clone();
    let inputs = schema.input_names();
    let k = model.n_states();
    let mut lo = vec![vec![f64::INFINITY; inputs.len()]; k];
    let mut hi = vec![vec![f64::NEG_INFINITY; inputs.len()]; k];
    let mut count = vec![0usize; k];
    for e in &events {
        let (beliefs, _) = run_model(&model, e)?;
        let x = e.project(&schema)?.inputs();
        for (f, &s) in beliefs.dominant_state.iter().enumerate() {
            count[s] += 1;
            for (i, v) in x.row(f).iter().enumerate() {
                lo[s][i] = lo[s][i].min(*v);
                hi[s][i] = hi[s][i].max(*v);
            }
        }
    }
    let mut t = Table::new(["state", "feature", "frames", "min", "max", "status"]);
    for s in 0..k {
        for (i, name) in inputs.iter().enumerate() {
            let visited = count[s] > 0;
            t.push(vec![
                (s + 1).to_string(),
                name.to_string(),
                count[s].to_string(),
                if visited { num(lo[s][i]) } else { String::new() },
                if visited { num(hi[s][i]) } else { String::new() },
                if visited { "ok".into() } else { "unvisited".into() },
            ]);
        }
    }
    let header = Header {
        command: "state-ranges".into(),
        seed: None,
        config: vec![model_line(&model), format!("split={}", split_name(a.split))],
    };
    make_dir(&a.out)?;
    t.write(&a.out, "state_ranges", &header)
}

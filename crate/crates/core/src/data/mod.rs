//! Trajectory ingestion, merge-event extraction, alignment, splitting, corpus
//! files and the synthetic generator.

pub mod align;
pub mod extract;
pub mod split;
pub mod synth;
pub mod tracks;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EventSequence, Feature, FeatureSchema, FrameMatrix};

pub use align::{align_events, DEFAULT_ALIGN_LEN};
pub use extract::{extract_event, load_labels, load_labels_file, MergeEventLabel};
pub use split::{split_ids, SplitManifest, DEFAULT_TRAIN_FRACTION};
pub use synth::{synth_corpus, SynthOutput, SynthSpec};
pub use tracks::{load_tracks, load_tracks_file, AgentType, TrackRecord, TrackTable};

pub const EVENTS_FILE: &str = "events.csv";
pub const CORPUS_FILE: &str = "corpus.json";
pub const SPLIT_FILE: &str = "split.json";
const CORPUS_FORMAT: &str = "hmmgmr-corpus";
const CORPUS_VERSION: u32 = 1;

/// Events sharing one schema, with a train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    events: Vec<EventSequence>,
    split: SplitManifest,
    schema: FeatureSchema,
}

impl Corpus {
    pub fn new(events: Vec<EventSequence>, split: SplitManifest, schema: FeatureSchema) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, e) in events.iter().enumerate() {
            if e.schema() != &schema {
                return Err(Error::Data(format!(
                    "event '{}' schema does not match the corpus",
                    e.event_id()
                )));
            }
            if seen.insert(e.event_id().to_string(), i).is_some() {
                return Err(Error::Data(format!("duplicate event id '{}'", e.event_id())));
            }
        }
        split.validate(&events.iter().map(|e| e.event_id().to_string()).collect::<Vec<_>>())?;
        Ok(Self { events, split, schema })
    }

    /// Builds a corpus with a fresh seeded split.
    pub fn with_split(events: Vec<EventSequence>, schema: FeatureSchema, fraction: f64, seed: u64) -> Result<Self> {
        let ids: Vec<String> = events.iter().map(|e| e.event_id().to_string()).collect();
        let split = split_ids(&ids, fraction, seed)?;
        Self::new(events, split, schema)
    }

    pub fn events(&self) -> &[EventSequence] {
        &self.events
    }

    pub fn split(&self) -> &SplitManifest {
        &self.split
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn subset(&self, ids: &[String]) -> Vec<EventSequence> {
        let by_id: HashMap<&str, &EventSequence> = self.events.iter().map(|e| (e.event_id(), e)).collect();
        ids.iter().map(|id| by_id[id.as_str()].clone()).collect()
    }

    pub fn train_events(&self) -> Vec<EventSequence> {
        self.subset(&self.split.train)
    }

    pub fn test_events(&self) -> Vec<EventSequence> {
        self.subset(&self.split.test)
    }

    /// The same corpus viewed under another schema (columns chosen by name).
    pub fn project(&self, schema: &FeatureSchema) -> Result<Corpus> {
        let events = self.events.iter().map(|e| e.project(schema)).collect::<Result<_>>()?;
        Self::new(events, self.split.clone(), schema.clone())
    }

    pub fn with_manifest(self, split: SplitManifest) -> Result<Corpus> {
        Self::new(self.events, split, self.schema)
    }
}

/// Extracts one event per label, in parallel, and aligns them to `align_len`
/// frames when given.
pub fn build_corpus(
    tracks: &TrackTable,
    labels: &[MergeEventLabel],
    features: &[Feature],
    align_len: Option<usize>,
    fraction: f64,
    seed: u64,
) -> Result<Corpus> {
    let events: Vec<EventSequence> = labels
        .par_iter()
        .map(|l| extract_event(tracks, l, features))
        .collect::<Result<_>>()?;
    let events = match align_len {
        Some(n) => align_events(&events, n)?,
        None => events,
    };
    let schema = events
        .first()
        .ok_or_else(|| Error::Data("no labelled events".into()))?
        .schema()
        .clone();
    Corpus::with_split(events, schema, fraction, seed)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusDoc {
    format: String,
    version: u32,
    features: Vec<String>,
    outputs: Vec<String>,
    n_events: usize,
    event_ids: Vec<String>,
}

/// Writes `events.csv`, `corpus.json` and `split.json` into `dir`. The lines of
/// `header` are prefixed with `# ` at the top of the events file.
pub fn write_corpus(dir: &Path, corpus: &Corpus, header: &[String]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut text = String::new();
    for h in header {
        text.push_str("# ");
        text.push_str(h);
        text.push('\n');
    }
    text.push_str("event_id,timestamp_ms");
    for n in corpus.schema.names() {
        text.push(',');
        text.push_str(n);
    }
    text.push('\n');
    for e in &corpus.events {
        for (t, row) in e.timestamps_ms().iter().zip(e.frames().rows()) {
            text.push_str(e.event_id());
            text.push_str(&format!(",{t}"));
            for v in row {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
    }
    write_file(&dir.join(EVENTS_FILE), text.as_bytes())?;
    let doc = CorpusDoc {
        format: CORPUS_FORMAT.into(),
        version: CORPUS_VERSION,
        features: corpus.schema.names().to_vec(),
        outputs: corpus.schema.output_names().iter().map(|s| s.to_string()).collect(),
        n_events: corpus.events.len(),
        event_ids: corpus.events.iter().map(|e| e.event_id().to_string()).collect(),
    };
    write_file(&dir.join(CORPUS_FILE), (serde_json::to_string_pretty(&doc)? + "\n").as_bytes())?;
    write_split(&dir.join(SPLIT_FILE), &corpus.split)
}

pub fn write_split(path: &Path, split: &SplitManifest) -> Result<()> {
    write_file(path, (serde_json::to_string_pretty(split)? + "\n").as_bytes())
}

pub fn read_split(path: &Path) -> Result<SplitManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Reads a corpus directory written by [`write_corpus`].
pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let meta_path = dir.join(CORPUS_FILE);
    let meta = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let doc: CorpusDoc = serde_json::from_str(&meta)?;
    if doc.format != CORPUS_FORMAT {
        return Err(Error::Data(format!("'{}' is not a corpus file", meta_path.display())));
    }
    if doc.version != CORPUS_VERSION {
        return Err(Error::Data(format!(
            "unsupported corpus version {} (expected {CORPUS_VERSION})",
            doc.version
        )));
    }
    let schema = FeatureSchema::new(&doc.features, &doc.outputs)?;
    let d = schema.dim();
    let events_path = dir.join(EVENTS_FILE);
    let f = fs::File::open(&events_path).map_err(|e| Error::io(&events_path, e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
    let headers = rdr.headers()?.clone();
    let expected: Vec<&str> = ["event_id", "timestamp_ms"]
        .into_iter()
        .chain(doc.features.iter().map(String::as_str))
        .collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Data(format!(
            "'{}' header does not match the corpus features",
            events_path.display()
        )));
    }
    let mut grouped: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let parse = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("{} line {line}: bad number '{}'", EVENTS_FILE, &row[i])))
        };
        let id = &row[0];
        if grouped.last().map(|g| g.0.as_str()) != Some(id) {
            grouped.push((id.to_string(), Vec::new(), Vec::new()));
        }
        let g = grouped.last_mut().expect("just pushed");
        g.1.push(parse(1)?);
        for i in 0..d {
            g.2.push(parse(2 + i)?);
        }
    }
    let events: Vec<EventSequence> = grouped
        .into_iter()
        .map(|(id, ts, data)| EventSequence::new(id, ts, FrameMatrix::new(d, data)?, schema.clone()))
        .collect::<Result<_>>()?;
    let ids: Vec<&str> = events.iter().map(|e| e.event_id()).collect();
    if ids != doc.event_ids.iter().map(String::as_str).collect::<Vec<_>>() || doc.n_events != events.len() {
        return Err(Error::Data(format!(
            "'{}' does not list the events found in {EVENTS_FILE}",
            meta_path.display()
        )));
    }
    let split = read_split(&dir.join(SPLIT_FILE))?;
    Corpus::new(events, split, schema)
}

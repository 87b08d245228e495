use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{EventSequence, Feature, FeatureSchema, FrameMatrix};

use super::tracks::{TrackRecord, TrackTable, FRAME_MS};

/// Roles and time span of one merge event. `t_m` is accepted but unused.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MergeEventLabel {
    pub event_id: String,
    pub ego_id: u64,
    pub lead_id: u64,
    pub lag_id: u64,
    pub t_s: i64,
    pub t_e: i64,
    #[serde(default)]
    pub t_m: Option<i64>,
}

pub fn load_labels_file(path: impl AsRef<Path>) -> Result<Vec<MergeEventLabel>> {
    let f = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    load_labels(f)
}

/// Reads `event_id,ego_id,lead_id,lag_id,t_s,t_e[,t_m]` rows.
pub fn load_labels<R: Read>(reader: R) -> Result<Vec<MergeEventLabel>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut out = Vec::new();
    for row in rdr.records() {
        let raw = row?;
        let line = raw.position().map(|p| p.line()).unwrap_or(0);
        let label: MergeEventLabel = raw
            .deserialize(Some(&headers))
            .map_err(|e| Error::Data(format!("label file line {line}: {e}")))?;
        if label.t_s >= label.t_e {
            return Err(Error::Data(format!(
                "label file line {line}: event '{}' has t_s >= t_e",
                label.event_id
            )));
        }
        out.push(label);
    }
    Ok(out)
}

/// Builds the observation sequence of one merge event over `[t_s, t_e]`.
///
/// Longitudinal quantities are measured along the ego's direction of travel
/// (the sign of its mean `vx`), so that gaps are positive when the lag vehicle
/// trails the ego and the lead vehicle is ahead of it. Gaps are bumper to
/// bumper; a negative gap means longitudinal overlap. Speed differences and
/// raw ego velocities keep the recording's sign convention. Every frame of the
/// span must be present for all three vehicles.
pub fn extract_event(tracks: &TrackTable, label: &MergeEventLabel, features: &[Feature]) -> Result<EventSequence> {
    if label.t_s >= label.t_e {
        return Err(Error::Data(format!("event '{}' has t_s >= t_e", label.event_id)));
    }
    let index = tracks.index();
    let roles = [("ego", label.ego_id), ("lead", label.lead_id), ("lag", label.lag_id)];
    let mut frames: Vec<[&TrackRecord; 3]> = Vec::new();
    let mut gaps = Vec::new();
    let mut ts = label.t_s - label.t_s.rem_euclid(FRAME_MS);
    if ts < label.t_s {
        ts += FRAME_MS;
    }
    let mut stamps = Vec::new();
    while ts <= label.t_e {
        let found: Vec<Option<&TrackRecord>> =
            roles.iter().map(|(_, id)| index.get(&(*id, ts)).copied()).collect();
        for ((role, id), f) in roles.iter().zip(&found) {
            if f.is_none() {
                gaps.push(format!("{role} track {id} at {ts} ms"));
            }
        }
        if let [Some(e), Some(l), Some(g)] = found[..] {
            frames.push([e, l, g]);
            stamps.push(ts as f64);
        }
        ts += FRAME_MS;
    }
    if !gaps.is_empty() {
        return Err(Error::Data(format!(
            "event '{}' has missing frames: {}",
            label.event_id,
            gaps.join(", ")
        )));
    }
    let mean_vx = frames.iter().map(|f| f[0].vx).sum::<f64>() / frames.len().max(1) as f64;
    let dir = if mean_vx < 0.0 { -1.0 } else { 1.0 };

    let mut data = Vec::with_capacity(frames.len() * features.len());
    for [ego, lead, lag] in &frames {
        for f in features {
            data.push(match f {
                Feature::DvLead => lead.vx - ego.vx,
                Feature::DxLag => dir * (ego.x - lag.x) - 0.5 * (ego.length + lag.length),
                Feature::VxEgo => ego.vx,
                Feature::VyEgo => ego.vy,
                Feature::DvLag => lag.vx - ego.vx,
                Feature::DxLead => dir * (lead.x - ego.x) - 0.5 * (ego.length + lead.length),
            });
        }
    }
    let names: Vec<&str> = features.iter().map(|f| f.as_str()).collect();
    if !features.contains(&Feature::VyEgo) {
        return Err(Error::InvalidSchema("extracted features must include vy_ego".into()));
    }
    let schema = FeatureSchema::new(&names, &[Feature::VyEgo.as_str()])?;
    EventSequence::new(
        label.event_id.clone(),
        stamps,
        FrameMatrix::new(features.len(), data)?,
        schema,
    )
}

use crate::error::{Error, Result};

use super::schema::FeatureSchema;

/// Row-major `T x D` block of observation frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FrameMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSequence("frames must have at least one feature".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidSequence(format!(
                "{} values do not form frames of width {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSequence(format!(
                "non-finite value at frame {}, feature {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (t, r) in rows.iter().enumerate() {
            if r.as_ref().len() != dim {
                return Err(Error::InvalidSequence(format!("frame {t} has a different width")));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(dim, data)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New matrix holding the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> FrameMatrix {
        let mut data = Vec::with_capacity(self.len() * cols.len());
        for r in self.rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        FrameMatrix {
            dim: cols.len(),
            data,
        }
    }
}

/// One merge event: aligned observation frames with timestamps and schema.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    event_id: String,
    timestamps_ms: Vec<f64>,
    frames: FrameMatrix,
    schema: FeatureSchema,
}

impl EventSequence {
    pub fn new(
        event_id: impl Into<String>,
        timestamps_ms: Vec<f64>,
        frames: FrameMatrix,
        schema: FeatureSchema,
    ) -> Result<Self> {
        let event_id = event_id.into();
        if frames.len() < 2 {
            return Err(Error::InvalidSequence(format!(
                "event '{event_id}' has {} frame(s); at least 2 are required",
                frames.len()
            )));
        }
        if frames.dim() != schema.dim() {
            return Err(Error::InvalidSequence(format!(
                "event '{event_id}' frames have width {}, schema has {}",
                frames.dim(),
                schema.dim()
            )));
        }
        if timestamps_ms.len() != frames.len() {
            return Err(Error::InvalidSequence(format!(
                "event '{event_id}' has {} timestamps for {} frames",
                timestamps_ms.len(),
                frames.len()
            )));
        }
        if let Some(w) = timestamps_ms.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSequence(format!(
                "event '{event_id}' timestamps not strictly increasing at frame {}",
                w + 1
            )));
        }
        Ok(Self {
            event_id,
            timestamps_ms,
            frames,
            schema,
        })
    }

    /// Frames stamped on a uniform 100 ms grid starting at zero.
    pub fn with_uniform_time(event_id: impl Into<String>, frames: FrameMatrix, schema: FeatureSchema) -> Result<Self> {
        let ts = (0..frames.len()).map(|t| t as f64 * 100.0).collect();
        Self::new(event_id, ts, frames, schema)
    }

    pub fn event_id(&self) -> &str {
        &self.event_id
    }

    pub fn timestamps_ms(&self) -> &[f64] {
        &self.timestamps_ms
    }

    pub fn frames(&self) -> &FrameMatrix {
        &self.frames
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Input block of every frame, `T x |I|`.
    pub fn inputs(&self) -> FrameMatrix {
        self.frames.select_columns(self.schema.input_indices())
    }

    /// Output block of every frame, `T x |O|`.
    pub fn outputs(&self) -> FrameMatrix {
        self.frames.select_columns(self.schema.output_indices())
    }

    /// Re-expresses the event under `target`, selecting columns by name.
    pub fn project(&self, target: &FeatureSchema) -> Result<EventSequence> {
        let cols = target
            .names()
            .iter()
            .map(|n| {
                self.schema.index_of(n).ok_or_else(|| {
                    Error::InvalidSchema(format!("event '{}' has no feature '{n}'", self.event_id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EventSequence {
            event_id: self.event_id.clone(),
            timestamps_ms: self.timestamps_ms.clone(),
            frames: self.frames.select_columns(&cols),
            schema: target.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(&["a", "b", "c"], &["b"]).unwrap()
    }

    #[test]
    fn rejects_short_and_non_monotone() {
        let f = FrameMatrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(EventSequence::with_uniform_time("e", f, schema()).is_err());
        let f = FrameMatrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        assert!(EventSequence::new("e", vec![0.0, 0.0], f, schema()).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(FrameMatrix::from_rows(&[[1.0, f64::NAN]]).is_err());
        assert!(FrameMatrix::from_rows(&[[1.0, f64::INFINITY]]).is_err());
    }

    #[test]
    fn blocks_and_projection() {
        let f = FrameMatrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let e = EventSequence::with_uniform_time("e", f, schema()).unwrap();
        assert_eq!(e.inputs().as_slice(), &[1.0, 3.0, 4.0, 6.0]);
        assert_eq!(e.outputs().as_slice(), &[2.0, 5.0]);
        let target = FeatureSchema::new(&["c", "b"], &["b"]).unwrap();
        let p = e.project(&target).unwrap();
        assert_eq!(p.frames().as_slice(), &[3.0, 2.0, 6.0, 5.0]);
        let missing = FeatureSchema::new(&["z", "b"], &["b"]).unwrap();
        assert!(e.project(&missing).is_err());
    }
}

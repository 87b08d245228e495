use crate::error::{Error, Result};
use crate::model::{EventSequence, FrameMatrix};

/// Default number of frames per aligned event.
pub const DEFAULT_ALIGN_LEN: usize = 100;

/// Resamples every event to `target_len` frames by linear interpolation on a
/// uniform grid spanning its first to last timestamp. End frames are kept
/// exactly.
pub fn align_events(events: &[EventSequence], target_len: usize) -> Result<Vec<EventSequence>> {
    if target_len < 2 {
        return Err(Error::Config("alignment length must be at least 2".into()));
    }
    events.iter().map(|e| resample(e, target_len)).collect()
}

fn resample(e: &EventSequence, target_len: usize) -> Result<EventSequence> {
    let ts = e.timestamps_ms();
    let (t0, t1) = (ts[0], ts[ts.len() - 1]);
    let d = e.frames().dim();
    let step = (t1 - t0) / (target_len - 1) as f64;
    let mut grid = Vec::with_capacity(target_len);
    let mut data = Vec::with_capacity(target_len * d);
    let mut seg = 0;
    for i in 0..target_len {
        let tau = if i == target_len - 1 { t1 } else { t0 + i as f64 * step };
        while seg + 2 < ts.len() && ts[seg + 1] <= tau {
            seg += 1;
        }
        let (a, b) = (e.frames().row(seg), e.frames().row(seg + 1));
        let lambda = (tau - ts[seg]) / (ts[seg + 1] - ts[seg]);
        if lambda == 0.0 {
            data.extend_from_slice(a);
        } else if lambda == 1.0 {
            data.extend_from_slice(b);
        } else {
            data.extend(a.iter().zip(b).map(|(x, y)| x + lambda * (y - x)));
        }
        grid.push(tau);
    }
    EventSequence::new(
        e.event_id(),
        grid,
        FrameMatrix::new(d, data)?,
        e.schema().clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureSchema;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(&["a", "b"], &["b"]).unwrap()
    }

    fn event(ts: Vec<f64>, rows: Vec<[f64; 2]>) -> EventSequence {
        EventSequence::new("e", ts, FrameMatrix::from_rows(&rows).unwrap(), schema()).unwrap()
    }

    #[test]
    fn uniform_event_of_target_length_is_unchanged() {
        let rows: Vec<[f64; 2]> = (0..7).map(|i| [(i as f64).sin(), (i * i) as f64]).collect();
        let e = event((0..7).map(|i| 100.0 * i as f64).collect(), rows);
        let a = &align_events(std::slice::from_ref(&e), 7).unwrap()[0];
        for (x, y) in a.frames().as_slice().iter().zip(e.frames().as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ramps_stay_on_the_ramp() {
        let ts = vec![0.0, 100.0, 250.0, 300.0, 700.0];
        let rows = ts.iter().map(|t| [2.0 * t + 1.0, -0.5 * t]).collect();
        let e = event(ts, rows);
        for len in [2, 3, 11, 64] {
            let a = &align_events(std::slice::from_ref(&e), len).unwrap()[0];
            assert_eq!(a.len(), len);
            for (t, r) in a.timestamps_ms().iter().zip(a.frames().rows()) {
                assert!((r[0] - (2.0 * t + 1.0)).abs() < 1e-9);
                assert!((r[1] + 0.5 * t).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn endpoints_exact_and_round_trip_bounded() {
        let n = 23;
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let x = i as f64 * 0.37;
                [x.sin() * 3.0, (0.7 * x).cos() + 0.1 * x * x]
            })
            .collect();
        let e = event((0..n).map(|i| 100.0 * i as f64).collect(), rows);
        let up = &align_events(std::slice::from_ref(&e), 61).unwrap()[0];
        let back = &align_events(std::slice::from_ref(up), n).unwrap()[0];
        assert_eq!(up.frames().row(0), e.frames().row(0));
        assert_eq!(up.frames().row(60), e.frames().row(n - 1));
        for c in 0..2 {
            let col: Vec<f64> = e.frames().rows().map(|r| r[c]).collect();
            let max_d2 = col
                .windows(3)
                .map(|w| (w[0] - 2.0 * w[1] + w[2]).abs())
                .fold(0.0, f64::max);
            for t in 0..n {
                let err = (back.frames().row(t)[c] - col[t]).abs();
                assert!(err <= 0.25 * max_d2 + 1e-12, "t={t} err={err} bound={}", 0.25 * max_d2);
            }
        }
    }

    #[test]
    fn rejects_short_target() {
        let e = event(vec![0.0, 100.0], vec![[0.0, 0.0], [1.0, 1.0]]);
        assert!(align_events(&[e], 1).is_err());
    }
}

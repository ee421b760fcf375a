use serde::{Deserialize, Serialize};

use super::geometry::SpatialPoint;

/// One demand point: 1-based time-period index and planar location.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: usize,
    pub location: SpatialPoint<f64>,
}

impl Event {
    pub fn new(t: usize, x: f64, y: f64) -> Self {
        Self { t, location: SpatialPoint::new(x, y) }
    }
}

/// Groups event indices by period (`out[t - 1]`), for periods `1..=periods`.
/// Events beyond `periods` are ignored.
pub fn bucket_by_period(events: &[Event], periods: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); periods];
    for (i, e) in events.iter().enumerate() {
        if e.t >= 1 && e.t <= periods {
            out[e.t - 1].push(i);
        }
    }
    out
}

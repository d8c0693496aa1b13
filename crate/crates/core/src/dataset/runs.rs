use serde::{Deserialize, Serialize};

use crate::geo::RoadPolyline;

pub const DEFAULT_RUN_LENGTH_M: f64 = 1000.0;

/// Identifies one run: the atomic unit of train/test assignment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub road_id: String,
    pub run_index: usize,
}

impl RunKey {
    pub fn new(road_id: impl Into<String>, run_index: usize) -> Self {
        Self {
            road_id: road_id.into(),
            run_index,
        }
    }
}

impl std::fmt::Display for RunKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.road_id, self.run_index)
    }
}

/// A contiguous chainage interval of one road. Every run but the last of a
/// road has exactly the configured length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub road_id: String,
    pub run_index: usize,
    pub start: f64,
    pub end: f64,
}

impl Run {
    pub fn key(&self) -> RunKey {
        RunKey::new(self.road_id.clone(), self.run_index)
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Cuts a road into consecutive runs of `run_length` meters, keeping a
/// shorter tail run when the length does not divide evenly.
pub fn segment_runs(road: &RoadPolyline, run_length: f64) -> Vec<Run> {
    assert!(
        run_length > 0.0 && run_length.is_finite(),
        "run length must be positive, got {run_length}"
    );
    let total = road.total_length();
    let count = ((total / run_length).ceil() as usize).max(1);
    (0..count)
        .map(|k| Run {
            road_id: road.road_id().to_string(),
            run_index: k,
            start: k as f64 * run_length,
            end: if k + 1 == count {
                total
            } else {
                (k + 1) as f64 * run_length
            },
        })
        .collect()
}

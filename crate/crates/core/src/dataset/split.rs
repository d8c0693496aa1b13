use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::runs::{Run, RunKey};
use super::DatasetError;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Standard,
    Heldout,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Standard => "standard",
            SplitKind::Heldout => "heldout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Train,
    Test,
}

/// One assignment entry; serialized as `[road_id, run_index, side]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment(pub String, pub usize, pub Side);

/// Train/test assignment of runs.
///
/// Assignments are kept as an ordered list so that malformed plans (a run
/// listed twice) survive deserialization and can be reported by
/// [`leakage_check`](super::leakage_check).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub seed: u64,
    pub heldout_road: Option<String>,
    pub assignment: Vec<Assignment>,
}

impl SplitPlan {
    /// Side of a run; the first entry wins if a run is listed twice.
    pub fn side_of(&self, key: &RunKey) -> Option<Side> {
        self.assignment
            .iter()
            .find(|a| a.0 == key.road_id && a.1 == key.run_index)
            .map(|a| a.2)
    }

    /// Run → side lookup table, first entry winning.
    pub fn index(&self) -> HashMap<RunKey, Side> {
        let mut map = HashMap::with_capacity(self.assignment.len());
        for Assignment(road, run, side) in &self.assignment {
            map.entry(RunKey::new(road.clone(), *run)).or_insert(*side);
        }
        map
    }

    pub fn count(&self, side: Side) -> usize {
        self.assignment.iter().filter(|a| a.2 == side).count()
    }

    pub fn runs_on(&self, side: Side) -> impl Iterator<Item = RunKey> + '_ {
        self.assignment
            .iter()
            .filter(move |a| a.2 == side)
            .map(|a| RunKey::new(a.0.clone(), a.1))
    }

    /// Short label used for file names and reports.
    pub fn label(&self) -> String {
        match (&self.kind, &self.heldout_road) {
            (SplitKind::Heldout, Some(road)) => format!("heldout-{road}"),
            (kind, _) => kind.as_str().to_string(),
        }
    }
}

/// Seeded uniform assignment of `round(train_fraction * n)` runs to Train
/// (round half to even), the rest to Test.
pub fn standard_split(runs: &[Run], seed: u64, train_fraction: f64) -> Result<SplitPlan, DatasetError> {
    if runs.is_empty() {
        return Err(DatasetError::EmptyInput("no runs to split"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = runs.len();
    let n_train = (train_fraction * n as f64).round_ties_even() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut sides = vec![Side::Test; n];
    for &i in &order[..n_train] {
        sides[i] = Side::Train;
    }
    Ok(SplitPlan {
        kind: SplitKind::Standard,
        seed,
        heldout_road: None,
        assignment: runs
            .iter()
            .zip(sides)
            .map(|(r, side)| Assignment(r.road_id.clone(), r.run_index, side))
            .collect(),
    })
}

/// One leave-one-road-out plan per distinct road, ordered by road id.
pub fn heldout_splits(runs: &[Run]) -> Result<Vec<SplitPlan>, DatasetError> {
    let mut roads: BTreeMap<&str, ()> = BTreeMap::new();
    for r in runs {
        roads.insert(&r.road_id, ());
    }
    if roads.len() < 2 {
        return Err(DatasetError::TooFewRoads(roads.len()));
    }
    Ok(roads
        .keys()
        .map(|&held| SplitPlan {
            kind: SplitKind::Heldout,
            seed: 0,
            heldout_road: Some(held.to_string()),
            assignment: runs
                .iter()
                .map(|r| {
                    let side = if r.road_id == held {
                        Side::Test
                    } else {
                        Side::Train
                    };
                    Assignment(r.road_id.clone(), r.run_index, side)
                })
                .collect(),
        })
        .collect())
}

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::runs::RunKey;
use super::split::{Side, SplitKind, SplitPlan};
use super::tiles::LabeledTile;
use super::DatasetError;

/// A Train tile and a Test tile on the same road whose spans overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapViolation {
    pub train_tile: String,
    pub test_tile: String,
}

/// Findings of [`leakage_check`]; empty when the plan is clean.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    /// Runs listed on both sides.
    pub conflicting_runs: Vec<RunKey>,
    /// Train/Test tile pairs with overlapping chainage on one road.
    pub overlapping_tiles: Vec<OverlapViolation>,
    /// Train tiles on the held-out road of a held-out plan.
    pub heldout_road_in_train: Vec<String>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.conflicting_runs.is_empty()
            && self.overlapping_tiles.is_empty()
            && self.heldout_road_in_train.is_empty()
    }
}

/// Looks for train/test contamination in a plan applied to a tile set.
pub fn leakage_check(plan: &SplitPlan, tiles: &[LabeledTile]) -> Result<LeakageReport, DatasetError> {
    let mut report = LeakageReport::default();

    let mut sides: BTreeMap<RunKey, (bool, bool)> = BTreeMap::new();
    for a in &plan.assignment {
        let entry = sides.entry(RunKey::new(a.0.clone(), a.1)).or_default();
        match a.2 {
            Side::Train => entry.0 = true,
            Side::Test => entry.1 = true,
        }
    }
    report.conflicting_runs = sides
        .iter()
        .filter(|(_, &(train, test))| train && test)
        .map(|(k, _)| k.clone())
        .collect();

    let index = plan.index();
    let mut by_road: HashMap<&str, Vec<(&LabeledTile, Side)>> = HashMap::new();
    for t in tiles {
        let side = *index.get(&t.run_key()).ok_or_else(|| DatasetError::UnknownRun {
            tile_id: t.tile_id.clone(),
            road_id: t.road_id.clone(),
            run_index: t.run_index,
        })?;
        if plan.kind == SplitKind::Heldout
            && side == Side::Train
            && plan.heldout_road.as_deref() == Some(t.road_id.as_str())
        {
            report.heldout_road_in_train.push(t.tile_id.clone());
        }
        by_road.entry(&t.road_id).or_default().push((t, side));
    }

    let mut roads: Vec<_> = by_road.into_iter().collect();
    roads.sort_by(|a, b| a.0.cmp(b.0));
    for (_, mut road_tiles) in roads {
        road_tiles.sort_by(|a, b| a.0.span.start.total_cmp(&b.0.span.start));
        // sweep: only tiles starting before the current one ends can overlap it
        for (i, (t, side)) in road_tiles.iter().enumerate() {
            for (u, other_side) in road_tiles[i + 1..].iter() {
                if u.span.start >= t.span.end {
                    break;
                }
                if side != other_side && t.span.overlaps(&u.span) {
                    let (train, test) = if *side == Side::Train { (t, u) } else { (u, t) };
                    report.overlapping_tiles.push(OverlapViolation {
                        train_tile: train.tile_id.clone(),
                        test_tile: test.tile_id.clone(),
                    });
                }
            }
        }
    }
    Ok(report)
}

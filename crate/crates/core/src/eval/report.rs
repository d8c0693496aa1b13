use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{accuracy, baselines_from_counts, class_counts, confusion, majority, Baselines, EvalError};
use crate::dataset::{LabeledTile, Side, SplitKind, SplitPlan};
use crate::survey::Task;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Test-set statistics of one road.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadReport {
    pub road_id: String,
    pub n_tiles: usize,
    pub accuracy: f64,
    pub homogeneity: f64,
    pub majority_class: String,
    pub mean_iri: f64,
    /// Summed ground length of the evaluated tiles, meters.
    pub surveyed_length: f64,
    pub class_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub task: Task,
    pub split_kind: SplitKind,
    pub split: String,
    pub overall_accuracy: f64,
    pub n_tiles: usize,
    pub confusion: Vec<Vec<usize>>,
    pub roads: Vec<RoadReport>,
    pub baselines: Baselines,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub split: String,
    pub heldout_road: Option<String>,
    pub accuracy: f64,
    pub n_tiles: usize,
}

/// Leave-one-road-out results over all held-out plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutSummary {
    pub schema_version: u32,
    pub task: Task,
    pub n_splits: usize,
    /// Unweighted mean of per-split accuracies.
    pub mean_accuracy: f64,
    /// Accuracy over all held-out tiles pooled.
    pub tile_weighted_accuracy: f64,
    pub splits: Vec<SplitAccuracy>,
    pub roads: Vec<RoadReport>,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

/// One predicted tile.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePrediction {
    pub tile_id: String,
    pub class: usize,
    pub probabilities: Vec<f64>,
}

/// Scores predictions against the Test tiles of `plan`. Predictions must
/// name every Test tile exactly once and nothing else.
pub fn evaluate(
    predictions: &[TilePrediction],
    tiles: &[LabeledTile],
    plan: &SplitPlan,
    task: Task,
) -> Result<EvalReport, EvalError> {
    let k = task.num_classes();
    let sides = plan.index();
    let test: Vec<&LabeledTile> = tiles
        .iter()
        .filter(|t| sides.get(&t.run_key()) == Some(&Side::Test))
        .collect();

    let mut by_id: BTreeMap<&str, usize> = BTreeMap::new();
    let mut extra = Vec::new();
    for p in predictions {
        if by_id.insert(&p.tile_id, p.class).is_some() {
            extra.push(p.tile_id.clone());
        }
    }
    let test_ids: BTreeSet<&str> = test.iter().map(|t| t.tile_id.as_str()).collect();
    let missing: Vec<String> = test_ids
        .iter()
        .filter(|id| !by_id.contains_key(*id))
        .map(|id| id.to_string())
        .collect();
    extra.extend(
        by_id
            .keys()
            .filter(|id| !test_ids.contains(*id))
            .map(|id| id.to_string()),
    );
    if !missing.is_empty() || !extra.is_empty() {
        extra.sort();
        extra.dedup();
        return Err(EvalError::CoverageMismatch { missing, extra });
    }
    if test.is_empty() {
        return Err(EvalError::EmptyInput("plan has no test tiles"));
    }

    let preds: Vec<usize> = test.iter().map(|t| by_id[t.tile_id.as_str()]).collect();
    let labels: Vec<usize> = test.iter().map(|t| t.label(task)).collect();
    let matrix = confusion(&preds, &labels, k)?;
    let overall_accuracy = accuracy(&preds, &labels)?;

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in test.iter().enumerate() {
        groups.entry(&t.road_id).or_default().push(i);
    }
    let roads = groups
        .into_iter()
        .map(|(road, idx)| {
            let p: Vec<usize> = idx.iter().map(|&i| preds[i]).collect();
            let l: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let counts = class_counts(&l, k)?;
            let (homogeneity, major) = majority(&counts);
            Ok(RoadReport {
                road_id: road.to_string(),
                n_tiles: idx.len(),
                accuracy: accuracy(&p, &l)?,
                homogeneity,
                majority_class: task.class_name(major).to_string(),
                mean_iri: idx.iter().map(|&i| test[i].iri_label).sum::<f64>() / idx.len() as f64,
                surveyed_length: idx.iter().map(|&i| test[i].span.length()).sum(),
                class_counts: counts,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        task,
        split_kind: plan.kind,
        split: plan.label(),
        overall_accuracy,
        n_tiles: test.len(),
        confusion: matrix,
        roads,
        baselines: baselines_from_counts(&class_counts(&labels, k)?),
        provenance: serde_json::Value::Null,
    })
}

/// Averages per-split accuracies with equal weight per split; the result
/// does not depend on the order of `reports`.
pub fn heldout_aggregate(reports: &[EvalReport]) -> Result<HeldoutSummary, EvalError> {
    let first = reports.first().ok_or(EvalError::EmptyInput("no reports"))?;
    if reports.iter().any(|r| r.task != first.task) {
        return Err(EvalError::Format("reports mix tasks".into()));
    }
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.split.cmp(&b.split));
    let n = sorted.len() as f64;
    let mean_accuracy = sorted.iter().map(|r| r.overall_accuracy).sum::<f64>() / n;
    let hits: f64 = sorted
        .iter()
        .map(|r| (0..r.confusion.len()).map(|i| r.confusion[i][i]).sum::<usize>() as f64)
        .sum();
    let total: usize = sorted.iter().map(|r| r.n_tiles).sum();
    let mut roads: Vec<RoadReport> = sorted.iter().flat_map(|r| r.roads.iter().cloned()).collect();
    roads.sort_by(|a, b| a.road_id.cmp(&b.road_id));
    Ok(HeldoutSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        task: first.task,
        n_splits: sorted.len(),
        mean_accuracy,
        tile_weighted_accuracy: hits / total as f64,
        splits: sorted
            .iter()
            .map(|r| SplitAccuracy {
                split: r.split.clone(),
                heldout_road: (r.split_kind == SplitKind::Heldout && r.roads.len() == 1)
                    .then(|| r.roads[0].road_id.clone()),
                accuracy: r.overall_accuracy,
                n_tiles: r.n_tiles,
            })
            .collect(),
        roads,
        provenance: serde_json::Value::Null,
    })
}

/// Reads `tile_id,class,p0,...` CSV.
pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<TilePrediction>, EvalError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| EvalError::Format(e.to_string()))?
        .clone();
    if headers.get(0) != Some("tile_id") || headers.get(1) != Some("class") {
        return Err(EvalError::Format(
            "predictions header must start with tile_id,class".into(),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| EvalError::Format(format!("line {line}: {e}")))?;
        let class = rec[1]
            .parse()
            .map_err(|e| EvalError::Format(format!("line {line}: class: {e}")))?;
        let probabilities = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EvalError::Format(format!("line {line}: {e}")))?;
        out.push(TilePrediction {
            tile_id: rec[0].to_string(),
            class,
            probabilities,
        });
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(predictions: &[TilePrediction], writer: W) -> Result<(), EvalError> {
    let k = predictions.first().map_or(0, |p| p.probabilities.len());
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| EvalError::Io(std::io::Error::other(e));
    let mut header = vec!["tile_id".to_string(), "class".to_string()];
    header.extend((0..k).map(|c| format!("p{c}")));
    w.write_record(&header).map_err(io)?;
    for p in predictions {
        let mut rec = vec![p.tile_id.clone(), p.class.to_string()];
        rec.extend(p.probabilities.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

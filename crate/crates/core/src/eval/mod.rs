//! Accuracy, confusion matrices, road homogeneity, chance baselines and
//! report emission.

mod emit;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use emit::{emit_report, format_sig, render_report, BaselineKind, ReportDoc, ReportFormat};
pub use report::{
    evaluate, heldout_aggregate, read_predictions, write_predictions, EvalReport, HeldoutSummary, RoadReport,
    SplitAccuracy, TilePrediction, REPORT_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("ordinal {ordinal} out of range for {k} classes")]
    OrdinalOutOfRange { ordinal: usize, k: usize },
    #[error("predictions do not cover the test tiles: {}", describe_coverage(.missing, .extra))]
    CoverageMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn describe_coverage(missing: &[String], extra: &[String]) -> String {
    let list = |v: &[String]| {
        let mut s = v.iter().take(5).cloned().collect::<Vec<_>>().join(", ");
        if v.len() > 5 {
            s.push_str(&format!(" and {} more", v.len() - 5));
        }
        s
    };
    match (missing.is_empty(), extra.is_empty()) {
        (false, true) => format!("missing {}", list(missing)),
        (true, false) => format!("unexpected {}", list(extra)),
        _ => format!("missing {}; unexpected {}", list(missing), list(extra)),
    }
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyInput("no predictions"));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `k`×`k` counts; rows are true classes, columns predicted classes.
pub fn confusion(predictions: &[usize], labels: &[usize], k: usize) -> Result<Vec<Vec<usize>>, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut m = vec![vec![0; k]; k];
    for (&p, &l) in predictions.iter().zip(labels) {
        if let Some(&ordinal) = [p, l].iter().find(|&&o| o >= k) {
            return Err(EvalError::OrdinalOutOfRange { ordinal, k });
        }
        m[l][p] += 1;
    }
    Ok(m)
}

fn class_counts(labels: &[usize], k: usize) -> Result<Vec<usize>, EvalError> {
    let mut counts = vec![0usize; k];
    for &l in labels {
        *counts
            .get_mut(l)
            .ok_or(EvalError::OrdinalOutOfRange { ordinal: l, k })? += 1;
    }
    Ok(counts)
}

/// Majority share of `counts`, with the lowest-ordinal majority class.
fn majority(counts: &[usize]) -> (f64, usize) {
    let n: usize = counts.iter().sum();
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    (counts[best] as f64 / n as f64, best)
}

/// `Σ n_c² / n²`, computed in integers so that a uniform label set gives
/// exactly the same float as `1 / K`.
fn prior_accuracy(counts: &[usize]) -> f64 {
    let n: u128 = counts.iter().map(|&c| c as u128).sum();
    let sq: u128 = counts.iter().map(|&c| (c as u128) * (c as u128)).sum();
    sq as f64 / (n * n) as f64
}

/// Fraction of labels in the majority class and that class; ties go to the
/// lower ordinal.
pub fn homogeneity(labels: &[usize]) -> Result<(f64, usize), EvalError> {
    if labels.is_empty() {
        return Err(EvalError::EmptyInput("no labels"));
    }
    let k = labels.iter().max().unwrap() + 1;
    Ok(majority(&class_counts(labels, k)?))
}

/// Accuracy of three uninformed predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// Uniformly random class: `1/K`.
    pub uniform: f64,
    /// Always the majority class.
    pub majority: f64,
    /// Random class drawn from the empirical label distribution: `Σ p_c²`.
    pub prior: f64,
}

pub fn chance_baselines(labels: &[usize], k: usize) -> Result<Baselines, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::EmptyInput("no labels"));
    }
    let counts = class_counts(labels, k)?;
    Ok(baselines_from_counts(&counts))
}

pub(crate) fn baselines_from_counts(counts: &[usize]) -> Baselines {
    Baselines {
        uniform: 1.0 / counts.len() as f64,
        majority: majority(counts).0,
        prior: prior_accuracy(counts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[4, 4]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 1, 0, 1], &[1, 1, 1, 1]).unwrap(), 0.75);
        assert!(matches!(accuracy(&[], &[]), Err(EvalError::EmptyInput(_))));
        assert!(matches!(
            accuracy(&[1], &[1, 2]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn confusion_examples() {
        let m = confusion(&[2, 0, 1], &[2, 0, 1], 3).unwrap();
        assert_eq!(m, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let m = confusion(&[3], &[2], 5).unwrap();
        assert_eq!(m[2][3], 1);
        assert_eq!(m.iter().flatten().sum::<usize>(), 1);
        assert!(matches!(
            confusion(&[5], &[0], 5),
            Err(EvalError::OrdinalOutOfRange { ordinal: 5, k: 5 })
        ));
    }

    #[test]
    fn homogeneity_examples() {
        assert_eq!(homogeneity(&[0, 0, 0, 4]).unwrap(), (0.75, 0));
        assert_eq!(homogeneity(&[3, 3]).unwrap(), (1.0, 3));
        assert_eq!(homogeneity(&[4, 1, 4, 1]).unwrap(), (0.5, 1));
        assert!(homogeneity(&[]).is_err());
    }

    #[test]
    fn baseline_examples() {
        let labels: Vec<usize> = (0..10).map(|i| if i < 8 { 0 } else { 1 }).collect();
        let b = chance_baselines(&labels, 2).unwrap();
        assert_eq!(b.uniform, 0.5);
        assert_eq!(b.majority, 0.8);
        assert!((b.prior - 0.68).abs() < 1e-15);
        assert_eq!(chance_baselines(&[0, 1, 2, 3, 4], 5).unwrap().uniform, 0.2);
        assert_eq!(chance_baselines(&[0, 1, 2, 3, 4], 5).unwrap().prior, 0.2);
    }
}

//! Roughness surveys: records, temporal matching, and the class systems
//! derived from IRI.

mod io;

pub use io::{parse_survey, write_survey, SurveyFormat};

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default maximum gap between survey and imagery dates.
pub const DEFAULT_MAX_GAP_DAYS: u32 = 365;

/// IRI at or above which a road is classified as bad, m/km.
pub const BAD_IRI_THRESHOLD: f64 = 20.0;

#[derive(Debug, Error)]
pub enum SurveyError {
    /// `location` names the offending line (CSV) or record (JSON).
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error("{location}: {message}")]
    InvariantViolation { location: String, message: String },
    #[error("invalid IRI {0}: must be a finite non-negative value")]
    InvalidIri(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One surveyed interval of a road.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IriRecord {
    pub road_id: String,
    #[serde(rename = "chainage_start_m")]
    pub chainage_start: f64,
    #[serde(rename = "chainage_end_m")]
    pub chainage_end: f64,
    /// Roughness in m/km.
    pub iri: f64,
    pub survey_date: NaiveDate,
}

impl IriRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.road_id.is_empty() {
            return Err("empty road_id".into());
        }
        if !(self.iri >= 0.0 && self.iri.is_finite()) {
            return Err(format!("iri {} is negative or not finite", self.iri));
        }
        if !self.chainage_start.is_finite() || !self.chainage_end.is_finite() {
            return Err("chainage is not finite".into());
        }
        if self.chainage_start >= self.chainage_end {
            return Err(format!(
                "chainage_start {} is not below chainage_end {}",
                self.chainage_start, self.chainage_end
            ));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.chainage_end - self.chainage_start
    }
}

/// Five-way IRI classes, ordered by worsening quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualityClass {
    Great,
    Good,
    Fair,
    Poor,
    Bad,
}

impl QualityClass {
    pub const ALL: [QualityClass; 5] = [Self::Great, Self::Good, Self::Fair, Self::Poor, Self::Bad];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Great => "great",
            Self::Good => "good",
            Self::Fair => "fair",
            Self::Poor => "poor",
            Self::Bad => "bad",
        }
    }
}

impl fmt::Display for QualityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinaryLabel {
    Passable,
    Bad,
}

impl BinaryLabel {
    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<Self> {
        match i {
            0 => Some(Self::Passable),
            1 => Some(Self::Bad),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Passable => "passable",
            Self::Bad => "bad",
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which class system a classifier predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Binary,
    FiveClass,
}

impl Task {
    pub fn num_classes(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::FiveClass => 5,
        }
    }

    pub fn class_name(self, ordinal: usize) -> &'static str {
        match self {
            Task::Binary => BinaryLabel::from_ordinal(ordinal).map_or("?", BinaryLabel::name),
            Task::FiveClass => QualityClass::from_ordinal(ordinal).map_or("?", QualityClass::name),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::FiveClass => "five_class",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(Task::Binary),
            "five_class" | "five-class" | "5" => Ok(Task::FiveClass),
            other => Err(format!("unknown task `{other}` (expected binary|five_class)")),
        }
    }
}

/// Maps IRI onto the five classes with left-closed, right-open bins:
/// [0,7) great, [7,12) good, [12,15) fair, [15,20) poor, [20,∞) bad.
pub fn bin_iri(iri: f64) -> Result<QualityClass, SurveyError> {
    if iri.is_nan() || iri < 0.0 || iri.is_infinite() {
        return Err(SurveyError::InvalidIri(iri));
    }
    Ok(if iri < 7.0 {
        QualityClass::Great
    } else if iri < 12.0 {
        QualityClass::Good
    } else if iri < 15.0 {
        QualityClass::Fair
    } else if iri < BAD_IRI_THRESHOLD {
        QualityClass::Poor
    } else {
        QualityClass::Bad
    })
}

pub fn binarize(iri: f64) -> Result<BinaryLabel, SurveyError> {
    if iri.is_nan() || iri < 0.0 || iri.is_infinite() {
        return Err(SurveyError::InvalidIri(iri));
    }
    Ok(if iri >= BAD_IRI_THRESHOLD {
        BinaryLabel::Bad
    } else {
        BinaryLabel::Passable
    })
}

/// Keeps records surveyed within `max_gap_days` of the imagery date.
/// Returns the retained records (order preserved) and the number dropped.
pub fn temporal_filter(
    records: &[IriRecord],
    imagery_date: NaiveDate,
    max_gap_days: u32,
) -> (Vec<IriRecord>, usize) {
    let kept: Vec<IriRecord> = records
        .iter()
        .filter(|r| (r.survey_date - imagery_date).num_days().unsigned_abs() <= u64::from(max_gap_days))
        .cloned()
        .collect();
    let dropped = records.len() - kept.len();
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn rec(date: NaiveDate) -> IriRecord {
        IriRecord {
            road_id: "A104".into(),
            chainage_start: 0.0,
            chainage_end: 100.0,
            iri: 5.0,
            survey_date: date,
        }
    }

    #[test]
    fn bins_at_documented_values() {
        assert_eq!(bin_iri(5.0).unwrap(), QualityClass::Great);
        assert_eq!(bin_iri(7.0).unwrap(), QualityClass::Good);
        assert_eq!(bin_iri(25.0).unwrap(), QualityClass::Bad);
        assert_eq!(bin_iri(0.0).unwrap(), QualityClass::Great);
        assert!(matches!(bin_iri(-0.1), Err(SurveyError::InvalidIri(_))));
        assert!(bin_iri(f64::NAN).is_err());
    }

    #[test]
    fn binary_threshold() {
        assert_eq!(binarize(19.9).unwrap(), BinaryLabel::Passable);
        assert_eq!(binarize(20.0).unwrap(), BinaryLabel::Bad);
        assert_eq!(binarize(3.0).unwrap(), BinaryLabel::Passable);
        assert!(binarize(-1.0).is_err());
    }

    #[test]
    fn temporal_window() {
        let recs = vec![rec(d(2015, 6, 1)), rec(d(2013, 1, 1)), rec(d(2015, 12, 31))];
        let (kept, dropped) = temporal_filter(&recs, d(2015, 12, 31), 365);
        assert_eq!(dropped, 1);
        assert_eq!(kept, vec![recs[0].clone(), recs[2].clone()]);

        let (kept, dropped) = temporal_filter(&recs[1..2], d(2015, 6, 1), 365);
        assert!(kept.is_empty());
        assert_eq!(dropped, 1);
    }

    #[test]
    fn temporal_filter_is_inclusive_and_idempotent() {
        let img = d(2015, 6, 1);
        let recs = vec![rec(d(2014, 6, 1)), rec(d(2014, 5, 31)), rec(d(2016, 5, 31))];
        let (kept, _) = temporal_filter(&recs, img, 365);
        assert_eq!(kept.len(), 2);
        let (again, dropped) = temporal_filter(&kept, img, 365);
        assert_eq!((again, dropped), (kept, 0));
    }

    proptest! {
        #[test]
        fn binary_agrees_with_top_bin(iri in 0.0f64..100.0) {
            let five = bin_iri(iri).unwrap();
            let bin = binarize(iri).unwrap();
            prop_assert_eq!(five == QualityClass::Bad, bin == BinaryLabel::Bad);
        }

        #[test]
        fn bins_are_monotone(a in 0.0f64..60.0, b in 0.0f64..60.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bin_iri(lo).unwrap().ordinal() <= bin_iri(hi).unwrap().ordinal());
        }
    }
}

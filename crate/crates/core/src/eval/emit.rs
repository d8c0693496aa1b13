use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::report::{EvalReport, HeldoutSummary, RoadReport};
use super::{prior_accuracy, EvalError};
use crate::survey::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    /// One row per road for external plotting.
    ScatterCsv,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "scatter_csv" | "scatter-csv" => Ok(Self::ScatterCsv),
            _ => Err(format!("unknown report format {s:?} (json, csv, scatter_csv)")),
        }
    }
}

/// Which chance level goes into the scatter `baseline` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineKind {
    #[default]
    Uniform,
    Majority,
    Prior,
}

impl FromStr for BaselineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "majority" => Ok(Self::Majority),
            "prior" => Ok(Self::Prior),
            _ => Err(format!("unknown baseline {s:?} (uniform, majority, prior)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ReportDoc<'a> {
    Eval(&'a EvalReport),
    Heldout(&'a HeldoutSummary),
}

impl ReportDoc<'_> {
    fn task(&self) -> Task {
        match self {
            ReportDoc::Eval(r) => r.task,
            ReportDoc::Heldout(s) => s.task,
        }
    }

    fn roads(&self) -> &[RoadReport] {
        match self {
            ReportDoc::Eval(r) => &r.roads,
            ReportDoc::Heldout(s) => &s.roads,
        }
    }
}

/// Formats `x` with six significant digits, without trailing zeros.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-4..6).contains(&exp) {
        trim(format!("{:.*}", (5 - exp).max(0) as usize, x))
    } else {
        let s = format!("{x:.5e}");
        let (m, e) = s.split_once('e').unwrap();
        format!("{}e{e}", trim(m.to_string()))
    }
}

pub fn render_report(doc: ReportDoc<'_>, format: ReportFormat, baseline: BaselineKind) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = match doc {
                ReportDoc::Eval(r) => serde_json::to_string_pretty(r),
                ReportDoc::Heldout(r) => serde_json::to_string_pretty(r),
            }
            .expect("reports serialize");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s =
                String::from("road_id,n_tiles,accuracy,homogeneity,majority_class,mean_iri,length_m\n");
            for r in doc.roads() {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    r.road_id,
                    r.n_tiles,
                    format_sig(r.accuracy),
                    format_sig(r.homogeneity),
                    r.majority_class,
                    format_sig(r.mean_iri),
                    format_sig(r.surveyed_length)
                )
                .unwrap();
            }
            s
        }
        ReportFormat::ScatterCsv => {
            let k = doc.task().num_classes();
            let mut s = String::from("road_id,homogeneity,accuracy,mean_iri,length_m,baseline\n");
            for r in doc.roads() {
                let b = match baseline {
                    BaselineKind::Uniform => 1.0 / k as f64,
                    BaselineKind::Majority => r.homogeneity,
                    BaselineKind::Prior => prior_accuracy(&r.class_counts),
                };
                writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.road_id,
                    format_sig(r.homogeneity),
                    format_sig(r.accuracy),
                    format_sig(r.mean_iri),
                    format_sig(r.surveyed_length),
                    format_sig(b)
                )
                .unwrap();
            }
            s
        }
    }
}

/// Writes a rendered report atomically.
pub fn emit_report(
    doc: ReportDoc<'_>,
    format: ReportFormat,
    baseline: BaselineKind,
    destination: &Path,
) -> Result<(), EvalError> {
    crate::fsio::write_atomic(destination, render_report(doc, format, baseline).as_bytes())?;
    Ok(())
}

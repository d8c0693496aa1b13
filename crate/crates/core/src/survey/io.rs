use std::io::{Read, Write};

use super::{IriRecord, SurveyError};

pub const CSV_HEADER: [&str; 5] = [
    "road_id",
    "chainage_start_m",
    "chainage_end_m",
    "iri",
    "survey_date",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurveyFormat {
    Csv,
    Json,
}

impl std::str::FromStr for SurveyFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown survey format `{other}` (expected csv|json)")),
        }
    }
}

/// Reads survey records, validating each one. Input order is preserved.
pub fn parse_survey<R: Read>(reader: R, format: SurveyFormat) -> Result<Vec<IriRecord>, SurveyError> {
    let records = match format {
        SurveyFormat::Csv => parse_csv(reader)?,
        SurveyFormat::Json => parse_json(reader)?,
    };
    for (location, rec) in &records {
        rec.validate()
            .map_err(|message| SurveyError::InvariantViolation {
                location: location.clone(),
                message,
            })?;
    }
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

fn parse_csv<R: Read>(reader: R) -> Result<Vec<(String, IriRecord)>, SurveyError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err("line 1".into(), e))?.clone();
    if !headers.is_empty() && headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(SurveyError::Parse {
            location: "line 1".into(),
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(format!("line {line}"), e)
        })?;
        let location = format!("line {}", row.position().map_or(0, |p| p.line()));
        let rec: IriRecord = row
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(location.clone(), e))?;
        out.push((location, rec));
    }
    Ok(out)
}

fn parse_json<R: Read>(mut reader: R) -> Result<Vec<(String, IriRecord)>, SurveyError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let values: Vec<serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| parse_err("document".into(), e))?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let location = format!("record {}", i + 1);
            serde_json::from_value(v)
                .map(|r| (location.clone(), r))
                .map_err(|e| parse_err(location, e))
        })
        .collect()
}

fn parse_err(location: String, e: impl std::fmt::Display) -> SurveyError {
    SurveyError::Parse {
        location,
        message: e.to_string(),
    }
}

/// Writes records in canonical form: shortest round-trip decimals and ISO dates.
pub fn write_survey<W: Write>(
    records: &[IriRecord],
    format: SurveyFormat,
    mut writer: W,
) -> Result<(), SurveyError> {
    match format {
        SurveyFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            let io = |e: csv::Error| SurveyError::Io(e.into());
            w.write_record(CSV_HEADER).map_err(io)?;
            for r in records {
                w.write_record([
                    r.road_id.clone(),
                    r.chainage_start.to_string(),
                    r.chainage_end.to_string(),
                    r.iri.to_string(),
                    r.survey_date.format("%Y-%m-%d").to_string(),
                ])
                .map_err(io)?;
            }
            w.flush()?;
        }
        SurveyFormat::Json => {
            serde_json::to_writer_pretty(&mut writer, records).map_err(|e| SurveyError::Io(e.into()))?;
            writer.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    const HEADER: &str = "road_id,chainage_start_m,chainage_end_m,iri,survey_date\n";

    #[test]
    fn parses_a_row() {
        let text = format!("{HEADER}A104,0,250.5,6.2,2015-03-02\n");
        let recs = parse_survey(text.as_bytes(), SurveyFormat::Csv).unwrap();
        assert_eq!(
            recs,
            vec![IriRecord {
                road_id: "A104".into(),
                chainage_start: 0.0,
                chainage_end: 250.5,
                iri: 6.2,
                survey_date: NaiveDate::from_ymd_opt(2015, 3, 2).unwrap(),
            }]
        );
    }

    #[test]
    fn negative_iri_names_the_row() {
        let text = format!("{HEADER}A104,0,100,3,2015-03-02\nA104,100,200,-1,2015-03-02\n");
        match parse_survey(text.as_bytes(), SurveyFormat::Csv) {
            Err(SurveyError::InvariantViolation { location, .. }) => assert_eq!(location, "line 3"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reversed_span_is_an_invariant_violation() {
        let text = format!("{HEADER}A104,100,100,3,2015-03-02\n");
        assert!(matches!(
            parse_survey(text.as_bytes(), SurveyFormat::Csv),
            Err(SurveyError::InvariantViolation { .. })
        ));
    }

    #[test]
    fn malformed_rows_are_parse_errors() {
        let bad_date = format!("{HEADER}A104,0,100,3,2015-13-02\n");
        let bad_number = format!("{HEADER}A104,zero,100,3,2015-01-02\n");
        let short = format!("{HEADER}A104,0,100\n");
        for text in [bad_date, bad_number, short] {
            match parse_survey(text.as_bytes(), SurveyFormat::Csv) {
                Err(SurveyError::Parse { location, .. }) => assert_eq!(location, "line 2"),
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!(parse_survey("a,b,c\n".as_bytes(), SurveyFormat::Csv).is_err());
    }

    #[test]
    fn empty_inputs() {
        assert!(parse_survey(&b""[..], SurveyFormat::Csv).unwrap().is_empty());
        assert!(parse_survey(HEADER.as_bytes(), SurveyFormat::Csv)
            .unwrap()
            .is_empty());
        assert!(parse_survey(&b""[..], SurveyFormat::Json).unwrap().is_empty());
        assert!(parse_survey(&b"[]"[..], SurveyFormat::Json).unwrap().is_empty());
    }

    #[test]
    fn json_records() {
        let text = r#"[{"road_id":"C47","chainage_start_m":0,"chainage_end_m":100,"iri":21.5,"survey_date":"2015-04-01"},
                       {"road_id":"C47","chainage_start_m":100,"chainage_end_m":50,"iri":2,"survey_date":"2015-04-01"}]"#;
        match parse_survey(text.as_bytes(), SurveyFormat::Json) {
            Err(SurveyError::InvariantViolation { location, .. }) => assert_eq!(location, "record 2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn canonical_record() -> impl Strategy<Value = IriRecord> {
        (
            "[A-Z][0-9]{1,3}",
            0u32..100_000,
            1u32..5_000,
            0u32..4_000,
            0i64..3_000,
        )
            .prop_map(|(road_id, start, len, iri, day)| IriRecord {
                road_id,
                chainage_start: start as f64 / 2.0,
                chainage_end: (start + len) as f64 / 2.0,
                iri: iri as f64 / 100.0,
                survey_date: NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + chrono::Duration::days(day),
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_serialize_is_byte_stable(
            recs in prop::collection::vec(canonical_record(), 0..20)
        ) {
            for format in [SurveyFormat::Csv, SurveyFormat::Json] {
                let mut first = Vec::new();
                write_survey(&recs, format, &mut first).unwrap();
                let parsed = parse_survey(&first[..], format).unwrap();
                prop_assert_eq!(&parsed, &recs);
                let mut second = Vec::new();
                write_survey(&parsed, format, &mut second).unwrap();
                prop_assert_eq!(first, second);
            }
        }
    }
}

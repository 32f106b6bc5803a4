//! Exposure sidecar: CSV with header `name,exposure`.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, ParseError, Result};

const FORMAT: &str = "exposure csv";

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureRecord {
    pub name: String,
    /// Seconds, or a relative factor; only ratios matter downstream.
    pub exposure: f64,
}

pub fn parse_exposure_csv(path: impl AsRef<Path>) -> Result<Vec<ExposureRecord>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_exposure_bytes(&bytes)?)
}

pub fn parse_exposure_bytes(bytes: &[u8]) -> Result<Vec<ExposureRecord>, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| ParseError::at_line(FORMAT, 1, format!("unreadable header: {e}")))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ParseError::at_line(FORMAT, 1, format!("missing column {name:?}")))
    };
    let name_col = column("name")?;
    let exposure_col = column("exposure")?;

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            ParseError::at_line(FORMAT, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let name = row
            .get(name_col)
            .filter(|n| !n.is_empty())
            .ok_or_else(|| ParseError::at_line(FORMAT, line, "missing name"))?
            .to_string();
        let raw = row
            .get(exposure_col)
            .ok_or_else(|| ParseError::at_line(FORMAT, line, "missing exposure"))?;
        let exposure: f64 = raw
            .parse()
            .map_err(|_| ParseError::at_line(FORMAT, line, format!("invalid exposure {raw:?}")))?;
        if !(exposure.is_finite() && exposure > 0.0) {
            return Err(ParseError::at_line(FORMAT, line, format!("exposure must be > 0, got {exposure}")));
        }
        if !seen.insert(name.clone()) {
            return Err(ParseError::at_line(FORMAT, line, format!("duplicate name {name:?}")));
        }
        records.push(ExposureRecord { name, exposure });
    }
    Ok(records)
}

pub fn format_exposure_csv(records: &[ExposureRecord]) -> String {
    let mut out = String::from("name,exposure\n");
    for r in records {
        out.push_str(&format!("{},{}\n", r.name, r.exposure));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record() {
        let recs = parse_exposure_bytes(b"name,exposure\na.png,0.01\n").unwrap();
        assert_eq!(
            recs,
            vec![ExposureRecord {
                name: "a.png".into(),
                exposure: 0.01
            }]
        );
    }

    #[test]
    fn duplicates_rejected() {
        let err = parse_exposure_bytes(b"name,exposure\na.png,0.01\na.png,0.02\n").unwrap_err();
        assert!(err.message.contains("duplicate"));
        assert_eq!(err.line, Some(3));
    }

    #[test]
    fn non_positive_rejected() {
        assert!(parse_exposure_bytes(b"name,exposure\na.png,0\n").is_err());
        assert!(parse_exposure_bytes(b"name,exposure\na.png,-1\n").is_err());
    }

    #[test]
    fn missing_column() {
        let err = parse_exposure_bytes(b"name,gain\na.png,1\n").unwrap_err();
        assert!(err.message.contains("exposure"));
    }

    #[test]
    fn generated_rows_in_order() {
        let recs: Vec<ExposureRecord> = (0..100)
            .map(|i| ExposureRecord {
                name: format!("frame_{i:04}.png"),
                exposure: 0.001 * (i + 1) as f64,
            })
            .collect();
        let parsed = parse_exposure_bytes(format_exposure_csv(&recs).as_bytes()).unwrap();
        assert_eq!(parsed, recs);
    }
}

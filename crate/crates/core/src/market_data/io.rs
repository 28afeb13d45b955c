//! CSV ingestion and export.
//!
//! File schema: header row mandatory, first column an ISO-8601 date, remaining
//! columns named numeric series. Missing or unparseable values are hard
//! errors; no imputation.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;

use super::{ReturnSeries, SeriesPanel};
use crate::error::{Error, Result};

fn parse_date(raw: &str, row: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Parse { row, msg: format!("bad date {raw:?}: {e}") })
}

fn parse_value(raw: &str, row: usize, col: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse { row, msg: format!("bad value {raw:?} in column {col}: {e}") })
}

/// Load one named return column from a CSV file.
///
/// Rows are sorted by date; duplicate dates and returns <= -1 are errors that
/// name the offending file row (1-based, counting the header as row 1).
pub fn load_returns_csv(path: &Path, column: &str) -> Result<ReturnSeries> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col_idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::Config(format!("no column {column:?} in {}", path.display())))?;

    let mut rows: Vec<(NaiveDate, f64, usize)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based file row, after the header
        let record = record?;
        let date = parse_date(record.get(0).unwrap_or(""), row)?;
        let value = parse_value(record.get(col_idx).unwrap_or(""), row, column)?;
        if value <= -1.0 || !value.is_finite() {
            return Err(Error::Domain(format!(
                "return {value} at row {row} ({date}) out of domain (-1, inf)"
            )));
        }
        rows.push((date, value, row));
    }
    rows.sort_by_key(|(d, _, _)| *d);
    let mut seen = BTreeSet::new();
    for (d, _, row) in &rows {
        if !seen.insert(*d) {
            return Err(Error::Domain(format!("duplicate date {d} at row {row}")));
        }
    }
    ReturnSeries::new(
        rows.iter().map(|(d, _, _)| *d).collect(),
        rows.iter().map(|(_, v, _)| *v).collect(),
    )
}

/// Load every numeric column of a CSV file as a panel.
pub fn load_panel_csv(path: &Path) -> Result<SeriesPanel> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Config(format!("{} has no value columns", path.display())));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();

    let mut rows: Vec<(NaiveDate, Vec<f64>, usize)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let date = parse_date(record.get(0).unwrap_or(""), row)?;
        let mut vals = Vec::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            vals.push(parse_value(record.get(j + 1).unwrap_or(""), row, name)?);
        }
        rows.push((date, vals, row));
    }
    rows.sort_by_key(|(d, _, _)| *d);
    let mut seen = BTreeSet::new();
    for (d, _, row) in &rows {
        if !seen.insert(*d) {
            return Err(Error::Domain(format!("duplicate date {d} at row {row}")));
        }
    }
    let mut values = Array2::zeros((rows.len(), names.len()));
    for (i, (_, vals, _)) in rows.iter().enumerate() {
        for (j, v) in vals.iter().enumerate() {
            values[[i, j]] = *v;
        }
    }
    SeriesPanel::new(rows.iter().map(|(d, _, _)| *d).collect(), names, values)
}

/// Write a panel with full float precision.
pub fn write_panel_csv(panel: &SeriesPanel, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(panel.names().iter().cloned());
    w.write_record(&header)?;
    for (i, d) in panel.dates().iter().enumerate() {
        let mut rec = vec![d.format("%Y-%m-%d").to_string()];
        for j in 0..panel.n_cols() {
            rec.push(format!("{:.12e}", panel.values()[[i, j]]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a single return series under the given column name.
pub fn write_returns_csv(series: &ReturnSeries, name: &str, path: &Path) -> Result<()> {
    write_panel_csv(&series.to_panel(name), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_row_file() {
        let f = write_tmp("date,bond\n2020-01-02,0.001\n2020-01-03,-0.002\n");
        let s = load_returns_csv(f.path(), "bond").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.values(), &[0.001, -0.002]);
    }

    #[test]
    fn duplicate_date_is_error() {
        let f = write_tmp("date,bond\n2020-01-02,0.001\n2020-01-02,0.002\n");
        let err = load_returns_csv(f.path(), "bond").unwrap_err();
        assert!(err.to_string().contains("duplicate date 2020-01-02"));
    }

    #[test]
    fn out_of_domain_value_names_row() {
        let f = write_tmp("date,bond\n2020-01-02,0.001\n2020-01-03,-1.5\n");
        let err = load_returns_csv(f.path(), "bond").unwrap_err();
        assert!(err.to_string().contains("row 3"), "got: {err}");
    }

    #[test]
    fn unparseable_value_names_row() {
        let f = write_tmp("date,bond\n2020-01-02,xyz\n");
        let err = load_returns_csv(f.path(), "bond").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "got: {err}");
    }

    #[test]
    fn missing_column_is_config_error() {
        let f = write_tmp("date,bond\n2020-01-02,0.001\n");
        assert!(matches!(load_returns_csv(f.path(), "other"), Err(Error::Config(_))));
    }

    #[test]
    fn unsorted_input_is_sorted_on_load() {
        let f = write_tmp("date,bond\n2020-01-03,0.2\n2020-01-02,0.1\n");
        let s = load_returns_csv(f.path(), "bond").unwrap();
        assert_eq!(s.values(), &[0.1, 0.2]);
    }

    #[test]
    fn panel_roundtrip_preserves_values() {
        let f = write_tmp("date,a,b\n2020-01-02,0.5,1.5\n2020-01-03,-0.25,2.5\n");
        let p = load_panel_csv(f.path()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_panel_csv(&p, out.path()).unwrap();
        let p2 = load_panel_csv(out.path()).unwrap();
        assert_eq!(p, p2);
    }
}

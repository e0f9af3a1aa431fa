use std::path::Path;

use super::SeriesTable;
use crate::error::{MouError, Result};

/// Reads a header-first CSV whose first column is a timestamp and whose
/// remaining columns are numeric variables.
pub fn load_csv(path: impl AsRef<Path>) -> Result<SeriesTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| MouError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(file);
    let parse_err = |line: u64, detail: String| MouError::Parse { path: path.to_path_buf(), line, detail };

    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.len() < 2 {
        return Err(parse_err(1, "need a timestamp column and at least one variable".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut values = vec![Vec::new(); names.len()];

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", headers.len(), record.len())));
        }
        timestamps.push(record[0].to_string());
        for (i, cell) in record.iter().skip(1).enumerate() {
            let missing = || MouError::MissingValue { path: path.to_path_buf(), line, column: names[i].clone() };
            if cell.is_empty() {
                return Err(missing());
            }
            let v: f64 = cell.parse().map_err(|_| parse_err(line, format!("column `{}`: `{cell}` is not a number", names[i])))?;
            if !v.is_finite() {
                return Err(missing());
            }
            values[i].push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    SeriesTable::new(names, timestamps, values)
}

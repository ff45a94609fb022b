//! Columnar output tables with `#` metadata lines.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::CliError;

/// Full round-trip formatting for floats.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { metadata: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Self { metadata: Vec::new(), columns, rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Header and rows without the metadata lines.
    pub fn body_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(&self.body_csv()?);
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_csv()?).map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io)?;
        let mut metadata = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line[1..].trim().split_once(": ") {
                metadata.push((k.to_string(), v.to_string()));
            }
        }
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let columns = reader.headers().map_err(io)?.iter().map(String::from).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .map_err(io)?;
        Ok(Self { metadata, columns, rows })
    }

    /// `{metadata, columns, rows}` with numeric cells as JSON numbers.
    pub fn to_json(&self) -> Value {
        let metadata: Map<String, Value> =
            self.metadata.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().zip(r).map(|(c, cell)| (c.clone(), json_cell(cell))).collect()))
            .collect();
        serde_json::json!({ "metadata": metadata, "columns": self.columns, "rows": rows })
    }

    /// Whitespace-separated columns under a `#` comment header.
    pub fn to_gnuplot(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(&format!("# {}\n", self.columns.join(" ")));
        for r in &self.rows {
            let cells: Vec<String> = r
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        "NaN".to_string()
                    } else if c.contains(char::is_whitespace) {
                        format!("\"{c}\"")
                    } else {
                        c.clone()
                    }
                })
                .collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

fn json_cell(cell: &str) -> Value {
    if let Ok(i) = cell.parse::<i64>() {
        return Value::from(i);
    }
    match cell.parse::<f64>() {
        Ok(x) if x.is_finite() => Value::from(x),
        _ => match cell {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            "" => Value::Null,
            _ => Value::String(cell.to_string()),
        },
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_disk() {
        let mut t = Table::new(&["n", "value", "note"]);
        t.meta("cNorm", num(4.000000000000004)).meta("boxRadius", "none");
        t.push(vec!["1".into(), num(0.1 + 0.2), "a b".into()]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        t.write_csv(&path).unwrap();
        let back = Table::read_csv(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.rows[0][1].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert!(t.to_gnuplot().contains("1 0.30000000000000004 \"a b\""));
        assert_eq!(t.to_json()["rows"][0]["n"], 1);
    }
}

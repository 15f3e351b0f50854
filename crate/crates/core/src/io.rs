//! Plain-text formats: numeric CSV matrices and flat `key = value` files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    let t = s.trim();
    match t {
        "inf" | "Inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" | "-Inf" => Ok(f64::NEG_INFINITY),
        "NaN" | "nan" | "NA" => Ok(f64::NAN),
        _ => t
            .parse()
            .map_err(|_| Error::Parse(format!("expected a number, got `{t}`"))),
    }
}

/// A numeric table with an optional header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvMatrix {
    pub header: Option<Vec<String>>,
    pub data: DMatrix<f64>,
}

impl CsvMatrix {
    pub fn new(header: Option<Vec<String>>, data: DMatrix<f64>) -> Self {
        CsvMatrix { header, data }
    }

    /// Header interpreted as numbers (the grid of a curve file).
    pub fn numeric_header(&self) -> Result<Vec<f64>> {
        let h = self
            .header
            .as_ref()
            .ok_or_else(|| Error::Parse("file has no header row".into()))?;
        h.iter().map(|s| parse_f64(s)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(h) = &self.header {
            let _ = writeln!(out, "{}", h.join(","));
        }
        for r in 0..self.data.nrows() {
            let row: Vec<String> = (0..self.data.ncols())
                .map(|c| format_f64(self.data[(r, c)]))
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Parses CSV text. The first line is a header when any of its fields is
    /// not numeric, or when `numeric_header` forces it.
    pub fn from_text(text: &str, numeric_header: bool) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
        let mut header = None;
        if let Some(first) = lines.peek() {
            let fields: Vec<&str> = first.split(',').collect();
            let all_numeric = fields.iter().all(|f| f.trim().parse::<f64>().is_ok());
            if numeric_header || !all_numeric {
                header = Some(fields.iter().map(|f| f.trim().to_string()).collect());
                lines.next();
            }
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (ln, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(parse_f64)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Parse(format!("data row {}: {e}", ln + 1)))?;
            if let Some(prev) = rows.first() {
                if prev.len() != row.len() {
                    return Err(Error::Parse(format!(
                        "data row {} has {} fields, expected {}",
                        ln + 1,
                        row.len(),
                        prev.len()
                    )));
                }
            }
            rows.push(row);
        }
        let ncols = rows
            .first()
            .map(|r| r.len())
            .or_else(|| header.as_ref().map(|h: &Vec<String>| h.len()))
            .unwrap_or(0);
        if let Some(h) = &header {
            if h.len() != ncols {
                return Err(Error::Parse(format!(
                    "header has {} fields, data has {ncols}",
                    h.len()
                )));
            }
        }
        let data = DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]);
        Ok(CsvMatrix { header, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path, numeric_header: bool) -> Result<Self> {
        CsvMatrix::from_text(&fs::read_to_string(path)?, numeric_header)
    }
}

/// Grid header row for curve files.
pub fn grid_header(grid: &[f64]) -> Vec<String> {
    grid.iter().map(|v| format_f64(*v)).collect()
}

/// Flat, ordered `key = value` records. `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValue {
    entries: Vec<(String, String)>,
}

impl KeyValue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValue::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", ln + 1)))?;
            kv.set(k.trim(), v.trim());
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        KeyValue::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        if let Some(e) = self.entries.iter_mut().find(|(k, _)| k == key) {
            e.1 = value;
        } else {
            self.entries.push((key.to_string(), value));
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`"))),
        }
    }

    pub fn parse_required<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.require(key)?;
        v.parse()
            .map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

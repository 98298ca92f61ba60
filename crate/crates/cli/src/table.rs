//! CSV result tables.
//!
//! Layout: `# key=value` metadata lines, a header row, data rows, then
//! optional `# key=value` footer lines. Reals are written with 17
//! significant digits so a table read back compares equal to the one
//! written.

use std::fmt;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed table: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Real(r) => Some(*r),
            Cell::Text(_) => None,
        }
    }

    fn parse(s: &str) -> Cell {
        if let Ok(i) = s.parse::<i64>() {
            return Cell::Int(i);
        }
        match s.parse::<f64>() {
            Ok(r) => Cell::Real(r),
            Err(_) => Cell::Text(s.to_string()),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Real(r) => write!(f, "{}", format_real(*r)),
            Cell::Text(t) => f.write_str(t),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Scientific notation with 17 significant digits; `nan`/`inf` spelled out.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub name: String,
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub footer: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        ResultTable {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn meta(&mut self, key: &str, value: impl fmt::Display) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn foot(&mut self, key: &str, value: f64) {
        self.footer.push((key.to_string(), format_real(value)));
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        self.rows.iter().map(|r| r[idx].as_f64()).collect()
    }

    pub fn footer_value(&self, key: &str) -> Option<f64> {
        self.footer
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| v.parse().ok())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), TableError> {
        writeln!(out, "# table={}", self.name)?;
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}={v}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(|c| c.to_string()))?;
            }
            w.flush()?;
        }
        for (k, v) in &self.footer {
            writeln!(out, "# {k}={v}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 output")
    }

    pub fn write_file(&self, path: &Path) -> Result<(), TableError> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_str(text: &str) -> Result<ResultTable, TableError> {
        let mut table = ResultTable::default();
        let mut body = String::new();
        let mut seen_body = false;
        for line in text.lines() {
            if let Some(comment) = line.strip_prefix("# ") {
                let (k, v) = comment
                    .split_once('=')
                    .ok_or_else(|| TableError::Malformed(format!("comment without `=`: {line}")))?;
                if k == "table" && !seen_body {
                    table.name = v.to_string();
                } else if seen_body {
                    table.footer.push((k.to_string(), v.to_string()));
                } else {
                    table.metadata.push((k.to_string(), v.to_string()));
                }
            } else {
                if !table.footer.is_empty() {
                    return Err(TableError::Malformed("data after footer".into()));
                }
                seen_body = true;
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(body.as_bytes());
        table.columns = reader.headers()?.iter().map(str::to_string).collect();
        for record in reader.records() {
            let record = record?;
            table.rows.push(record.iter().map(Cell::parse).collect());
        }
        Ok(table)
    }
}

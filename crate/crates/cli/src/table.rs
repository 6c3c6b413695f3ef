//! Versioned tabular outputs, written as CSV or JSON lines.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    JsonLines,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Str(String),
    Num(f64),
    Int(i64),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Str(s) => s.clone(),
            Cell::Num(v) if v.is_finite() => v.to_string(),
            Cell::Num(_) | Cell::Empty => String::new(),
            Cell::Int(i) => i.to_string(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Str(s) => s.clone().into(),
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(serde_json::Value::Null, Into::into),
            Cell::Int(i) => (*i).into(),
            Cell::Empty => serde_json::Value::Null,
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Str(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Str(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: &'static str,
    pub version: u32,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, version: u32, columns: &[&'static str]) -> Self {
        Self {
            name,
            version,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "{} row width", self.name);
        self.rows.push(row);
    }

    pub fn header_line(&self) -> String {
        format!("# membrane-mech {} v{}", self.name, self.version)
    }

    pub fn write_to<W: Write>(&self, mut w: W, format: Format) -> Result<()> {
        match format {
            Format::Csv => {
                writeln!(w, "{}", self.header_line())?;
                let mut out = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(w);
                out.write_record(&self.columns)?;
                for row in &self.rows {
                    out.write_record(row.iter().map(Cell::render))?;
                }
                out.flush()?;
            }
            Format::JsonLines => {
                for row in &self.rows {
                    let obj: serde_json::Map<String, serde_json::Value> = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.to_string(), v.json()))
                        .collect();
                    serde_json::to_writer(&mut w, &obj)?;
                    w.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }

    /// Writes `<dir>/<name>.<ext>`.
    pub fn save(&self, dir: &Path, format: Format) -> Result<PathBuf> {
        let path = dir.join(format!("{}.{}", self.name, format.extension()));
        let mut buf = Vec::new();
        self.write_to(&mut buf, format)?;
        std::fs::write(&path, buf)?;
        Ok(path)
    }
}

/// Reads a CSV written by [`Table`]: `#` lines skipped, header row required.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((headers, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_lines() {
        let mut t = Table::new("demo", 1, &["a", "b", "c"]);
        t.push(vec!["x,y".into(), 0.1.into(), Cell::Empty]);
        t.push(vec!["z".into(), Cell::Int(3), f64::NAN.into()]);
        let mut csv = Vec::new();
        t.write_to(&mut csv, Format::Csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "# membrane-mech demo v1\na,b,c\n\"x,y\",0.1,\nz,3,\n"
        );
        let mut jl = Vec::new();
        t.write_to(&mut jl, Format::JsonLines).unwrap();
        assert_eq!(
            String::from_utf8(jl).unwrap(),
            "{\"a\":\"x,y\",\"b\":0.1,\"c\":null}\n{\"a\":\"z\",\"b\":3,\"c\":null}\n"
        );
    }
}

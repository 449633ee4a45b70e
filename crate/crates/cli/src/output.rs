//! Tabular outputs and the run metadata sidecar.

use crate::config::{Format, RunConfig};
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) if x.is_nan() => "NaN".into(),
            Cell::Num(x) if *x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e15) => format!("{x:e}"),
            Cell::Num(x) => format!("{x}"),
            Cell::Int(k) => k.to_string(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) => Value::Null,
            Cell::Int(k) => json!(k),
            Cell::Bool(b) => json!(b),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k as u64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

pub struct Table {
    pub schema: &'static str,
    pub columns: &'static [&'static str],
    pub parameters: Value,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(schema: &'static str, columns: &'static [&'static str], parameters: Value) -> Self {
        Table { schema, columns, parameters, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# schema: complexmarket.{}/{SCHEMA_VERSION}", self.schema);
        let _ = writeln!(out, "# parameters: {}", self.parameters);
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    fn render_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect()))
            .collect();
        let doc = json!({
            "schema": format!("complexmarket.{}/{SCHEMA_VERSION}", self.schema),
            "parameters": self.parameters,
            "columns": self.columns,
            "rows": rows,
        });
        serde_json::to_string_pretty(&doc).unwrap() + "\n"
    }
}

/// Collects files in memory and writes them only under the output directory.
pub struct Writer {
    dir: PathBuf,
    format: Format,
    files: Vec<(String, String)>,
}

impl Writer {
    pub fn new(dir: &Path, format: Format) -> Self {
        Writer { dir: dir.to_path_buf(), format, files: Vec::new() }
    }

    pub fn table(&mut self, stem: &str, table: &Table) {
        let (name, body) = match self.format {
            Format::Csv => (format!("{stem}.csv"), table.render_csv()),
            Format::Json => (format!("{stem}.json"), table.render_json()),
        };
        self.files.push((name, body));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let body = serde_json::to_string_pretty(value).unwrap() + "\n";
        self.files.push((name.to_string(), body));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn flush(&self) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        for (name, body) in &self.files {
            std::fs::write(self.dir.join(name), body)?;
        }
        Ok(())
    }
}

/// File-name fragment for a parameter value: `0.05` → `0.05`, `-0.01` → `m0.01`.
pub fn tag(x: f64) -> String {
    let s = format!("{x}");
    match s.strip_prefix('-') {
        Some(rest) => format!("m{rest}"),
        None => s,
    }
}

pub fn metadata(config: &RunConfig, files: &[String], wall_time: f64, status: &str) -> Value {
    json!({
        "schema": format!("complexmarket.metadata/{SCHEMA_VERSION}"),
        "status": status,
        "config": config,
        "seed": config.model.seed,
        "generator": complexmarket::economy::GENERATOR,
        "versions": {
            "complexmarket": complexmarket::VERSION,
            "complexmarket-cli": env!("CARGO_PKG_VERSION"),
        },
        "files": files,
        "wall_time_seconds": wall_time,
    })
}

//! Serialized file output. Each file opens with the toolkit version, the
//! command and the resolved configuration; CSV files carry these as `#`
//! lines, JSON files under a `_header` key.

use std::fs;
use std::path::{Path, PathBuf};

use paramosc_core::output::{Cell, CsvTable};
use serde_json::{json, Map, Value};

use crate::config::{Format, RunConfig};
use crate::error::CliError;

pub struct Sink {
    dir: PathBuf,
    format: Format,
    command: &'static str,
    config_toml: String,
    config_json: Value,
    pub written: Vec<PathBuf>,
}

impl Sink {
    /// Creates the output directory and checks that it accepts files.
    pub fn new(cfg: &RunConfig, command: &'static str) -> Result<Self, CliError> {
        let dir = cfg.out.clone();
        fs::create_dir_all(&dir).map_err(|source| CliError::Output {
            path: dir.clone(),
            source,
        })?;
        let probe = dir.join(".paramosc-write-test");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|source| CliError::Output {
                path: dir.clone(),
                source,
            })?;
        Ok(Self {
            dir,
            format: cfg.format,
            command,
            config_toml: cfg.to_toml(),
            config_json: serde_json::to_value(cfg).expect("run configuration serializes"),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("paramosc {}", paramosc_core::VERSION),
            format!("command: {}", self.command),
            "config:".to_string(),
        ];
        lines.extend(self.config_toml.lines().map(|l| format!("  {l}")));
        lines
    }

    fn header_json(&self) -> Value {
        json!({
            "toolkit": "paramosc",
            "version": paramosc_core::VERSION,
            "command": self.command,
            "config": self.config_json,
        })
    }

    fn write(&mut self, name: &str, contents: String) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    /// Writes `table` as `<stem>.csv` or `<stem>.json`. Comments already in
    /// the table follow the header.
    pub fn table(&mut self, stem: &str, table: &CsvTable) -> Result<(), CliError> {
        match self.format {
            Format::Csv => {
                let mut t = CsvTable::new(table.columns.clone());
                t.rows = table.rows.clone();
                t.comments = self.header_lines();
                t.comments.extend(table.comments.iter().cloned());
                self.write(&format!("{stem}.csv"), t.render())
            }
            Format::Json => {
                let mut obj = Map::new();
                obj.insert("_header".into(), self.header_json());
                if !table.comments.is_empty() {
                    obj.insert("notes".into(), json!(table.comments));
                }
                obj.insert("columns".into(), json!(table.columns));
                let rows: Vec<Value> = table
                    .rows
                    .iter()
                    .map(|r| Value::Array(r.iter().map(cell_value).collect()))
                    .collect();
                obj.insert("rows".into(), Value::Array(rows));
                self.write(&format!("{stem}.json"), render_json(Value::Object(obj)))
            }
        }
    }

    /// Writes a JSON document regardless of the table format.
    pub fn document(&mut self, stem: &str, body: Value) -> Result<(), CliError> {
        let mut obj = Map::new();
        obj.insert("_header".into(), self.header_json());
        match body {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("data".into(), other);
            }
        }
        self.write(&format!("{stem}.json"), render_json(Value::Object(obj)))
    }
}

fn render_json(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Non-finite numbers become `null`, as in CSV they become empty fields.
pub fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn cell_value(c: &Cell) -> Value {
    match c {
        Cell::Num(v) => number(*v),
        Cell::Int(v) => json!(v),
        Cell::Text(s) => json!(s),
        Cell::Missing => Value::Null,
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use kimmel::format::sci17;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::Format;
use crate::error::CliError;

pub const VERSION: &str = concat!("kimmel-cli/", env!("CARGO_PKG_VERSION"));

/// A CSV table with a fixed header; floats in 17 significant digits.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    width: usize,
}

/// One CSV field.
#[derive(Debug, Clone)]
pub enum Field {
    Int(u64),
    Float(f64),
    Text(String),
    Empty,
}

impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Int(v)
    }
}
impl From<u32> for Field {
    fn from(v: u32) -> Self {
        Field::Int(v as u64)
    }
}
impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as u64)
    }
}
impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}
impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_string())
    }
}
impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Text(v)
    }
}
impl<T: Into<Field>> From<Option<T>> for Field {
    fn from(v: Option<T>) -> Self {
        v.map_or(Field::Empty, Into::into)
    }
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")), width: header.len() }
    }

    pub fn row(&mut self, fields: Vec<Field>) {
        assert_eq!(fields.len(), self.width, "CSV row width");
        let cells: Vec<String> = fields
            .into_iter()
            .map(|f| match f {
                Field::Int(v) => v.to_string(),
                Field::Float(v) => sci17(v),
                Field::Text(s) => s,
                Field::Empty => String::new(),
            })
            .collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// Collects one command's JSON summary and CSV tables, then writes them.
#[derive(Debug)]
pub struct Report {
    command: &'static str,
    json: Map<String, Value>,
    tables: Vec<(String, Csv)>,
}

impl Report {
    pub fn new(command: &'static str, seed: u64, config: Value) -> Self {
        let mut json = Map::new();
        json.insert("command".into(), json!(command));
        json.insert("version".into(), json!(VERSION));
        json.insert("seed".into(), json!(seed));
        json.insert("config".into(), config);
        Self { command, json, tables: Vec::new() }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.json.insert(key.to_string(), v);
    }

    pub fn table(&mut self, name: &str, csv: Csv) {
        self.tables.push((format!("{name}.csv"), csv));
    }

    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| CliError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::new();
        let mut put = |name: &str, contents: &str| -> Result<(), CliError> {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(io(&path))?;
            written.push(path);
            Ok(())
        };
        let json_text = |map: &Map<String, Value>| {
            let mut s = serde_json::to_string_pretty(&Value::Object(map.clone())).expect("JSON text");
            s.push('\n');
            s
        };
        match format {
            Format::Csv => {
                let envelope: Map<String, Value> = ["command", "version", "seed", "config"]
                    .iter()
                    .filter_map(|k| self.json.get(*k).map(|v| (k.to_string(), v.clone())))
                    .collect();
                put(&format!("{}.config.json", self.command), &json_text(&envelope))?;
            }
            Format::Json | Format::Both => put(&format!("{}.json", self.command), &json_text(&self.json))?,
        }
        if format != Format::Json {
            for (name, csv) in &self.tables {
                put(name, csv.text())?;
            }
        }
        Ok(written)
    }
}

//! Report emission: flattened CSV or `{metadata, rows}` JSON, plus a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const ARTIFACT_VERSION: &str = concat!("foreclosure-lab/", env!("CARGO_PKG_VERSION"));

pub type Row = Map<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Serializes `value` to a JSON object row.
pub fn to_row<T: Serialize>(value: &T) -> Row {
    match serde_json::to_value(value).expect("report types serialize") {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    }
}

/// Nested objects become dotted columns; arrays stay whole.
pub fn flatten(row: &Row) -> Row {
    fn walk(prefix: &str, v: &Value, out: &mut Row) {
        match v {
            Value::Object(m) if !m.is_empty() => {
                for (k, x) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, x, out);
                }
            }
            _ => {
                out.insert(prefix.to_string(), v.clone());
            }
        }
    }
    let mut out = Map::new();
    for (k, v) in row {
        walk(k, v, &mut out);
    }
    out
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}

pub struct Metadata {
    pub hash: String,
    pub seed: Option<u64>,
}

impl Metadata {
    fn json(&self) -> Value {
        json!({
            "artifact_version": ARTIFACT_VERSION,
            "scenario_hash": self.hash,
            "seed": self.seed,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Written {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

pub struct Emitter {
    pub dir: PathBuf,
    pub format: Format,
    pub meta: Metadata,
    pub written: Vec<Written>,
}

impl Emitter {
    pub fn new(dir: &Path, format: Format, meta: Metadata) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), format, meta, written: Vec::new() })
    }

    fn record(&mut self, file: String, rows: usize, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(&file), bytes)?;
        self.written.push(Written { file, rows, sha256: hex::encode(Sha256::digest(bytes)) });
        Ok(())
    }

    /// Writes `<stem>.csv` or `<stem>.json`.
    pub fn table(&mut self, stem: &str, rows: &[Row]) -> Result<(), CliError> {
        let file = format!("{stem}.{}", self.format.extension());
        let bytes = match self.format {
            Format::Csv => self.csv_bytes(rows)?,
            Format::Json => {
                let doc = json!({ "metadata": self.meta.json(), "rows": rows });
                let mut b = serde_json::to_vec_pretty(&doc)?;
                b.push(b'\n');
                b
            }
        };
        self.record(file, rows.len(), &bytes)
    }

    fn csv_bytes(&self, rows: &[Row]) -> Result<Vec<u8>, CliError> {
        let flat: Vec<Row> = rows.iter().map(flatten).collect();
        let mut columns: Vec<String> = vec!["artifact_version".into(), "scenario_hash".into(), "seed".into()];
        for r in &flat {
            for k in r.keys() {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
        // A null object in one row and a populated one in another would give both
        // `x` and `x.field`; keep only the dotted columns then.
        let all = columns.clone();
        columns.retain(|c| {
            let nested = all.iter().any(|o| o.len() > c.len() && o.starts_with(c.as_str()) && o.as_bytes()[c.len()] == b'.');
            !nested || flat.iter().any(|r| r.get(c).is_some_and(|v| !v.is_null()))
        });
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&columns)?;
        let seed = self.meta.seed.map(|s| s.to_string()).unwrap_or_default();
        for r in &flat {
            let mut rec = vec![ARTIFACT_VERSION.to_string(), self.meta.hash.clone(), seed.clone()];
            rec.extend(columns[3..].iter().map(|c| r.get(c).map(cell).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
    }

    /// Writes a single JSON document with the metadata object first.
    pub fn document(&mut self, file: &str, body: Value) -> Result<(), CliError> {
        let mut doc = Map::new();
        doc.insert("metadata".into(), self.meta.json());
        if let Value::Object(m) = body {
            doc.extend(m);
        }
        let mut b = serde_json::to_vec_pretty(&Value::Object(doc))?;
        b.push(b'\n');
        let rows = 1;
        self.record(file.to_string(), rows, &b)
    }

    pub fn manifest(&mut self, subcommand: &str, settings: Value) -> Result<(), CliError> {
        let mut doc = Map::new();
        doc.insert("metadata".into(), self.meta.json());
        doc.insert("subcommand".into(), Value::from(subcommand));
        doc.insert("format".into(), serde_json::to_value(self.format)?);
        if let Value::Object(m) = settings {
            doc.extend(m);
        }
        doc.insert("outputs".into(), serde_json::to_value(&self.written)?);
        let mut b = serde_json::to_vec_pretty(&Value::Object(doc))?;
        b.push(b'\n');
        fs::write(self.dir.join(format!("{subcommand}.manifest.json")), b)?;
        Ok(())
    }
}

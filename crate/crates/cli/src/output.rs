//! Rendering and atomic writing of results.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::args::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Real(x) => real(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Real(x) => json!(x),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone)]
pub enum Artifact {
    Table { header: Option<Vec<String>>, rows: Vec<Vec<Cell>> },
    Json(Map<String, Value>),
}

impl Artifact {
    pub fn table(header: &[&str], rows: Vec<Vec<Cell>>) -> Self {
        Artifact::Table {
            header: Some(header.iter().map(|s| s.to_string()).collect()),
            rows,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Parameters recorded in output files: everything except where the output
/// goes and how many threads computed it.
fn recorded(cfg: &RunConfig) -> impl Iterator<Item = (&String, &String)> {
    cfg.params.iter().filter(|(k, _)| k.as_str() != "out" && k.as_str() != "threads")
}

pub fn provenance_json(cfg: &RunConfig, seed: u64) -> Value {
    let params: Map<String, Value> = recorded(cfg).map(|(k, v)| (k.clone(), json!(v))).collect();
    json!({
        "tool": "heavytail",
        "version": VERSION,
        "subcommand": cfg.subcommand,
        "seed": seed,
        "params": params,
    })
}

fn provenance_line(cfg: &RunConfig, seed: u64) -> String {
    let mut line = format!("# heavytail {VERSION} {} seed={seed}", cfg.subcommand);
    for (k, v) in recorded(cfg) {
        if k != "seed" {
            line.push_str(&format!(" {k}={v}"));
        }
    }
    line
}

pub fn render(artifact: &Artifact, format: Format, cfg: &RunConfig, seed: u64) -> String {
    match (artifact, format) {
        (Artifact::Table { header, rows }, Format::Csv) => {
            let mut s = provenance_line(cfg, seed);
            s.push('\n');
            if let Some(h) = header {
                s.push_str(&h.join(","));
                s.push('\n');
            }
            for row in rows {
                let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            s
        }
        (Artifact::Table { header, rows }, Format::Json) => {
            let rows: Vec<Value> = rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
            let v = json!({
                "provenance": provenance_json(cfg, seed),
                "columns": header,
                "rows": rows,
            });
            let mut s = serde_json::to_string_pretty(&v).expect("serializable");
            s.push('\n');
            s
        }
        (Artifact::Json(map), _) => {
            let mut m = Map::new();
            m.insert("provenance".into(), provenance_json(cfg, seed));
            m.extend(map.clone());
            let mut s = serde_json::to_string_pretty(&Value::Object(m)).expect("serializable");
            s.push('\n');
            s
        }
    }
}

/// Writes `text` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 123456789.123456789] {
            let s = real(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(real(f64::INFINITY), "inf");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, "one\n").unwrap();
        write_atomic(&p, "two\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

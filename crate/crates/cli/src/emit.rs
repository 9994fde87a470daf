//! Artifact writers. Floats are printed with 17 significant digits
//! (`{:.16e}`), which round-trips every `f64`; object keys are sorted so
//! identical inputs give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // not representable in JSON; CSV cells use the same spelling
        format!("{x}")
    }
}

/// Hex SHA-256 of the canonical JSON of the hashed view of `cfg`.
pub fn config_hash(cfg: &RunConfig) -> String {
    let v = serde_json::to_value(cfg.hashed_view()).expect("config serializes");
    let mut s = String::new();
    write_compact(&v, &mut s);
    let digest = Sha256::digest(s.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_number(n: &serde_json::Number, out: &mut String) {
    if n.is_f64() {
        let x = n.as_f64().expect("f64");
        out.push_str(&fmt_f64(x));
    } else {
        let _ = write!(out, "{n}");
    }
}

fn write_compact(v: &Value, out: &mut String) {
    match v {
        Value::Number(n) => write_number(n, out),
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_compact(x, out);
            }
            out.push(']');
        }
        Value::Object(m) => {
            out.push('{');
            for (i, (k, x)) in m.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_compact(x, out);
            }
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

fn write_pretty(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize, out: &mut String| out.extend(std::iter::repeat("  ").take(d));
    match v {
        Value::Array(a) if !a.is_empty() => {
            // short numeric rows stay on one line
            if a.len() <= 4 && a.iter().all(|x| x.is_number()) {
                write_compact(v, out);
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                pad(depth + 1, out);
                write_pretty(x, depth + 1, out);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push(']');
        }
        Value::Object(m) if !m.is_empty() => {
            out.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                pad(depth + 1, out);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_pretty(x, depth + 1, out);
                out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push('}');
        }
        _ => write_compact(v, out),
    }
}

pub fn to_json_string(v: &Value) -> String {
    let mut s = String::new();
    write_pretty(v, 0, &mut s);
    s.push('\n');
    s
}

/// Shared header of every artifact.
#[derive(Debug, Clone)]
pub struct Meta {
    pub task: String,
    pub config_hash: String,
    pub config: Value,
    pub grids: Value,
    pub workers: usize,
}

impl Meta {
    pub fn new(cfg: &RunConfig, grids: Value, workers: usize) -> Self {
        Self {
            task: cfg.task.name().to_string(),
            config_hash: config_hash(cfg),
            config: serde_json::to_value(cfg.hashed_view()).expect("config serializes"),
            grids,
            workers,
        }
    }

    fn json(&self) -> Value {
        json!({
            "version": env!("CARGO_PKG_VERSION"),
            "task": self.task,
            "config_hash": self.config_hash,
            "grids": self.grids,
            "workers": self.workers,
            "config": self.config,
        })
    }
}

pub struct Writer {
    pub dir: PathBuf,
    pub meta: Meta,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, meta: Meta) -> Self {
        Self { dir: dir.to_path_buf(), meta, written: Vec::new() }
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> std::io::Result<()> {
        let body = json!({
            "meta": self.meta.json(),
            "result": serde_json::to_value(result).map_err(std::io::Error::other)?,
        });
        let path = self.dir.join(name);
        std::fs::write(&path, to_json_string(&body))?;
        self.written.push(path);
        Ok(())
    }

    /// CSV with a `#`-prefixed metadata header.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> std::io::Result<()> {
        let mut buf = Vec::new();
        let meta_line = format!(
            "# version={} task={} config_hash={} grids={}\n",
            env!("CARGO_PKG_VERSION"),
            self.meta.task,
            self.meta.config_hash,
            {
                let mut s = String::new();
                write_compact(&self.meta.grids, &mut s);
                s
            }
        );
        buf.extend_from_slice(meta_line.as_bytes());
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header).map_err(std::io::Error::other)?;
            for r in rows {
                w.write_record(r.iter().map(Cell::render)).map_err(std::io::Error::other)?;
            }
            w.flush()?;
        }
        let path = self.dir.join(name);
        std::fs::write(&path, buf)?;
        self.written.push(path);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}
impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::I(x)
    }
}
impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}
impl From<i32> for Cell {
    fn from(x: i32) -> Self {
        Cell::I(x as i64)
    }
}
impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}
impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}

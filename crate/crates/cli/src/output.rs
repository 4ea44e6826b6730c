//! CSV tables and the run manifest.
//!
//! Tables are comma-separated with `.` decimals and 17 significant digits.
//! Each file opens with `#` comment lines carrying the tool version, seed,
//! configuration hash and a description of every column. Digests in the
//! manifest cover the data lines only, so quadrature outputs compare equal
//! across seeds while Monte Carlo outputs do not.

use crate::config::ExperimentConfig;
use hmq_core::exponent::DLoss;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<DLoss> for Cell {
    fn from(d: DLoss) -> Self {
        match d {
            DLoss::Finite(v) => Cell::Float(v),
            DLoss::Divergent => Cell::Text("divergent".into()),
        }
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file_name: String,
    /// `(name, description)` per column.
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `#` lines after the provenance block.
    pub notes: Vec<String>,
    /// Whether the values depend on the random seed.
    pub monte_carlo: bool,
}

impl Table {
    pub fn new(file_name: impl Into<String>, columns: &[(&str, &str)], monte_carlo: bool) -> Self {
        Table {
            file_name: file_name.into(),
            columns: columns.iter().map(|(n, d)| (n.to_string(), d.to_string())).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
            monte_carlo,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.file_name);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(n, _)| n == name)
    }

    /// Header row and data rows, newline-terminated.
    pub fn data(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.columns.iter().map(|(n, _)| n.as_str()).collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn render(&self, prov: &Provenance) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {} {}", prov.tool, prov.version);
        let _ = writeln!(out, "# experiment: {}", prov.experiment);
        let _ = writeln!(out, "# seed: {}", prov.seed);
        let _ = writeln!(out, "# config_sha256: {}", prov.config_sha256);
        for note in &self.notes {
            let _ = writeln!(out, "# {note}");
        }
        out.push_str("# columns:\n");
        for (name, doc) in &self.columns {
            let _ = writeln!(out, "#   {name}: {doc}");
        }
        out.push_str(&self.data());
        out
    }
}

/// Run-level identity stamped on every file.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: &'static str,
    pub seed: u64,
    pub config_sha256: String,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            experiment: cfg.experiment.name(),
            seed: cfg.mc.seed,
            config_sha256: cfg.hash(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the non-comment lines of a rendered table.
pub fn data_digest(text: &str) -> String {
    let mut h = Sha256::new();
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        h.update(line.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WrittenFile {
    /// Relative to the output directory.
    pub path: String,
    /// SHA-256 of the data lines (header comments excluded).
    pub sha256: String,
    /// SHA-256 of the whole file.
    pub file_sha256: String,
    pub rows: usize,
    pub monte_carlo: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("{}: {source}", path.display())]
pub struct IoError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError {
        path: path.to_path_buf(),
        source,
    })
}

pub fn prepare_dir(dir: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|source| IoError {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_table(dir: &Path, table: &Table, prov: &Provenance) -> Result<WrittenFile, IoError> {
    let text = table.render(prov);
    write(&dir.join(&table.file_name), &text)?;
    Ok(WrittenFile {
        path: table.file_name.clone(),
        sha256: data_digest(&text),
        file_sha256: sha256_hex(text.as_bytes()),
        rows: table.rows.len(),
        monte_carlo: table.monte_carlo,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub workers: usize,
    pub wall_time_seconds: f64,
    pub config: serde_json::Value,
    pub files: Vec<WrittenFile>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes `manifest.json` listing every produced file with its digests.
pub fn emit_manifest(
    cfg: &ExperimentConfig,
    files: &[WrittenFile],
    wall_time_seconds: f64,
    dir: &Path,
) -> Result<PathBuf, IoError> {
    let manifest = Manifest {
        provenance: Provenance::of(cfg),
        workers: cfg.mc.workers,
        wall_time_seconds,
        config: serde_json::to_value(cfg).expect("config serializes"),
        files: files.to_vec(),
    };
    let path = dir.join(MANIFEST_NAME);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&path, &text)?;
    Ok(path)
}

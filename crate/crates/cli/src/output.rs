//! Data-file emission: fixed-precision CSV, atomic writes, and the run manifest.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Nine significant digits, locale independent.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.8e}")
    }
}

/// Comma-separated table with `#`-prefixed header lines.
#[derive(Debug, Clone)]
pub struct Table {
    comments: Vec<String>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    /// `columns` are `name [unit]` pairs; the unit may be empty.
    pub fn new(title: &str, columns: &[(&str, &str)]) -> Self {
        let units: Vec<String> = columns.iter().map(|(_, u)| if u.is_empty() { "-".to_string() } else { u.to_string() }).collect();
        Self {
            comments: vec![title.to_string(), format!("units: {}", units.join(","))],
            columns: columns.iter().map(|(c, _)| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns.len(), "row width mismatch");
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskRecord {
    pub name: String,
    pub wall_clock_s: f64,
    /// Task-specific results and their error estimates.
    pub results: serde_json::Value,
}

/// Comparison of a computed number against a reference value.
#[derive(Debug, Clone, Serialize)]
pub struct Baseline {
    pub quantity: String,
    pub computed: f64,
    pub reference: f64,
    pub tolerance: f64,
    /// `reference` for the built-in reference values, `derived` for tool-computed baselines.
    pub origin: &'static str,
    pub pass: bool,
}

impl Baseline {
    pub fn new(quantity: impl Into<String>, computed: f64, reference: f64, tolerance: f64, origin: &'static str) -> Self {
        let pass = (computed - reference).abs() <= tolerance;
        Self { quantity: quantity.into(), computed, reference, tolerance, origin, pass }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub threads: usize,
    pub config: serde_json::Value,
    /// Fully resolved config; `--config manifest.json` re-runs from it.
    pub config_toml: String,
    pub tasks: Vec<TaskRecord>,
    pub baselines: Vec<Baseline>,
    pub files: Vec<FileEntry>,
}

/// Writes files into one output directory and records them for the manifest.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        write_atomic(&self.root.join(name), contents.as_bytes())?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents.as_bytes())),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> std::io::Result<()> {
        self.write(name, &table.render())
    }

    pub fn finish(mut self, mut manifest: Manifest) -> std::io::Result<PathBuf> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.files = self.files;
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.root.join("manifest.json");
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Write to a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

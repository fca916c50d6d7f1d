//! Output artifacts: CSV tables, plot scripts, the manifest and error records.
//! Every file is written to a temporary sibling and renamed into place.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

/// 17 significant digits, which round-trips every f64.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format_float(*v),
            Cell::I(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }
}

pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub meta: Vec<(String, String)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            meta: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Column header and data rows only; identical runs give identical bodies.
    pub fn body(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub config_sha256: String,
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

pub struct OutputDir {
    pub dir: PathBuf,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub outputs: Vec<OutputRecord>,
    pub timings: Vec<Timing>,
    started: Instant,
    phase_started: Instant,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn hash_config<T: Serialize>(cfg: &T) -> String {
    sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl OutputDir {
    pub fn create(dir: &Path, command: &str, config_sha256: String, seed: u64, threads: usize) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let now = Instant::now();
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_sha256,
            seed,
            threads,
            outputs: Vec::new(),
            timings: Vec::new(),
            started: now,
            phase_started: now,
        })
    }

    /// Closes the current timing phase under `name`.
    pub fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.timings.push(Timing { phase: name.to_string(), seconds: (now - self.phase_started).as_secs_f64() });
        self.phase_started = now;
    }

    fn record(&mut self, file: &str, bytes: &[u8], rows: Option<usize>) -> std::io::Result<()> {
        write_atomic(&self.dir.join(file), bytes)?;
        self.outputs.push(OutputRecord {
            file: file.to_string(),
            sha256: sha256_hex(bytes),
            config_sha256: self.config_sha256.clone(),
            rows,
        });
        Ok(())
    }

    pub fn write_table(&mut self, table: &Table) -> std::io::Result<()> {
        let mut text = String::new();
        let _ = writeln!(text, "# command: {}", self.command);
        let _ = writeln!(text, "# version: {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(text, "# config_sha256: {}", self.config_sha256);
        let _ = writeln!(text, "# seed: {}", self.seed);
        for (k, v) in &table.meta {
            let _ = writeln!(text, "# {k}: {v}");
        }
        text.push_str(&table.body());
        self.record(&format!("{}.csv", table.name), text.as_bytes(), Some(table.rows.len()))
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(value).expect("serializable output");
        self.record(file, text.as_bytes(), None)
    }

    /// Gnuplot script drawing columns `ys` of `table` against column `x`.
    pub fn write_plot(&mut self, table: &Table, x: usize, ys: &[usize], logscale: &str) -> std::io::Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "# generated by kmsbec {}; run with: gnuplot -p {}.gp", self.command, table.name);
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set key autotitle columnhead");
        if !logscale.is_empty() {
            let _ = writeln!(s, "set logscale {logscale}");
        }
        let _ = writeln!(s, "set xlabel '{}'", table.columns[x]);
        let plots: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let src = if i == 0 { format!("'{}.csv'", table.name) } else { "''".to_string() };
                format!("{src} using {}:{} with linespoints", x + 1, y + 1)
            })
            .collect();
        let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
        self.record(&format!("{}.gp", table.name), s.as_bytes(), None)
    }

    fn manifest(&self, status: &str) -> serde_json::Value {
        serde_json::json!({
            "tool": "kmsbec",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "status": status,
            "config_sha256": self.config_sha256,
            "seed": self.seed,
            "threads": self.threads,
            "outputs": self.outputs,
            "timings": self.timings,
            "total_seconds": self.started.elapsed().as_secs_f64(),
        })
    }

    pub fn finish(&mut self) -> std::io::Result<()> {
        let m = self.manifest("complete");
        write_atomic(&self.dir.join("manifest.json"), serde_json::to_string_pretty(&m).unwrap().as_bytes())
    }

    /// Failure record; outputs already written are listed as partial.
    pub fn fail(&mut self, code: i32, kind: &str, message: &str) -> std::io::Result<()> {
        let err = serde_json::json!({
            "command": self.command,
            "exit_code": code,
            "kind": kind,
            "message": message,
            "partial_outputs": self.outputs.iter().map(|o| &o.file).collect::<Vec<_>>(),
        });
        write_atomic(&self.dir.join("error.json"), serde_json::to_string_pretty(&err).unwrap().as_bytes())?;
        let m = self.manifest("failed");
        write_atomic(&self.dir.join("manifest.json"), serde_json::to_string_pretty(&m).unwrap().as_bytes())
    }
}

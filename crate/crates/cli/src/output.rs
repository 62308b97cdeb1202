//! CSV and JSON writers. CSV bytes are fully determined by the data (floats
//! use the shortest round-trip formatting), so identical runs produce
//! identical files; the manifest is the one place wall-clock time appears.

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

use avqds::state::DensityMatrix;

use crate::config::RunConfig;
use crate::{AppError, AppResult};

pub const TIMESERIES_COLUMNS: &[&str] =
    &["t", "energy", "stderr", "gamma", "n_params", "cnot_estimate"];

pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0"
        "0".to_string()
    } else {
        format!("{x}")
    }
}

pub struct CsvWriter {
    out: std::io::BufWriter<std::fs::File>,
}

impl CsvWriter {
    pub fn create(path: &Path, columns: &[&str]) -> AppResult<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{}", columns.join(","))?;
        Ok(CsvWriter { out })
    }

    pub fn row(&mut self, fields: &[String]) -> AppResult<()> {
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> AppResult<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// A parsed CSV with a header row, used by `compare` and `fit`.
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_csv(path: &Path) -> AppResult<CsvTable> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| AppError::Validation(format!("{}: empty csv", path.display())))?;
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            AppError::Validation(format!("{}:{}: bad number: {e}", path.display(), ln + 2))
        })?;
        if row.len() != columns.len() {
            return Err(AppError::Validation(format!(
                "{}:{}: expected {} fields, got {}",
                path.display(),
                ln + 2,
                columns.len(),
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(CsvTable { columns, rows })
}

impl CsvTable {
    pub fn column(&self, name: &str) -> AppResult<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| AppError::Validation(format!("csv has no column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub csv_columns: Vec<String>,
    pub config: &'a RunConfig,
    pub config_sha256: String,
    pub package_version: &'static str,
    pub master_seed: u64,
    pub n_trajectories: usize,
    pub n_failures: usize,
    pub failed_indices: Vec<usize>,
    pub complete: bool,
    pub wall_time_s: f64,
}

pub fn config_sha256(cfg: &RunConfig) -> String {
    let canon = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(canon.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> AppResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| AppError::Runtime(format!("manifest serialize: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| AppError::Runtime(format!("json serialize: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Density-matrix dump: row-major [re, im] pairs.
#[derive(Debug, Serialize, serde::Deserialize)]
pub struct DensityDump {
    pub n_qubits: usize,
    pub trace_deviation: f64,
    pub entries: Vec<[f64; 2]>,
}

impl DensityDump {
    pub fn from_matrix(rho: &DensityMatrix, trace_deviation: f64) -> Self {
        let dim = rho.dim();
        let mut entries = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                let v = rho.matrix()[(r, c)];
                entries.push([v.re, v.im]);
            }
        }
        DensityDump { n_qubits: rho.n_qubits(), trace_deviation, entries }
    }

    pub fn to_matrix(&self) -> AppResult<DensityMatrix> {
        let dim = 1usize << self.n_qubits;
        if self.entries.len() != dim * dim {
            return Err(AppError::Validation("density dump has wrong entry count".into()));
        }
        let mat = nalgebra::DMatrix::from_fn(dim, dim, |r, c| {
            let [re, im] = self.entries[r * dim + c];
            Complex64::new(re, im)
        });
        DensityMatrix::new(self.n_qubits, mat).map_err(|e| AppError::Runtime(e.to_string()))
    }
}

pub fn read_density_dump(path: &Path) -> AppResult<DensityDump> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| AppError::Validation(format!("{}: {e}", path.display())))
}

pub fn out_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

//! Flat-file persistence: CSV observables with one-line headers and a JSON
//! run manifest. Observable CSVs are byte-deterministic for a fixed spec
//! and master seed; the manifest carries the (non-deterministic) wall
//! clock and is excluded from byte comparisons.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kmc::TrajectoryRecord;
use crate::observables::{GridField, SpaceTimeField};

/// Output directory with a running file inventory.
pub struct OutputWriter {
    base: PathBuf,
    pub files: Vec<String>,
}

impl OutputWriter {
    pub fn create(base: &Path) -> Result<Self> {
        fs::create_dir_all(base)?;
        Ok(Self {
            base: base.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn base(&self) -> &Path {
        &self.base
    }

    fn begin(&mut self, name: &str) -> Result<fs::File> {
        self.files.push(name.to_string());
        Ok(fs::File::create(self.base.join(name))?)
    }

    pub fn write_field(&mut self, name: &str, field: &GridField) -> Result<()> {
        let mut f = self.begin(name)?;
        writeln!(f, "x_center,value")?;
        for (i, &v) in field.cells().iter().enumerate() {
            writeln!(f, "{},{}", field.cell_center(i), v)?;
        }
        Ok(())
    }

    pub fn write_space_time(&mut self, name: &str, st: &SpaceTimeField) -> Result<()> {
        let mut f = self.begin(name)?;
        writeln!(f, "t,x_center,value")?;
        for (k, field) in st.fields.iter().enumerate() {
            let t = st.times[k];
            for (i, &v) in field.cells().iter().enumerate() {
                writeln!(f, "{},{},{}", t, field.cell_center(i), v)?;
            }
        }
        Ok(())
    }

    pub fn write_distances(&mut self, name: &str, rows: &[(f64, f64, f64)]) -> Result<()> {
        let mut f = self.begin(name)?;
        writeln!(f, "t,l1,l2")?;
        for &(t, l1, l2) in rows {
            writeln!(f, "{t},{l1},{l2}")?;
        }
        if !rows.is_empty() {
            let n = rows.len() as f64;
            let a1: f64 = rows.iter().map(|r| r.1).sum::<f64>() / n;
            let a2: f64 = rows.iter().map(|r| r.2).sum::<f64>() / n;
            writeln!(f, "time-average,{a1},{a2}")?;
        }
        Ok(())
    }

    /// One file per replica: `t,site,value,kind` rows for occupations and
    /// (when recorded) net bond counts.
    pub fn write_trajectory(&mut self, name: &str, record: &TrajectoryRecord) -> Result<()> {
        let mut f = self.begin(name)?;
        writeln!(f, "t,site,value,kind")?;
        for (k, &t) in record.times.iter().enumerate() {
            if let Some(snap) = record.snapshots.get(k) {
                for i in 0..snap.size() {
                    writeln!(f, "{},{},{},occupation", t, i + 1, snap.get(i))?;
                }
            }
            if let Some(cnt) = record.counting.get(k) {
                for i in 0..cnt.h_plus.len() {
                    writeln!(f, "{},{},{},net_count", t, i, cnt.net(i))?;
                }
            }
        }
        Ok(())
    }

    pub fn write_rows(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut f = self.begin(name)?;
        writeln!(f, "{header}")?;
        for row in rows {
            writeln!(f, "{row}")?;
        }
        Ok(())
    }

    pub fn write_manifest(&mut self, manifest: &RunManifest) -> Result<()> {
        let text = serde_json::to_string_pretty(manifest)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        let mut f = fs::File::create(self.base.join("manifest.json"))?;
        writeln!(f, "{text}")?;
        Ok(())
    }
}

/// Diagnostic check row for the report CSV.
#[derive(Debug, Clone)]
pub struct DiagnosticRow {
    pub check: String,
    pub parameters: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl DiagnosticRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.check, self.parameters, self.value, self.threshold, self.pass
        )
    }
}

pub const DIAGNOSTIC_HEADER: &str = "check,parameters,value,threshold,pass";

/// Per-task seed ledger inside the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct TaskManifest {
    pub label: String,
    pub task_seed: u64,
    pub replica_seeds: Vec<u64>,
}

/// Reproducibility record for one experiment run. Carries the full
/// parameter block, its hash, and every derived seed; re-running the
/// recorded spec with the recorded master seed reproduces the observable
/// CSVs byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub mode: String,
    pub spec_hash: String,
    pub spec_toml: String,
    pub master_seed: u64,
    pub created_unix_ms: u128,
    pub complete: bool,
    pub incomplete_reason: Option<String>,
    pub tasks: Vec<TaskManifest>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(mode: &str, spec_toml: &str, master_seed: u64) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: mode.to_string(),
            spec_hash: sha256_hex(spec_toml.as_bytes()),
            spec_toml: spec_toml.to_string(),
            master_seed,
            created_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            complete: true,
            incomplete_reason: None,
            tasks: Vec::new(),
            files: Vec::new(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

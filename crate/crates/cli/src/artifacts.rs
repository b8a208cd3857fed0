//! Output layout: one directory per (preset, N) holding field files and a
//! `manifest.json` with the SHA-256 of every artifact, grouped by stage.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use fracobs::probes::ProbeReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Stage};
use crate::error::{CliError, Result};

pub const LOCK_FILE: &str = ".fracobs.lock";

/// Exclusive claim on an output directory, released on drop.
pub struct Lock {
    path: PathBuf,
}

impl Lock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Locked(dir.display().to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn grid_dir(out: &Path, cfg: &ExperimentConfig, nodes: usize) -> PathBuf {
    out.join(format!("{}-N{nodes}", cfg.name))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    pub files: BTreeMap<String, String>,
}

fn stage_key(stage: Stage) -> &'static str {
    match stage {
        Stage::Solve => "solve",
        Stage::Extend => "extend",
    }
}

impl Manifest {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = Self::path(dir);
        if !path.exists() {
            return Ok(Self::default());
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&Self::path(dir), serde_json::to_string_pretty(self)?.as_bytes())
    }

    /// Records `files` (relative to `dir`) as the output of `stage`.
    pub fn record(dir: &Path, stage: Stage, fingerprint: String, files: &[PathBuf]) -> Result<()> {
        let mut m = Self::load(dir)?;
        let mut entries = BTreeMap::new();
        for f in files {
            let name = f
                .strip_prefix(dir)
                .unwrap_or(f)
                .to_string_lossy()
                .into_owned();
            entries.insert(name, sha256_file(f)?);
        }
        m.stages.insert(stage_key(stage).into(), StageRecord { fingerprint, files: entries });
        if stage == Stage::Solve {
            m.stages.remove(stage_key(Stage::Extend));
        }
        m.save(dir)
    }

    pub fn forget(dir: &Path, stage: Stage) -> Result<()> {
        let mut m = Self::load(dir)?;
        if m.stages.remove(stage_key(stage)).is_some() {
            m.save(dir)?;
        }
        Ok(())
    }

    /// True when `stage` was recorded with this fingerprint and every listed
    /// file still has its recorded checksum.
    pub fn complete(dir: &Path, stage: Stage, fingerprint: &str) -> Result<bool> {
        let m = Self::load(dir)?;
        let Some(rec) = m.stages.get(stage_key(stage)) else {
            return Ok(false);
        };
        if rec.fingerprint != fingerprint {
            return Ok(false);
        }
        for (name, sum) in &rec.files {
            let path = dir.join(name);
            if !path.exists() || sha256_file(&path)? != *sum {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// One line of a verification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    #[serde(flatten)]
    pub report: ProbeReport,
    /// Whether a failure of this row fails the run.
    pub gating: bool,
}

impl Row {
    pub fn gating(report: ProbeReport) -> Self {
        Self { report, gating: true }
    }

    pub fn info(report: ProbeReport) -> Self {
        Self { report, gating: false }
    }

    pub fn failed(&self) -> bool {
        self.gating && !self.report.pass
    }
}

fn num(v: f64) -> String {
    format!("{v:.10e}")
}

pub fn rows_csv(rows: &[Row]) -> String {
    let mut out = String::from("probe,coarse,fine,value_coarse,value_fine,ratio,threshold,pass,vacuous,gating\n");
    for r in rows {
        let p = &r.report;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            p.probe,
            p.grids[0],
            p.grids[1],
            num(p.values[0]),
            num(p.values[1]),
            p.ratio.map(num).unwrap_or_default(),
            num(p.threshold),
            p.pass,
            p.vacuous,
            r.gating
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = Lock::acquire(dir.path()).unwrap();
        assert!(matches!(Lock::acquire(dir.path()), Err(CliError::Locked(_))));
        drop(a);
        assert!(Lock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.bin");
        fs::write(&f, b"abc").unwrap();
        Manifest::record(dir.path(), Stage::Solve, "x".into(), std::slice::from_ref(&f)).unwrap();
        assert!(Manifest::complete(dir.path(), Stage::Solve, "x").unwrap());
        assert!(!Manifest::complete(dir.path(), Stage::Solve, "y").unwrap());
        assert!(!Manifest::complete(dir.path(), Stage::Extend, "x").unwrap());
        fs::write(&f, b"abd").unwrap();
        assert!(!Manifest::complete(dir.path(), Stage::Solve, "x").unwrap());
    }

    #[test]
    fn csv_leaves_missing_ratio_empty() {
        let rows = [Row::gating(ProbeReport::single("p", 64, 0.5, 1.0, false))];
        let csv = rows_csv(&rows);
        assert!(csv.lines().nth(1).unwrap().starts_with("p,64,64,5.0000000000e-1,5.0000000000e-1,,1.0000000000e0,true,false,true"));
    }
}

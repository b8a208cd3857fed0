//! Binary field files: little-endian `f64` values in row-major order next to a
//! JSON sidecar describing the lattice.
//!
//! A field stored under the stem `out/u` occupies `out/u.bin` and `out/u.json`.
//! Half-space fields store levels as the slow index: value `(node, j)` is at
//! offset `j * N^n + node`.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Thin,
    Halfspace,
    KernelColumn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub n: usize,
    #[serde(rename = "N")]
    pub nodes: usize,
    #[serde(rename = "L")]
    pub len: f64,
    pub kind: FieldKind,
    #[serde(default)]
    pub ylevels: Vec<f64>,
}

impl Sidecar {
    pub fn thin(grid: &GridSpec, kind: FieldKind) -> Self {
        Self {
            n: grid.n,
            nodes: grid.nodes,
            len: grid.len,
            kind,
            ylevels: Vec::new(),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.len, self.nodes)
    }

    pub fn expected_len(&self) -> usize {
        let base = self.nodes.pow(self.n as u32);
        match self.kind {
            FieldKind::Halfspace => base * self.ylevels.len(),
            _ => base,
        }
    }
}

pub fn bin_path(stem: &Path) -> PathBuf {
    stem.with_extension("bin")
}

pub fn json_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

pub fn encode(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "binary length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Writes both files and returns their paths (binary first).
pub fn write_values(stem: &Path, meta: &Sidecar, values: &[f64]) -> Result<[PathBuf; 2]> {
    if values.len() != meta.expected_len() {
        return Err(Error::Format(format!(
            "{} values for a sidecar expecting {}",
            values.len(),
            meta.expected_len()
        )));
    }
    let bin = bin_path(stem);
    let json = json_path(stem);
    fs::write(&bin, encode(values))?;
    fs::write(&json, serde_json::to_string_pretty(meta)?)?;
    Ok([bin, json])
}

pub fn read_values(stem: &Path) -> Result<(Sidecar, Vec<f64>)> {
    let meta: Sidecar = serde_json::from_str(&fs::read_to_string(json_path(stem))?)?;
    meta.grid()?;
    let values = decode(&fs::read(bin_path(stem))?)?;
    if values.len() != meta.expected_len() {
        return Err(Error::Format(format!(
            "{} values on disk, sidecar expects {}",
            values.len(),
            meta.expected_len()
        )));
    }
    Ok((meta, values))
}

pub fn write_field(stem: &Path, field: &Field, kind: FieldKind) -> Result<[PathBuf; 2]> {
    write_values(stem, &Sidecar::thin(&field.grid, kind), &field.values)
}

pub fn read_field(stem: &Path) -> Result<Field> {
    let (meta, values) = read_values(stem)?;
    if meta.kind == FieldKind::Halfspace {
        return Err(Error::Format("expected a thin field".into()));
    }
    Field::new(meta.grid()?, values)
}

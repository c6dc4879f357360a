//! JSON file formats: matrices, states, maps and certificates.
//!
//! Matrices are `{"rows", "cols", "data"}` with row-major `data` entries that
//! are either `[re, im]` pairs or bare real numbers. Numbers are written in
//! the shortest decimal form that parses back to the same `f64`.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use anyhow::{anyhow, bail, Context, Result};
use opscale_core::numkernel::{from_row_major, ComplexMatrix, HermitianMatrix, Tolerances};
use opscale_core::Complex64;
use opscale_core::posmap::{self, BlockCertificate, ChoiMap};
use opscale_core::{BipartiteState, NonnegPattern};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Entry {
    Complex([f64; 2]),
    Real(f64),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Entry>,
}

impl MatrixFile {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                data.push(Entry::Complex([z.re, z.im]));
            }
        }
        MatrixFile { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let entries: Vec<Complex64> = self
            .data
            .iter()
            .map(|e| match *e {
                Entry::Complex([re, im]) => Complex64::new(re, im),
                Entry::Real(re) => Complex64::new(re, 0.0),
            })
            .collect();
        Ok(from_row_major(self.rows, self.cols, &entries)?)
    }

    /// Nonnegative real pattern; rejects nonzero imaginary parts.
    pub fn to_pattern(&self) -> Result<NonnegPattern> {
        let mut entries = Vec::with_capacity(self.data.len());
        for (pos, e) in self.data.iter().enumerate() {
            match *e {
                Entry::Real(x) => entries.push(x),
                Entry::Complex([x, 0.0]) => entries.push(x),
                Entry::Complex(_) => bail!("entry {pos} has a nonzero imaginary part"),
            }
        }
        Ok(NonnegPattern::new(self.rows, self.cols, entries)?)
    }
}

pub fn matrix_value(m: &ComplexMatrix) -> Value {
    serde_json::to_value(MatrixFile::from_matrix(m)).expect("finite matrices serialize")
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct StateFile {
    pub k: usize,
    pub m: usize,
    pub matrix: MatrixFile,
}

impl StateFile {
    pub fn to_state(&self, tol: &Tolerances) -> Result<BipartiteState> {
        Ok(BipartiteState::new(self.k, self.m, self.matrix.to_matrix()?, tol)?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TaggedMap {
    Choi { k: usize, m: usize, choi: MatrixFile },
    State { k: usize, m: usize, matrix: MatrixFile },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MapDocument {
    Tagged(TaggedMap),
    Plain { k: usize, m: usize, choi: MatrixFile },
}

#[derive(Debug, Clone, Serialize)]
pub struct MapFile {
    pub k: usize,
    pub m: usize,
    pub choi: MatrixFile,
}

impl MapFile {
    pub fn from_map(t: &ChoiMap) -> Self {
        MapFile { k: t.k(), m: t.m(), choi: MatrixFile::from_matrix(t.choi()) }
    }
}

pub fn parse_map(text: &str, tol: &Tolerances) -> Result<ChoiMap> {
    let doc: MapDocument = serde_json::from_str(text).context("malformed map file")?;
    match doc {
        MapDocument::Tagged(TaggedMap::Choi { k, m, choi }) | MapDocument::Plain { k, m, choi } => {
            Ok(ChoiMap::new(k, m, choi.to_matrix()?)?)
        }
        MapDocument::Tagged(TaggedMap::State { k, m, matrix }) => {
            let a = HermitianMatrix::new_checked(matrix.to_matrix()?, 1e-8)?;
            Ok(posmap::from_state(&a, k, m, tol)?.0)
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct CertificateFile {
    #[serde(rename = "V")]
    pub v: Vec<MatrixFile>,
    #[serde(rename = "W")]
    pub w: Vec<MatrixFile>,
}

impl CertificateFile {
    pub fn to_certificate(&self) -> Result<BlockCertificate> {
        let v = self.v.iter().map(MatrixFile::to_matrix).collect::<Result<Vec<_>>>()?;
        let w = self.w.iter().map(MatrixFile::to_matrix).collect::<Result<Vec<_>>>()?;
        Ok(BlockCertificate::new(v, w)?)
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).with_context(|| format!("malformed JSON in {}", path.display()))
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes pretty JSON through a temporary file in the same directory and a
/// rename, so readers never see a partial file.
pub fn write_json_atomic(path: &Path, value: &impl Serialize) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| anyhow!("{} is not a file path", path.display()))?;
    let tmp = dir.join(format!(
        ".{}.{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&tmp, text).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

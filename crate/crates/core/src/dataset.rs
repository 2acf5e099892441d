//! Feature datasets and the `CFOD` binary format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "CFOD" | n: u64 | d: u64 | c: u64 | flags: u8
//! features: f32 * n * d   (row-major)
//! labels:   i32 * n
//! logits:   f32 * n * c   (only when flags bit 0 is set)
//! ```
//!
//! Flag bit 1 marks a sidecar refs file (`<path>.refs`, one UTF-8 line per
//! row) written next to the binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"CFOD";
pub const FLAG_LOGITS: u8 = 0b01;
pub const FLAG_REFS: u8 = 0b10;
pub(crate) const DATASET_HEADER_LEN: u64 = 4 + 8 * 3 + 1;

/// An `n x d` feature matrix with labels, optional logits and optional input
/// references. Values are stored as `f32`, exactly as on disk; arithmetic
/// widens them to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    rows: usize,
    dim: usize,
    classes: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
    logits: Option<Vec<f32>>,
    input_refs: Option<Vec<String>>,
}

impl FeatureDataset {
    pub fn new(
        features: Vec<f32>,
        dim: usize,
        labels: Vec<usize>,
        classes: usize,
        logits: Option<Vec<f32>>,
        input_refs: Option<Vec<String>>,
    ) -> Result<Self> {
        let rows = labels.len();
        if rows == 0 {
            return Err(Error::Invalid("dataset must have at least one row".into()));
        }
        if dim == 0 {
            return Err(Error::Invalid("feature dimension must be at least 1".into()));
        }
        if classes < 2 {
            return Err(Error::Invalid(format!(
                "class count must be at least 2, got {classes}"
            )));
        }
        if features.len() != rows * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values for {rows} rows of dimension {dim}",
                features.len()
            )));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange {
                row,
                label: label as i64,
                classes,
            });
        }
        if let Some(l) = &logits {
            if l.len() != rows * classes {
                return Err(Error::DimensionMismatch(format!(
                    "{} logit values for {rows} rows of {classes} classes",
                    l.len()
                )));
            }
        }
        if let Some(r) = &input_refs {
            if r.len() != rows {
                return Err(Error::DimensionMismatch(format!(
                    "{} input refs for {rows} rows",
                    r.len()
                )));
            }
        }
        Ok(Self {
            rows,
            dim,
            classes,
            features,
            labels,
            logits,
            input_refs,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn has_logits(&self) -> bool {
        self.logits.is_some()
    }

    pub fn logits_row(&self, i: usize) -> Option<&[f32]> {
        self.logits
            .as_ref()
            .map(|l| &l[i * self.classes..(i + 1) * self.classes])
    }

    pub fn input_refs(&self) -> Option<&[String]> {
        self.input_refs.as_deref()
    }

    /// Reference for row `i`, falling back to `row:<i>` when no refs exist.
    pub fn ref_or_index(&self, i: usize) -> String {
        match &self.input_refs {
            Some(r) => r[i].clone(),
            None => format!("row:{i}"),
        }
    }

    pub fn with_input_refs(mut self, refs: Vec<String>) -> Result<Self> {
        if refs.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "{} input refs for {} rows",
                refs.len(),
                self.rows
            )));
        }
        self.input_refs = Some(refs);
        Ok(self)
    }

    pub fn without_logits(mut self) -> Self {
        self.logits = None;
        self
    }

    /// Copy with every row scaled to unit l2 norm. All-zero rows stay zero.
    pub fn unit_normalized(&self) -> Self {
        let mut features = self.features.clone();
        for row in features.chunks_exact_mut(self.dim) {
            let norm = row
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v = ((*v as f64) / norm) as f32;
                }
            }
        }
        Self {
            features,
            ..self.clone()
        }
    }

    fn flags(&self) -> u8 {
        let mut flags = 0;
        if self.logits.is_some() {
            flags |= FLAG_LOGITS;
        }
        if self.input_refs.is_some() {
            flags |= FLAG_REFS;
        }
        flags
    }
}

/// Sidecar path holding the input refs of a dataset binary.
pub fn refs_sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".refs");
    PathBuf::from(s)
}

pub(crate) fn expected_dataset_len(rows: u64, dim: u64, classes: u64, flags: u8) -> Option<u64> {
    let features = rows.checked_mul(dim)?.checked_mul(4)?;
    let labels = rows.checked_mul(4)?;
    let logits = if flags & FLAG_LOGITS != 0 {
        rows.checked_mul(classes)?.checked_mul(4)?
    } else {
        0
    };
    DATASET_HEADER_LEN
        .checked_add(features)?
        .checked_add(labels)?
        .checked_add(logits)
}

pub(crate) fn check_magic(bytes: &[u8], expected: [u8; 4]) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: 4,
            found: bytes.len() as u64,
        });
    }
    let found = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

pub(crate) fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

pub(crate) fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub(crate) fn check_exact_len(expected: u64, found: u64) -> Result<()> {
    if found < expected {
        Err(Error::Truncated { expected, found })
    } else if found > expected {
        Err(Error::TrailingBytes { expected, found })
    } else {
        Ok(())
    }
}

/// Parses a `CFOD` image. Refs are not resolved here; see [`load_dataset`].
pub fn decode_dataset(bytes: &[u8]) -> Result<(FeatureDataset, u8)> {
    check_magic(bytes, DATASET_MAGIC)?;
    let found = bytes.len() as u64;
    if found < DATASET_HEADER_LEN {
        return Err(Error::Truncated {
            expected: DATASET_HEADER_LEN,
            found,
        });
    }
    let (n, d, c) = (read_u64(bytes, 4), read_u64(bytes, 12), read_u64(bytes, 20));
    let flags = bytes[28];
    if flags & !(FLAG_LOGITS | FLAG_REFS) != 0 {
        return Err(Error::Invalid(format!("unknown flag bits {flags:#04x}")));
    }
    if n == 0 || d == 0 || c < 2 {
        return Err(Error::DimensionMismatch(format!(
            "header declares n={n}, d={d}, c={c}; need n>=1, d>=1, c>=2"
        )));
    }
    let expected = expected_dataset_len(n, d, c, flags)
        .ok_or_else(|| Error::DimensionMismatch(format!("header n={n}, d={d}, c={c} overflows")))?;
    check_exact_len(expected, found)?;

    let (n, d, c) = (n as usize, d as usize, c as usize);
    let mut at = DATASET_HEADER_LEN as usize;
    let features = read_f32s(&bytes[at..at + n * d * 4]);
    at += n * d * 4;
    let mut labels = Vec::with_capacity(n);
    for (row, chunk) in bytes[at..at + n * 4].chunks_exact(4).enumerate() {
        let raw = i32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if raw < 0 || raw as u64 >= c as u64 {
            return Err(Error::LabelOutOfRange {
                row,
                label: raw as i64,
                classes: c,
            });
        }
        labels.push(raw as usize);
    }
    at += n * 4;
    let logits = (flags & FLAG_LOGITS != 0).then(|| read_f32s(&bytes[at..at + n * c * 4]));
    let ds = FeatureDataset::new(features, d, labels, c, logits, None)?;
    Ok((ds, flags))
}

/// Serialises a dataset into a `CFOD` image (refs excluded).
pub fn encode_dataset(ds: &FeatureDataset) -> Result<Vec<u8>> {
    if ds.classes > i32::MAX as usize {
        return Err(Error::Invalid("class count does not fit in i32 labels".into()));
    }
    let flags = ds.flags();
    let len = expected_dataset_len(ds.rows as u64, ds.dim as u64, ds.classes as u64, flags)
        .expect("in-memory dataset size fits u64");
    let mut out = Vec::with_capacity(len as usize);
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&(ds.rows as u64).to_le_bytes());
    out.extend_from_slice(&(ds.dim as u64).to_le_bytes());
    out.extend_from_slice(&(ds.classes as u64).to_le_bytes());
    out.push(flags);
    for v in &ds.features {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in &ds.labels {
        out.extend_from_slice(&(l as i32).to_le_bytes());
    }
    if let Some(logits) = &ds.logits {
        for v in logits {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (ds, flags) = decode_dataset(&bytes)?;
    if flags & FLAG_REFS != 0 {
        let refs = read_refs(&refs_sidecar_path(path))?;
        return ds.with_input_refs(refs);
    }
    Ok(ds)
}

pub fn save_dataset(ds: &FeatureDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_dataset(ds)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    if let Some(refs) = &ds.input_refs {
        write_refs(&refs_sidecar_path(path), refs)?;
    }
    Ok(())
}

/// Reads a refs file: one UTF-8 line per row.
pub fn read_refs(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

pub fn write_refs(path: &Path, refs: &[String]) -> Result<()> {
    if let Some(bad) = refs.iter().find(|r| r.contains('\n') || r.contains('\r')) {
        return Err(Error::Invalid(format!("input ref {bad:?} contains a line break")));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    for r in refs {
        buf.push_str(r);
        buf.push('\n');
    }
    file.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

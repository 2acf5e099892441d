//! Linear classification head and the `CFHD` binary format.
//!
//! ```text
//! "CFHD" | c: u64 | d: u64 | weights: f32 * c * d (row-major) | bias: f32 * c
//! ```

use std::fs;
use std::path::Path;

use crate::dataset::{check_exact_len, check_magic, read_f32s, read_u64};
use crate::error::{Error, Result};

pub const HEAD_MAGIC: [u8; 4] = *b"CFHD";
const HEAD_HEADER_LEN: u64 = 4 + 8 * 2;

/// Final affine layer mapping an embedding to class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    classes: usize,
    dim: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl LinearHead {
    pub fn new(weights: Vec<f32>, bias: Vec<f32>, dim: usize) -> Result<Self> {
        let classes = bias.len();
        if classes < 2 {
            return Err(Error::Invalid(format!(
                "head needs at least 2 classes, got {classes}"
            )));
        }
        if dim == 0 {
            return Err(Error::Invalid("head dimension must be at least 1".into()));
        }
        if weights.len() != classes * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {classes} classes of dimension {dim}",
                weights.len()
            )));
        }
        Ok(Self {
            classes,
            dim,
            weights,
            bias,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight_row(&self, class: usize) -> &[f32] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {len} for a head of dimension {}",
                self.dim
            )));
        }
        Ok(())
    }

    pub(crate) fn logit_unchecked<T: crate::distance::Element>(&self, class: usize, z: &[T]) -> f64 {
        let mut acc = self.bias[class] as f64;
        for (&w, &v) in self.weight_row(class).iter().zip(z) {
            acc += w as f64 * v.widen();
        }
        acc
    }

    pub(crate) fn logits_unchecked<T: crate::distance::Element>(&self, z: &[T]) -> Vec<f64> {
        (0..self.classes).map(|c| self.logit_unchecked(c, z)).collect()
    }

    pub fn logits<T: crate::distance::Element>(&self, z: &[T]) -> Result<Vec<f64>> {
        self.check_dim(z.len())?;
        Ok(self.logits_unchecked(z))
    }

    /// Argmax of the logits; ties go to the lowest class index.
    pub fn predict<T: crate::distance::Element>(&self, z: &[T]) -> Result<usize> {
        self.check_dim(z.len())?;
        Ok(self.predict_unchecked(z))
    }

    pub(crate) fn predict_unchecked<T: crate::distance::Element>(&self, z: &[T]) -> usize {
        argmax(&self.logits_unchecked(z))
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn decode_head(bytes: &[u8]) -> Result<LinearHead> {
    check_magic(bytes, HEAD_MAGIC)?;
    let found = bytes.len() as u64;
    if found < HEAD_HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEAD_HEADER_LEN,
            found,
        });
    }
    let (c, d) = (read_u64(bytes, 4), read_u64(bytes, 12));
    if c < 2 || d == 0 {
        return Err(Error::DimensionMismatch(format!(
            "header declares c={c}, d={d}; need c>=2, d>=1"
        )));
    }
    let expected = c
        .checked_mul(d)
        .and_then(|cd| cd.checked_add(c))
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEAD_HEADER_LEN))
        .ok_or_else(|| Error::DimensionMismatch(format!("header c={c}, d={d} overflows")))?;
    check_exact_len(expected, found)?;
    let (c, d) = (c as usize, d as usize);
    let at = HEAD_HEADER_LEN as usize;
    let weights = read_f32s(&bytes[at..at + c * d * 4]);
    let bias = read_f32s(&bytes[at + c * d * 4..]);
    LinearHead::new(weights, bias, d)
}

pub fn encode_head(head: &LinearHead) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEAD_HEADER_LEN as usize + 4 * (head.weights.len() + head.classes));
    out.extend_from_slice(&HEAD_MAGIC);
    out.extend_from_slice(&(head.classes as u64).to_le_bytes());
    out.extend_from_slice(&(head.dim as u64).to_le_bytes());
    for v in head.weights.iter().chain(&head.bias) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn load_head(path: impl AsRef<Path>) -> Result<LinearHead> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_head(&bytes)
}

pub fn save_head(head: &LinearHead, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_head(head)).map_err(|e| Error::io(path, e))
}

/// `predict(head, z)` as a free function.
pub fn predict<T: crate::distance::Element>(head: &LinearHead, z: &[T]) -> Result<usize> {
    head.predict(z)
}

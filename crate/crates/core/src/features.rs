//! `HFV1` feature files.
//!
//! Layout: magic `HFV1`, little-endian `u32` sample count, `u32` feature
//! dimension, `count × dim` little-endian `f32` values row-major, then `count`
//! `u8` labels.

use std::io::{Read, Write};
use std::path::Path;

use crate::backbones::{BackboneId, FeatureVector};
use crate::datasets::BinaryLabel;
use crate::error::{Error, Result};

pub const HFV_MAGIC: &[u8; 4] = b"HFV1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub values: Vec<f32>,
    pub labels: Vec<BinaryLabel>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, values: Vec<f32>, labels: Vec<BinaryLabel>) -> Result<Self> {
        if values.len() != dim * labels.len() {
            return Err(Error::Shape(format!(
                "{} values do not fill {} rows of width {dim}",
                values.len(),
                labels.len()
            )));
        }
        Ok(Self { dim, values, labels })
    }

    pub fn from_vectors(vectors: &[FeatureVector], labels: &[BinaryLabel]) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::Shape(format!("{} vectors but {} labels", vectors.len(), labels.len())));
        }
        let dim = vectors.first().map_or(0, |v| v.values.len());
        let mut values = Vec::with_capacity(dim * vectors.len());
        for v in vectors {
            if v.values.len() != dim {
                return Err(Error::Shape(format!(
                    "sample {} has {} features, expected {dim}",
                    v.sample_ref,
                    v.values.len()
                )));
            }
            values.extend_from_slice(&v.values);
        }
        Self::new(dim, values, labels.to_vec())
    }

    /// Rows as feature vectors with `sample_ref` = row index.
    pub fn to_vectors(&self, backbone: BackboneId) -> Vec<FeatureVector> {
        (0..self.len())
            .map(|i| FeatureVector {
                values: self.row(i).to_vec(),
                backbone,
                sample_ref: i,
            })
            .collect()
    }

    /// Side-by-side concatenation of matrices over the same samples.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("no feature matrices to concatenate".into()))?;
        if let Some(i) = parts.iter().position(|m| m.labels != first.labels) {
            return Err(Error::InvalidInput(format!(
                "feature matrix {i} has different samples or labels than matrix 0"
            )));
        }
        let dim = parts.iter().map(|m| m.dim).sum();
        let mut values = Vec::with_capacity(dim * first.len());
        for r in 0..first.len() {
            for m in parts {
                values.extend_from_slice(m.row(r));
            }
        }
        Self::new(dim, values, first.labels.clone())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.row(i).iter().map(|&v| f64::from(v)).collect())
            .collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(HFV_MAGIC)?;
        out.write_all(&(self.len() as u32).to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        let labels: Vec<u8> = self.labels.iter().map(|l| l.code()).collect();
        out.write_all(&labels)?;
        out.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + self.values.len() * 4 + self.len());
        self.write(&mut buf).expect("writing to memory");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |d: String| Error::format("HFV1 feature file", d);
        if bytes.len() < 12 || &bytes[..4] != HFV_MAGIC {
            return Err(bad("missing HFV1 magic".into()));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(12 + count))
            .ok_or_else(|| bad("header sizes overflow".into()))?;
        if bytes.len() != expected {
            return Err(bad(format!(
                "{count}x{dim} needs {expected} bytes, file has {}",
                bytes.len()
            )));
        }
        let body = &bytes[12..12 + count * dim * 4];
        let values: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let labels = bytes[12 + count * dim * 4..]
            .iter()
            .map(|&b| BinaryLabel::from_code(b))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| bad(e.to_string()))?;
        Self::new(dim, values, labels)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::format("HFV1 feature file", e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { what, detail } => Error::Format {
                what,
                detail: format!("{}: {detail}", path.display()),
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let m = FeatureMatrix::new(
            2,
            vec![1.0, -2.5, 0.0, 3.25],
            vec![BinaryLabel::Benign, BinaryLabel::Malignant],
        )
        .unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"HFV1");
        assert_eq!(&bytes[4..12], &[2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[bytes.len() - 2..], &[0, 1]);
        assert_eq!(FeatureMatrix::from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn truncated_and_bad_labels_rejected() {
        let m = FeatureMatrix::new(1, vec![1.0], vec![BinaryLabel::Malignant]).unwrap();
        let mut bytes = m.to_bytes();
        assert!(FeatureMatrix::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        *bytes.last_mut().unwrap() = 2;
        assert!(FeatureMatrix::from_bytes(&bytes).is_err());
        assert!(FeatureMatrix::from_bytes(b"HFV2\0\0\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn vectors_round_trip() {
        let m = FeatureMatrix::new(3, (0..6).map(|v| v as f32).collect(), vec![BinaryLabel::Benign; 2]).unwrap();
        let v = m.to_vectors(BackboneId::StubC);
        assert_eq!(v[1].values, vec![3.0, 4.0, 5.0]);
        assert_eq!(FeatureMatrix::from_vectors(&v, &m.labels).unwrap(), m);
    }

    #[test]
    fn concat_interleaves_rows() {
        let labels = vec![BinaryLabel::Benign, BinaryLabel::Malignant];
        let a = FeatureMatrix::new(1, vec![1.0, 2.0], labels.clone()).unwrap();
        let b = FeatureMatrix::new(2, vec![10.0, 11.0, 20.0, 21.0], labels.clone()).unwrap();
        let c = FeatureMatrix::concat(&[a.clone(), b]).unwrap();
        assert_eq!(c.dim, 3);
        assert_eq!(c.values, vec![1.0, 10.0, 11.0, 2.0, 20.0, 21.0]);
        let other = FeatureMatrix::new(1, vec![0.0, 0.0], vec![BinaryLabel::Benign; 2]).unwrap();
        assert!(FeatureMatrix::concat(&[a, other]).is_err());
    }
}

//! Embedding files, labels, manifests, and the subsampling protocols.

mod align;
mod format;
mod manifest;
mod subsample;

use std::fmt;

use nalgebra::DMatrix;

use crate::codec::Fnv64;
use crate::error::{Error, Result};

pub use align::{align_views, AlignOutcome, IdentifiedLabels, IdentifiedMatrix};
pub use format::{
    read_embedding_header, read_embeddings, read_ids, read_labels, write_embeddings, write_ids,
    write_labels, EmbeddingHeader, Precision, EMB1_HEADER_LEN, EMB1_MAGIC, LBL1_MAGIC,
};
pub use manifest::{LoadedSplit, Manifest, SplitEntry, ViewEntry, ViewFiles, MANIFEST_SCHEMA_VERSION};
pub use subsample::{balanced_subsample, imbalance_class_sizes, imbalance_subsample, realized_ratio};

/// Stable identifier of an input sample, shared by every view of that sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleId(pub u64);

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Identifier of the data a model was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fingerprint(pub u64);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// `d × N` matrix of representations, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    values: DMatrix<f64>,
}

impl EmbeddingMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "embedding matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let d = values.nrows();
            return Err(Error::NonFinite {
                context: format!("embedding sample {}, coordinate {}", pos / d, pos % d),
            });
        }
        Ok(Self { values })
    }

    /// Builds a matrix from sample-major data (`count` runs of `dim` values).
    pub fn from_sample_major(dim: usize, count: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * count {
            return Err(Error::DimMismatch {
                context: "sample-major buffer".into(),
                expected: dim * count,
                actual: data.len(),
            });
        }
        Self::new(DMatrix::from_column_slice(dim, count, data))
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn count(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Columns at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select_columns(indices),
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut h = Fnv64::default();
        h.update(&(self.dim() as u64).to_le_bytes());
        h.update(&(self.count() as u64).to_le_bytes());
        for v in self.values.iter() {
            h.update(&v.to_bits().to_le_bytes());
        }
        Fingerprint(h.finish())
    }

    pub(crate) fn check_dim(&self, expected: usize, context: &str) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimMismatch {
                context: context.into(),
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<u32>,
    num_classes: u32,
}

impl LabelVector {
    pub fn new(labels: Vec<u32>, num_classes: u32) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, l)| **l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {l} at position {i} is outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    /// Infers `C = max label + 1` (at least 2).
    pub fn infer(labels: Vec<u32>) -> Result<Self> {
        let c = labels.iter().max().map_or(2, |m| (m + 1).max(2));
        Self::new(labels, c)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes as usize];
        for l in &self.labels {
            h[*l as usize] += 1;
        }
        h
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|i| self.labels[*i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Two sample-aligned views of the same inputs plus their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    view_x: EmbeddingMatrix,
    view_y: EmbeddingMatrix,
    labels: LabelVector,
    sample_ids: Vec<SampleId>,
}

impl PairedDataset {
    pub fn new(
        view_x: EmbeddingMatrix,
        view_y: EmbeddingMatrix,
        labels: LabelVector,
        sample_ids: Vec<SampleId>,
    ) -> Result<Self> {
        let n = view_x.count();
        if view_y.count() != n {
            return Err(Error::CountMismatch {
                x: n,
                y: view_y.count(),
            });
        }
        for (what, len) in [("labels", labels.len()), ("sample ids", sample_ids.len())] {
            if len != n {
                return Err(Error::DimMismatch {
                    context: format!("paired dataset {what}"),
                    expected: n,
                    actual: len,
                });
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(n);
        for id in &sample_ids {
            if !seen.insert(*id) {
                return Err(Error::DuplicateId(id.0));
            }
        }
        Ok(Self {
            view_x,
            view_y,
            labels,
            sample_ids,
        })
    }

    pub fn view_x(&self) -> &EmbeddingMatrix {
        &self.view_x
    }

    pub fn view_y(&self) -> &EmbeddingMatrix {
        &self.view_y
    }

    pub fn labels(&self) -> &LabelVector {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[SampleId] {
        &self.sample_ids
    }

    pub fn count(&self) -> usize {
        self.view_x.count()
    }

    /// Same rows of both views, labels and ids.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            view_x: self.view_x.select(indices),
            view_y: self.view_y.select(indices),
            labels: self.labels.select(indices),
            sample_ids: indices.iter().map(|i| self.sample_ids[*i]).collect(),
        }
    }

    /// Indices of each class, in ascending sample order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.labels.num_classes() as usize];
        for (i, l) in self.labels.as_slice().iter().enumerate() {
            by_class[*l as usize].push(i);
        }
        by_class
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_column_slice(2, 2, &[1.0, f64::NAN, 0.0, 0.0]);
        assert!(matches!(EmbeddingMatrix::new(m), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn rejects_empty() {
        assert!(EmbeddingMatrix::new(DMatrix::zeros(0, 3)).is_err());
        assert!(EmbeddingMatrix::new(DMatrix::zeros(3, 0)).is_err());
    }

    #[test]
    fn label_range_checked() {
        assert!(LabelVector::new(vec![0, 1, 2], 3).is_ok());
        assert!(LabelVector::new(vec![0, 3], 3).is_err());
        assert!(LabelVector::new(vec![0, 0], 1).is_err());
    }

    #[test]
    fn paired_rejects_duplicate_ids() {
        let x = EmbeddingMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        let labels = LabelVector::new(vec![0, 1], 2).unwrap();
        let err = PairedDataset::new(x.clone(), x, labels, vec![SampleId(1), SampleId(1)]);
        assert!(matches!(err, Err(Error::DuplicateId(1))));
    }

    #[test]
    fn fingerprint_tracks_values() {
        let a = EmbeddingMatrix::new(DMatrix::from_element(2, 3, 1.0)).unwrap();
        let mut raw = a.values().clone();
        raw[(1, 2)] = 1.0 + f64::EPSILON;
        let b = EmbeddingMatrix::new(raw).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}

//! Variance-based projection baseline.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::codec::{read_file, Reader, Writer};
use crate::embedding_store::{EmbeddingMatrix, Fingerprint};
use crate::error::{Error, Result};
use crate::linalg::{center_columns, needs_flip, symmetric_eigen_desc};
use crate::stats::fit_moments;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `k × d`, orthonormal rows.
    pub components: DMatrix<f64>,
    /// Variance along each component, descending.
    pub variances: DVector<f64>,
    pub fit_count: usize,
    pub source: Fingerprint,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn k(&self) -> usize {
        self.components.nrows()
    }
}

/// Top-`k` eigenvectors of the training covariance, `1 ≤ k ≤ min(d, N − 1)`.
pub fn fit_pca(x: &EmbeddingMatrix, k: usize) -> Result<PcaModel> {
    let max_k = x.dim().min(x.count().saturating_sub(1));
    if k == 0 || k > max_k {
        return Err(Error::InvalidArgument(format!(
            "PCA rank {k} outside [1, {max_k}] for d = {}, N = {}",
            x.dim(),
            x.count()
        )));
    }
    let stats = fit_moments(x)?;
    let (values, vectors) = symmetric_eigen_desc(&stats.cov);
    let mut components = vectors.columns(0, k).transpose();
    for i in 0..k {
        if needs_flip(components.row(i).iter()) {
            components.row_mut(i).neg_mut();
        }
    }
    let variances = DVector::from_iterator(k, values.iter().take(k).map(|v| v.max(0.0)));
    Ok(PcaModel {
        mean: stats.mean,
        components,
        variances,
        fit_count: stats.count,
        source: stats.source,
    })
}

pub fn project(m: &PcaModel, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    x.check_dim(m.dim(), "PCA project")?;
    EmbeddingMatrix::new(&m.components * center_columns(x.values(), &m.mean))
}

const PCA1_MAGIC: &[u8; 4] = b"PCA1";
const PCA1_VERSION: u32 = 1;

impl PcaModel {
    /// `PCA1` layout: magic, version `u32`, d, k, N, source fingerprint as
    /// `u64`, then mean (d), components (k × d, row-major) and variances (k),
    /// all `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(PCA1_MAGIC)
            .u32(PCA1_VERSION)
            .u64(self.dim() as u64)
            .u64(self.k() as u64)
            .u64(self.fit_count as u64)
            .u64(self.source.0)
            .vector(&self.mean)
            .matrix(&self.components)
            .vector(&self.variances);
        w.into_bytes()
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(path, bytes);
        r.magic(PCA1_MAGIC)?;
        r.version("PCA1", PCA1_VERSION)?;
        let d = r.usize()?;
        let k = r.usize()?;
        let fit_count = r.usize()?;
        let source = Fingerprint(r.u64()?);
        Ok(Self {
            mean: r.vector(d)?,
            components: r.matrix(k, d)?,
            variances: r.vector(k)?,
            fit_count,
            source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(path, &read_file(path)?)
    }
}

//! Canonical correlation analysis between two embedding spaces.
//!
//! Each view is ZCA-whitened with its own training statistics. The whitened
//! cross-covariance `T = X_w Y_wᵀ / (N − 1)` is factored as `T = P Λ Qᵀ`, and
//! the model keeps `u = Pᵀ`, `v = Qᵀ` (top `d = min(d_X, d_Y)` rows each).
//! Projections are `u W_X (x − μ_X)` and `v W_Y (y − μ_Y)`; Λ is reported but
//! never used to scale them.

mod oracle;

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::codec::{read_file, Reader, Writer};
use crate::embedding_store::{EmbeddingMatrix, Fingerprint};
use crate::error::{Error, Result};
use crate::linalg::needs_flip;
use crate::stats::{
    apply_whitening, fit_moments, fit_whitening_with, RankPolicy, WhiteningOptions,
    WhiteningTransform,
};

pub use oracle::fit_cca_oracle;

#[derive(Debug, Clone, PartialEq)]
pub struct CcaModel {
    /// `d × d_X`, rows orthonormal; acts on whitened x.
    pub u: DMatrix<f64>,
    /// `d × d_Y`, rows orthonormal; acts on whitened y.
    pub v: DMatrix<f64>,
    /// Canonical correlations, descending, clamped to `[0, 1]`.
    pub correlations: DVector<f64>,
    pub whiten_x: WhiteningTransform,
    pub whiten_y: WhiteningTransform,
    pub fit_count: usize,
    pub epsilon_rel: f64,
    /// Largest amount a raw singular value had to be moved into `[0, 1]`.
    pub clamp_excursion: f64,
    /// Set when `N − 1 < max(d_X, d_Y)`: trailing correlations are then spurious.
    pub rank_warning: bool,
}

impl CcaModel {
    pub fn dim(&self) -> usize {
        self.correlations.len()
    }

    pub fn dim_x(&self) -> usize {
        self.u.ncols()
    }

    pub fn dim_y(&self) -> usize {
        self.v.ncols()
    }

    pub fn source_x(&self) -> Fingerprint {
        self.whiten_x.source
    }

    pub fn source_y(&self) -> Fingerprint {
        self.whiten_y.source
    }

    /// Flips each pair `(u_i, v_i)` so the largest-magnitude entry of `u_i` is
    /// positive.
    pub(crate) fn canonicalize_signs(&mut self) {
        for i in 0..self.dim() {
            if needs_flip(self.u.row(i).iter()) {
                self.u.row_mut(i).neg_mut();
                self.v.row_mut(i).neg_mut();
            }
        }
    }
}

pub fn fit_cca(x: &EmbeddingMatrix, y: &EmbeddingMatrix, epsilon_rel: f64) -> Result<CcaModel> {
    fit_cca_with(
        x,
        y,
        &WhiteningOptions {
            epsilon_rel,
            rank: RankPolicy::Clamp,
        },
    )
}

pub fn fit_cca_with(
    x: &EmbeddingMatrix,
    y: &EmbeddingMatrix,
    opts: &WhiteningOptions,
) -> Result<CcaModel> {
    let n = x.count();
    if y.count() != n {
        return Err(Error::CountMismatch { x: n, y: y.count() });
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("CCA needs N >= 2, got {n}")));
    }
    let whiten_x = fit_whitening_with(&fit_moments(x)?, opts)?;
    let whiten_y = fit_whitening_with(&fit_moments(y)?, opts)?;
    let xw = apply_whitening(&whiten_x, x)?.into_inner();
    let yw = apply_whitening(&whiten_y, y)?.into_inner();
    let cross = (&xw * yw.transpose()) / (n - 1) as f64;

    let d = x.dim().min(y.dim());
    let svd = nalgebra::SVD::try_new(cross, true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Decomposition("SVD of whitened cross-covariance did not converge".into()))?;
    let (p, qt) = match (svd.u, svd.v_t) {
        (Some(p), Some(qt)) => (p, qt),
        _ => return Err(Error::Decomposition("SVD returned no singular vectors".into())),
    };
    let sigma = svd.singular_values;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|a, b| {
        sigma[*b]
            .partial_cmp(&sigma[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    order.truncate(d);

    let u = p.select_columns(&order).transpose();
    let v = qt.select_rows(&order);
    let mut clamp_excursion = 0.0f64;
    let correlations = DVector::from_iterator(
        d,
        order.iter().map(|i| {
            let raw = sigma[*i];
            clamp_excursion = clamp_excursion.max(raw - 1.0).max(-raw);
            raw.clamp(0.0, 1.0)
        }),
    );

    let rank_warning = n - 1 < x.dim().max(y.dim());
    if rank_warning {
        log::warn!(
            "CCA fit on N = {n} samples with d_X = {}, d_Y = {}: correlations beyond rank {} are spurious",
            x.dim(),
            y.dim(),
            n - 1
        );
    }

    let mut model = CcaModel {
        u,
        v,
        correlations,
        whiten_x,
        whiten_y,
        fit_count: n,
        epsilon_rel: opts.epsilon_rel,
        clamp_excursion,
        rank_warning,
    };
    model.canonicalize_signs();
    Ok(model)
}

pub fn project_x(m: &CcaModel, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    x.check_dim(m.dim_x(), "CCA project_x")?;
    EmbeddingMatrix::new(&m.u * apply_whitening(&m.whiten_x, x)?.values())
}

pub fn project_y(m: &CcaModel, y: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    y.check_dim(m.dim_y(), "CCA project_y")?;
    EmbeddingMatrix::new(&m.v * apply_whitening(&m.whiten_y, y)?.values())
}

/// Keeps the top `k` canonical pairs.
pub fn truncate(m: &CcaModel, k: usize) -> Result<CcaModel> {
    if k == 0 || k > m.dim() {
        return Err(Error::InvalidArgument(format!(
            "truncation rank {k} outside [1, {}]",
            m.dim()
        )));
    }
    Ok(CcaModel {
        u: m.u.rows(0, k).into_owned(),
        v: m.v.rows(0, k).into_owned(),
        correlations: m.correlations.rows(0, k).into_owned(),
        ..m.clone()
    })
}

/// Mean of the top `k` canonical correlations.
pub fn mean_correlation(m: &CcaModel, k: usize) -> Result<f64> {
    if k == 0 || k > m.dim() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside [1, {}]",
            m.dim()
        )));
    }
    Ok(m.correlations.rows(0, k).sum() / k as f64)
}

const CCA1_MAGIC: &[u8; 4] = b"CCA1";
const CCA1_VERSION: u32 = 1;

impl CcaModel {
    /// `CCA1` layout: magic, version `u32`, d_X, d_Y, d, as `u64`, epsilon_rel
    /// `f64`, N `u64`, rank warning `u8`, clamp excursion `f64`, the `WHT1`
    /// sections of x and y, then u, v (row-major) and Λ, all `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(CCA1_MAGIC)
            .u32(CCA1_VERSION)
            .u64(self.dim_x() as u64)
            .u64(self.dim_y() as u64)
            .u64(self.dim() as u64)
            .f64(self.epsilon_rel)
            .u64(self.fit_count as u64)
            .u8(self.rank_warning as u8)
            .f64(self.clamp_excursion);
        self.whiten_x.write_section(&mut w);
        self.whiten_y.write_section(&mut w);
        w.matrix(&self.u).matrix(&self.v).vector(&self.correlations);
        w.into_bytes()
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(path, bytes);
        r.magic(CCA1_MAGIC)?;
        r.version("CCA1", CCA1_VERSION)?;
        let dx = r.usize()?;
        let dy = r.usize()?;
        let d = r.usize()?;
        let epsilon_rel = r.f64()?;
        let fit_count = r.usize()?;
        let rank_warning = r.u8()? != 0;
        let clamp_excursion = r.f64()?;
        let whiten_x = WhiteningTransform::read_section(&mut r)?;
        let whiten_y = WhiteningTransform::read_section(&mut r)?;
        if whiten_x.dim() != dx || whiten_y.dim() != dy || d != dx.min(dy) {
            return Err(Error::DtypeMismatch {
                path: path.to_path_buf(),
                detail: format!(
                    "header dims ({dx}, {dy}, {d}) disagree with whitening sections ({}, {})",
                    whiten_x.dim(),
                    whiten_y.dim()
                ),
            });
        }
        let u = r.matrix(d, dx)?;
        let v = r.matrix(d, dy)?;
        let correlations = r.vector(d)?;
        Ok(Self {
            u,
            v,
            correlations,
            whiten_x,
            whiten_y,
            fit_count,
            epsilon_rel,
            clamp_excursion,
            rank_warning,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(path, &read_file(path)?)
    }
}

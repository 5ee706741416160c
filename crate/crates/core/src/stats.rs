//! Means, covariances, and regularized ZCA whitening.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::codec::{Reader, Writer};
use crate::embedding_store::{EmbeddingMatrix, Fingerprint};
use crate::error::{Error, Result};
use crate::linalg::{center_columns, max_abs, row_means, symmetric_eigen_desc};

/// Default regularizer, relative to the largest covariance eigenvalue.
pub const DEFAULT_EPSILON_REL: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub count: usize,
    /// Fingerprint of the matrix the moments were estimated from.
    pub source: Fingerprint,
}

impl MomentStats {
    /// Moments supplied directly, e.g. a known population covariance.
    pub fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>, count: usize) -> Result<Self> {
        if cov.nrows() != cov.ncols() || cov.nrows() != mean.len() {
            return Err(Error::DimMismatch {
                context: "covariance shape".into(),
                expected: mean.len(),
                actual: cov.nrows(),
            });
        }
        if count < 2 {
            return Err(Error::InvalidArgument(format!("need N >= 2, got {count}")));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "moment statistics".into(),
            });
        }
        Ok(Self {
            mean,
            cov,
            count,
            source: Fingerprint::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Two-pass mean and unbiased covariance over the columns of `x`.
pub fn fit_moments(x: &EmbeddingMatrix) -> Result<MomentStats> {
    let n = x.count();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let values = x.values();
    let mean = row_means(values);
    let centered = center_columns(values, &mean);
    let mut cov = &centered * centered.transpose();
    cov /= (n - 1) as f64;
    symmetrize(&mut cov);
    Ok(MomentStats {
        mean,
        cov,
        count: n,
        source: x.fingerprint(),
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Partial `(count, mean, M2)` accumulator. `M2` is the sum of outer products
/// of deviations from the running mean.
///
/// Merging two accumulators `a`, `b` with `δ = mean_b − mean_a`, `n = n_a + n_b`:
///
/// ```text
/// mean = mean_a + δ · n_b / n
/// M2   = M2_a + M2_b + δ δᵀ · n_a n_b / n
/// ```
///
/// which is exact in real arithmetic; the covariance is `M2 / (n − 1)`.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    count: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
        }
    }

    /// Two-pass accumulator over a block of columns.
    pub fn from_block(block: &DMatrix<f64>) -> Self {
        let n = block.ncols();
        if n == 0 {
            return Self::new(block.nrows());
        }
        let mean = row_means(block);
        let centered = center_columns(block, &mean);
        Self {
            count: n,
            mean,
            m2: &centered * centered.transpose(),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = &other.mean - &self.mean;
        self.mean += &delta * (nb / n);
        self.m2 += &other.m2;
        self.m2 += (&delta * delta.transpose()) * (na * nb / n);
        self.count += other.count;
    }

    pub fn finish(mut self, source: Fingerprint) -> Result<MomentStats> {
        if self.count < 2 {
            return Err(Error::InvalidArgument(format!(
                "covariance needs at least 2 samples, got {}",
                self.count
            )));
        }
        self.m2 /= (self.count - 1) as f64;
        symmetrize(&mut self.m2);
        Ok(MomentStats {
            mean: self.mean,
            cov: self.m2,
            count: self.count,
            source,
        })
    }
}

/// `fit_moments` over `parts` contiguous column blocks, estimated in parallel
/// and merged in block order.
pub fn fit_moments_partitioned(x: &EmbeddingMatrix, parts: usize) -> Result<MomentStats> {
    let parts = parts.clamp(1, x.count());
    let n = x.count();
    let bounds: Vec<(usize, usize)> = (0..parts)
        .map(|p| (p * n / parts, (p + 1) * n / parts))
        .collect();
    let partials: Vec<MomentAccumulator> = bounds
        .par_iter()
        .map(|(lo, hi)| MomentAccumulator::from_block(&x.values().columns(*lo, hi - lo).into_owned()))
        .collect();
    let mut total = MomentAccumulator::new(x.dim());
    for p in &partials {
        total.merge(p);
    }
    total.finish(x.fingerprint())
}

/// How eigen-directions with negligible variance are treated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankPolicy {
    /// Keep every direction; eigenvalues are floored at zero and regularized by ε.
    Clamp,
    /// Drop directions whose eigenvalue is below `rel_tol · λ_max`.
    Truncate { rel_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteningOptions {
    pub epsilon_rel: f64,
    pub rank: RankPolicy,
}

impl Default for WhiteningOptions {
    fn default() -> Self {
        Self {
            epsilon_rel: DEFAULT_EPSILON_REL,
            rank: RankPolicy::Clamp,
        }
    }
}

/// `x ↦ W (x − μ)` with `W = (Σ + εI)^{-1/2}` in symmetric (ZCA) form.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub mean: DVector<f64>,
    pub operator: DMatrix<f64>,
    pub epsilon_rel: f64,
    /// Absolute regularizer `ε = epsilon_rel · λ_max`.
    pub epsilon: f64,
    pub source_count: usize,
    pub source: Fingerprint,
    pub rank: RankPolicy,
    pub retained_rank: usize,
}

impl WhiteningTransform {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn fit_whitening(stats: &MomentStats, epsilon_rel: f64) -> Result<WhiteningTransform> {
    fit_whitening_with(
        stats,
        &WhiteningOptions {
            epsilon_rel,
            rank: RankPolicy::Clamp,
        },
    )
}

pub fn fit_whitening_with(stats: &MomentStats, opts: &WhiteningOptions) -> Result<WhiteningTransform> {
    if !(opts.epsilon_rel > 0.0 && opts.epsilon_rel.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon_rel must be positive, got {}",
            opts.epsilon_rel
        )));
    }
    let cov = &stats.cov;
    let scale = max_abs(cov).max(f64::MIN_POSITIVE);
    let asym = max_abs(&(cov - cov.transpose()));
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    let mut sym = cov.clone();
    symmetrize(&mut sym);

    let (values, vectors) = symmetric_eigen_desc(&sym);
    let lambda_max = values.iter().copied().fold(0.0f64, f64::max);
    let epsilon = opts.epsilon_rel * lambda_max.max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = match opts.rank {
        RankPolicy::Clamp => (0..values.len()).collect(),
        RankPolicy::Truncate { rel_tol } => (0..values.len())
            .filter(|i| values[*i] > rel_tol * lambda_max)
            .collect(),
    };
    if keep.is_empty() {
        return Err(Error::Decomposition(
            "rank truncation removed every direction".into(),
        ));
    }
    let q = vectors.select_columns(&keep);
    let inv_sqrt = DVector::from_iterator(
        keep.len(),
        keep.iter().map(|i| 1.0 / (values[*i].max(0.0) + epsilon).sqrt()),
    );
    let mut scaled = q.clone();
    for (mut col, s) in scaled.column_iter_mut().zip(inv_sqrt.iter()) {
        col *= *s;
    }
    let mut operator = scaled * q.transpose();
    symmetrize(&mut operator);

    Ok(WhiteningTransform {
        mean: stats.mean.clone(),
        operator,
        epsilon_rel: opts.epsilon_rel,
        epsilon,
        source_count: stats.count,
        source: stats.source,
        rank: opts.rank,
        retained_rank: keep.len(),
    })
}

/// `W (X − μ)` column-wise, using the fitted statistics verbatim.
pub fn apply_whitening(t: &WhiteningTransform, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    x.check_dim(t.dim(), "apply_whitening")?;
    let centered = center_columns(x.values(), &t.mean);
    EmbeddingMatrix::new(&t.operator * centered)
}

const WHT1_MAGIC: &[u8; 4] = b"WHT1";
const WHT1_VERSION: u32 = 1;

impl WhiteningTransform {
    /// `WHT1` section: magic, version `u32`, d `u64`, epsilon_rel `f64`,
    /// epsilon `f64`, source_count `u64`, source fingerprint `u64`, rank
    /// policy `u8` (0 clamp, 1 truncate) + rel_tol `f64`, retained rank `u64`,
    /// mean (d × f64), operator (d × d f64, row-major).
    pub fn write_section(&self, w: &mut Writer) {
        let (policy, tol) = match self.rank {
            RankPolicy::Clamp => (0u8, 0.0),
            RankPolicy::Truncate { rel_tol } => (1u8, rel_tol),
        };
        w.bytes(WHT1_MAGIC)
            .u32(WHT1_VERSION)
            .u64(self.dim() as u64)
            .f64(self.epsilon_rel)
            .f64(self.epsilon)
            .u64(self.source_count as u64)
            .u64(self.source.0)
            .u8(policy)
            .f64(tol)
            .u64(self.retained_rank as u64)
            .vector(&self.mean)
            .matrix(&self.operator);
    }

    pub fn read_section(r: &mut Reader<'_>) -> Result<Self> {
        r.magic(WHT1_MAGIC)?;
        r.version("WHT1", WHT1_VERSION)?;
        let d = r.usize()?;
        let epsilon_rel = r.f64()?;
        let epsilon = r.f64()?;
        let source_count = r.usize()?;
        let source = Fingerprint(r.u64()?);
        let policy = r.u8()?;
        let tol = r.f64()?;
        let rank = match policy {
            0 => RankPolicy::Clamp,
            1 => RankPolicy::Truncate { rel_tol: tol },
            other => {
                return Err(Error::DtypeMismatch {
                    path: r.path().to_path_buf(),
                    detail: format!("unknown rank policy code {other}"),
                })
            }
        };
        let retained_rank = r.usize()?;
        let mean = r.vector(d)?;
        let operator = r.matrix(d, d)?;
        Ok(Self {
            mean,
            operator,
            epsilon_rel,
            epsilon,
            source_count,
            source,
            rank,
            retained_rank,
        })
    }
}

//! Classical CCA as a generalized symmetric-definite eigenproblem.
//!
//! Solves `Σ_X⁻¹ Σ_XY Σ_Y⁻¹ Σ_YX w = ρ² w` on the smaller side through a
//! Cholesky reduction `M = L⁻¹ Σ_XY Σ_Y⁻¹ Σ_YX L⁻ᵀ`, with its own Jacobi
//! eigensolver and covariance loops so it shares no decomposition code with
//! the whitened-SVD path. Meant for verification on small problems.

use nalgebra::{DMatrix, DVector};

use crate::embedding_store::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::stats::{RankPolicy, WhiteningTransform};

use super::CcaModel;

const MAX_ORACLE_SIZE: usize = 10_000;

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix; eigenvalues
/// descending, eigenvectors in columns.
pub(crate) fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-17 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|i, j| a[(*j, *j)].partial_cmp(&a[(*i, *i)]).unwrap().then(i.cmp(j)));
    let values = order.iter().map(|i| a[(*i, *i)]).collect();
    (values, v.select_columns(&order))
}

/// Lower-triangular `L` with `L Lᵀ = a`.
pub(crate) fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 {
            return Err(Error::Decomposition(format!(
                "oracle Cholesky: non-positive pivot {diag:e} at {j}"
            )));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
fn forward_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `Lᵀ X = B` for lower-triangular `L`.
fn backward_solve_transposed(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for c in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

struct Moments {
    mean: Vec<f64>,
    centered: DMatrix<f64>,
}

fn moments(x: &DMatrix<f64>) -> Moments {
    let (d, n) = x.shape();
    let mean: Vec<f64> = (0..d)
        .map(|i| (0..n).map(|j| x[(i, j)]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(d, n, |i, j| x[(i, j)] - mean[i]);
    Moments { mean, centered }
}

fn cross(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        (0..n).map(|k| a[(i, k)] * b[(j, k)]).sum::<f64>() / (n - 1) as f64
    })
}

/// Regularized covariance `Σ + εI`, its ZCA operator, and its square root.
struct Regularized {
    reg: DMatrix<f64>,
    epsilon: f64,
    inv_sqrt: DMatrix<f64>,
    sqrt: DMatrix<f64>,
}

fn regularize(cov: &DMatrix<f64>, epsilon_rel: f64) -> Regularized {
    let d = cov.nrows();
    let (vals, q) = jacobi_eigen(cov);
    let lambda_max = vals.iter().copied().fold(0.0f64, f64::max);
    let epsilon = epsilon_rel * lambda_max.max(f64::MIN_POSITIVE);
    let spectral = |f: &dyn Fn(f64) -> f64| {
        DMatrix::from_fn(d, d, |i, j| {
            (0..d).map(|k| q[(i, k)] * f(vals[k].max(0.0) + epsilon) * q[(j, k)]).sum()
        })
    };
    let inv_sqrt = spectral(&|l| 1.0 / l.sqrt());
    let sqrt = spectral(&|l| l.sqrt());
    let mut reg = cov.clone();
    for i in 0..d {
        reg[(i, i)] += epsilon;
    }
    Regularized {
        reg,
        epsilon,
        inv_sqrt,
        sqrt,
    }
}

/// Canonical pairs: directions `a` (Σ_a-normalized) on the smaller side and
/// their partners `b` on the other side, with correlations.
fn solve_side(
    saa: &Regularized,
    sbb: &Regularized,
    sab: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let la = cholesky(&saa.reg)?;
    let lb = cholesky(&sbb.reg)?;
    // Σ_b⁻¹ Σ_ba via two triangular solves.
    let sba = sab.transpose();
    let sbb_inv_sba = backward_solve_transposed(&lb, &forward_solve(&lb, &sba));
    let inner = sab * &sbb_inv_sba;
    // M = L⁻¹ inner L⁻ᵀ
    let left = forward_solve(&la, &inner);
    let m = forward_solve(&la, &left.transpose()).transpose();
    let m = (&m + m.transpose()) * 0.5;
    let (rho_sq, e) = jacobi_eigen(&m);
    let a_dirs = backward_solve_transposed(&la, &e);
    let rho: Vec<f64> = rho_sq.iter().map(|r| r.max(0.0).sqrt()).collect();
    let b_dirs = &sbb_inv_sba * &a_dirs;
    Ok((rho, a_dirs, b_dirs))
}

/// Rows of `raw` mapped into the whitened metric and normalized; rows whose
/// correlation is negligible are replaced by an orthonormal completion.
fn whitened_rows(raw: &DMatrix<f64>, sqrt: &DMatrix<f64>, reliable: usize, d: usize) -> DMatrix<f64> {
    let dim = sqrt.nrows();
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(d);
    for i in 0..reliable.min(d) {
        let mut r = sqrt * raw.column(i);
        let norm = r.norm();
        r /= norm;
        rows.push(r);
    }
    let mut basis = 0;
    while rows.len() < d && basis < dim {
        let mut cand = DVector::<f64>::zeros(dim);
        cand[basis] = 1.0;
        basis += 1;
        for _ in 0..2 {
            for r in &rows {
                let dot = r.dot(&cand);
                cand -= r * dot;
            }
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            rows.push(cand / norm);
        }
    }
    DMatrix::from_fn(d, dim, |i, j| rows[i][j])
}

fn transform(mean: Vec<f64>, reg: &Regularized, epsilon_rel: f64, n: usize, src: &EmbeddingMatrix) -> WhiteningTransform {
    let d = mean.len();
    WhiteningTransform {
        mean: DVector::from_vec(mean),
        operator: reg.inv_sqrt.clone(),
        epsilon_rel,
        epsilon: reg.epsilon,
        source_count: n,
        source: src.fingerprint(),
        rank: RankPolicy::Clamp,
        retained_rank: d,
    }
}

/// Reference CCA fit for small problems (`d_X · d_Y ≤ 10⁴`).
pub fn fit_cca_oracle(x: &EmbeddingMatrix, y: &EmbeddingMatrix, epsilon_rel: f64) -> Result<CcaModel> {
    let size = x.dim() * y.dim();
    if size > MAX_ORACLE_SIZE {
        return Err(Error::SizeGuard(size));
    }
    let n = x.count();
    if y.count() != n {
        return Err(Error::CountMismatch { x: n, y: y.count() });
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("CCA needs N >= 2, got {n}")));
    }
    let mx = moments(x.values());
    let my = moments(y.values());
    let rx = regularize(&cross(&mx.centered, &mx.centered), epsilon_rel);
    let ry = regularize(&cross(&my.centered, &my.centered), epsilon_rel);
    let sxy = cross(&mx.centered, &my.centered);

    let d = x.dim().min(y.dim());
    let (rho, xdirs, ydirs) = if x.dim() <= y.dim() {
        solve_side(&rx, &ry, &sxy)?
    } else {
        let (rho, ydirs, xdirs) = solve_side(&ry, &rx, &sxy.transpose())?;
        (rho, xdirs, ydirs)
    };
    let reliable = rho.iter().take(d).take_while(|r| **r > 1e-10).count();
    let u = whitened_rows(&xdirs, &rx.sqrt, if x.dim() <= y.dim() { d } else { reliable }, d);
    let v = whitened_rows(&ydirs, &ry.sqrt, if x.dim() <= y.dim() { reliable } else { d }, d);

    let mut clamp_excursion = 0.0f64;
    let correlations = DVector::from_iterator(
        d,
        rho.iter().take(d).map(|r| {
            clamp_excursion = clamp_excursion.max(r - 1.0);
            r.clamp(0.0, 1.0)
        }),
    );
    let mut model = CcaModel {
        u,
        v,
        correlations,
        whiten_x: transform(mx.mean, &rx, epsilon_rel, n, x),
        whiten_y: transform(my.mean, &ry, epsilon_rel, n, y),
        fit_count: n,
        epsilon_rel,
        clamp_excursion,
        rank_warning: n - 1 < x.dim().max(y.dim()),
    };
    model.canonicalize_signs();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn jacobi_reconstructs() {
        let mut rng = CounterRng::new(1);
        let b = DMatrix::from_fn(7, 7, |_, _| rng.normal());
        let a = &b * b.transpose();
        let (vals, q) = jacobi_eigen(&a);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let rebuilt = &q * DMatrix::from_diagonal(&DVector::from_vec(vals)) * q.transpose();
        assert!((rebuilt - &a).amax() < 1e-12 * a.amax());
        assert!((q.transpose() * &q - DMatrix::identity(7, 7)).amax() < 1e-13);
    }

    #[test]
    fn cholesky_reconstructs_and_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let l = cholesky(&a).unwrap();
        assert!((&l * l.transpose() - a).amax() < 1e-15);
        assert!(cholesky(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }

    #[test]
    fn size_guard() {
        let x = EmbeddingMatrix::new(DMatrix::zeros(101, 3)).unwrap();
        let y = EmbeddingMatrix::new(DMatrix::zeros(100, 3)).unwrap();
        assert!(matches!(fit_cca_oracle(&x, &y, 1e-6), Err(Error::SizeGuard(10100))));
    }
}

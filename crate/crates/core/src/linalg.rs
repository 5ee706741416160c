use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenpairs of a symmetric matrix, eigenvalues descending. Ties keep the
/// solver's original order.
pub(crate) fn symmetric_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*b]
            .partial_cmp(&eig.eigenvalues[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    let values = DVector::from_iterator(order.len(), order.iter().map(|i| eig.eigenvalues[*i]));
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// Whether a direction must be negated so that its largest-magnitude entry
/// (lowest index on ties) is positive.
pub(crate) fn needs_flip<'a>(entries: impl Iterator<Item = &'a f64>) -> bool {
    let mut best = 0.0f64;
    let mut sign_negative = false;
    for v in entries {
        if v.abs() > best {
            best = v.abs();
            sign_negative = *v < 0.0;
        }
    }
    sign_negative
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Row means as `sum / N`.
pub(crate) fn row_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.ncols() as f64;
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum() / n))
}

/// `m - μ 1ᵀ`.
pub(crate) fn center_columns(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        col -= mean;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_rule_uses_first_maximum() {
        assert!(!needs_flip([0.5, -0.5].iter()));
        assert!(needs_flip([-0.5, 0.5].iter()));
        assert!(needs_flip([0.1, -0.9, 0.3].iter()));
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 9.0, 4.0]));
        let (vals, vecs) = symmetric_eigen_desc(&m);
        assert_eq!(vals.as_slice(), &[9.0, 4.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }
}

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{EmbeddingMatrix, LabelVector, PairedDataset, SampleId};

/// An embedding matrix whose columns carry sample ids.
#[derive(Debug, Clone)]
pub struct IdentifiedMatrix {
    pub matrix: EmbeddingMatrix,
    pub ids: Vec<SampleId>,
}

impl IdentifiedMatrix {
    pub fn new(matrix: EmbeddingMatrix, ids: Vec<SampleId>) -> Result<Self> {
        if ids.len() != matrix.count() {
            return Err(Error::DimMismatch {
                context: "sample ids for embedding matrix".into(),
                expected: matrix.count(),
                actual: ids.len(),
            });
        }
        Ok(Self { matrix, ids })
    }

    /// Ids `0..N` for files that ship without an id list.
    pub fn sequential(matrix: EmbeddingMatrix) -> Self {
        let ids = (0..matrix.count() as u64).map(SampleId).collect();
        Self { matrix, ids }
    }
}

#[derive(Debug, Clone)]
pub struct IdentifiedLabels {
    pub labels: LabelVector,
    pub ids: Vec<SampleId>,
}

impl IdentifiedLabels {
    pub fn new(labels: LabelVector, ids: Vec<SampleId>) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(Error::DimMismatch {
                context: "sample ids for labels".into(),
                expected: labels.len(),
                actual: ids.len(),
            });
        }
        Ok(Self { labels, ids })
    }
}

#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub dataset: PairedDataset,
    pub dropped_x: usize,
    pub dropped_y: usize,
    pub dropped_labels: usize,
}

impl AlignOutcome {
    pub fn dropped(&self) -> usize {
        self.dropped_x + self.dropped_y + self.dropped_labels
    }
}

fn index_of(ids: &[SampleId]) -> Result<HashMap<SampleId, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(*id, i).is_some() {
            return Err(Error::DuplicateId(id.0));
        }
    }
    Ok(map)
}

/// Inner join of two views and their labels on sample id, in ascending id
/// order. Samples missing from any input are dropped with a warning.
pub fn align_views(
    x: &IdentifiedMatrix,
    y: &IdentifiedMatrix,
    labels: &IdentifiedLabels,
) -> Result<AlignOutcome> {
    let x_index = index_of(&x.ids)?;
    let y_index = index_of(&y.ids)?;
    let label_index = index_of(&labels.ids)?;

    let mut common: Vec<SampleId> = x
        .ids
        .iter()
        .filter(|id| y_index.contains_key(id) && label_index.contains_key(id))
        .copied()
        .collect();
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    common.sort_unstable();

    let xi: Vec<usize> = common.iter().map(|id| x_index[id]).collect();
    let yi: Vec<usize> = common.iter().map(|id| y_index[id]).collect();
    let li: Vec<usize> = common.iter().map(|id| label_index[id]).collect();
    let n = common.len();
    let outcome = AlignOutcome {
        dataset: PairedDataset::new(
            x.matrix.select(&xi),
            y.matrix.select(&yi),
            labels.labels.select(&li),
            common,
        )?,
        dropped_x: x.ids.len() - n,
        dropped_y: y.ids.len() - n,
        dropped_labels: labels.ids.len() - n,
    };
    if outcome.dropped() > 0 {
        log::warn!(
            "align: kept {n} samples, dropped {} from x, {} from y, {} from labels",
            outcome.dropped_x,
            outcome.dropped_y,
            outcome.dropped_labels
        );
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;

    fn view(ids: &[u64], offset: f64) -> IdentifiedMatrix {
        let m = DMatrix::from_fn(2, ids.len(), |r, c| ids[c] as f64 + offset + r as f64 * 0.5);
        IdentifiedMatrix::new(
            EmbeddingMatrix::new(m).unwrap(),
            ids.iter().map(|i| SampleId(*i)).collect(),
        )
        .unwrap()
    }

    fn labels(ids: &[u64]) -> IdentifiedLabels {
        IdentifiedLabels::new(
            LabelVector::new(ids.iter().map(|i| (*i % 2) as u32).collect(), 2).unwrap(),
            ids.iter().map(|i| SampleId(*i)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_sets_are_sorted() {
        let ids = [5, 3, 9, 1];
        let out = align_views(&view(&ids, 0.0), &view(&[9, 1, 5, 3], 100.0), &labels(&ids)).unwrap();
        assert_eq!(out.dropped(), 0);
        let got: Vec<u64> = out.dataset.sample_ids().iter().map(|s| s.0).collect();
        assert_eq!(got, vec![1, 3, 5, 9]);
        for (j, id) in got.iter().enumerate() {
            assert_eq!(out.dataset.view_x().values()[(0, j)], *id as f64);
            assert_eq!(out.dataset.view_y().values()[(0, j)], *id as f64 + 100.0);
            assert_eq!(out.dataset.labels().as_slice()[j], (*id % 2) as u32);
        }
    }

    #[test]
    fn partial_overlap_drops_and_counts() {
        let xs: Vec<u64> = (1..=10).collect();
        let ys: Vec<u64> = (6..=15).collect();
        let out = align_views(&view(&xs, 0.0), &view(&ys, 0.0), &labels(&xs)).unwrap();
        assert_eq!(out.dataset.count(), 5);
        assert_eq!((out.dropped_x, out.dropped_y, out.dropped_labels), (5, 5, 5));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = align_views(&view(&[1, 2, 2], 0.0), &view(&[1, 2], 0.0), &labels(&[1, 2]));
        assert!(matches!(err, Err(Error::DuplicateId(2))));
    }

    #[test]
    fn disjoint_views() {
        let err = align_views(&view(&[1, 2], 0.0), &view(&[3, 4], 0.0), &labels(&[1, 2]));
        assert!(matches!(err, Err(Error::EmptyIntersection)));
    }
}

//! Post-hoc cross-model representation alignment.
//!
//! Two frozen encoders embed the same samples. This crate fits canonical
//! correlation analysis (CCA) between the two embedding spaces, projects each
//! view into the shared subspace, and scores the result with a linear probe.
//! A PCA baseline, a synthetic two-view generator and an experiment harness
//! are included so the whole pipeline can be checked at desk scale.
//!
//! Matrices follow the column-per-sample convention: an embedding matrix is
//! `d × N`, one column per sample.

pub mod cca;
pub mod codec;
pub mod embedding_store;
pub mod error;
pub mod harness;
mod linalg;
pub mod pca;
pub mod probe;
pub mod rng;
pub mod stats;

pub use cca::{fit_cca, fit_cca_oracle, CcaModel};
pub use embedding_store::{EmbeddingMatrix, LabelVector, PairedDataset, SampleId};
pub use error::{Error, Result};

pub use pca::{fit_pca, PcaModel};
pub use probe::{default_config, DatasetClass, LinearProbe, TrainConfig};
pub use rng::CounterRng;
pub use stats::{apply_whitening, fit_moments, fit_whitening, MomentStats, WhiteningTransform};

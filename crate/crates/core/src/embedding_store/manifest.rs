//! JSON manifest naming the files of a dataset export.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "dataset_id": "cifar100",
//!   "seed": 0,
//!   "views": {
//!     "x": { "model_id": "vit_b_clip", "dim": 512 },
//!     "y": { "model_id": "vit_l_clip", "dim": 768 }
//!   },
//!   "splits": {
//!     "train": {
//!       "labels": "train.lbl1",
//!       "ids": "train.ids",
//!       "views": {
//!         "x": { "embeddings": "x_train.emb1" },
//!         "y": { "embeddings": "y_train.emb1", "ids": "y_train.ids" }
//!       }
//!     },
//!     "val": { "...": "same shape as train" }
//!   }
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. A view's `ids`
//! defaults to the split's `ids`, which defaults to `0..N`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::align::{align_views, AlignOutcome, IdentifiedLabels, IdentifiedMatrix};
use super::format::{read_embedding_header, read_embeddings, read_ids, read_labels};
use super::SampleId;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewFiles {
    pub embeddings: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<PathBuf>,
    pub views: BTreeMap<String, ViewFiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub dataset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub views: BTreeMap<String, ViewEntry>,
    pub splits: BTreeMap<String, SplitEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// One view of one split together with its labels.
#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub embeddings: IdentifiedMatrix,
    pub labels: IdentifiedLabels,
}

impl Manifest {
    pub fn new(dataset_id: impl Into<String>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            dataset_id: dataset_id.into(),
            seed: None,
            views: BTreeMap::new(),
            splits: BTreeMap::new(),
            base_dir: PathBuf::from("."),
        }
    }

    /// Parses and validates a manifest file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "{}: unsupported schema_version {}",
                path.display(),
                manifest.schema_version
            )));
        }
        manifest.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = dir.into();
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Every referenced file exists and every embedding header agrees with
    /// the declared view dimension.
    pub fn validate(&self) -> Result<()> {
        for (split_name, split) in &self.splits {
            self.expect_file(&split.labels)?;
            if let Some(ids) = &split.ids {
                self.expect_file(ids)?;
            }
            for (view_name, files) in &split.views {
                let entry = self.views.get(view_name).ok_or_else(|| {
                    Error::Manifest(format!(
                        "split {split_name:?} references undeclared view {view_name:?}"
                    ))
                })?;
                let path = self.expect_file(&files.embeddings)?;
                if let Some(ids) = &files.ids {
                    self.expect_file(ids)?;
                }
                let header = read_embedding_header(&path)?;
                if let Some(dim) = entry.dim {
                    if dim != header.dim {
                        return Err(Error::Manifest(format!(
                            "{}: header dim {} but view {view_name:?} declares {dim}",
                            path.display(),
                            header.dim
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn expect_file(&self, p: &Path) -> Result<PathBuf> {
        let path = self.resolve(p);
        if !path.is_file() {
            return Err(Error::Manifest(format!("missing file {}", path.display())));
        }
        Ok(path)
    }

    pub fn split(&self, name: &str) -> Result<&SplitEntry> {
        self.splits
            .get(name)
            .ok_or_else(|| Error::Manifest(format!("no split named {name:?}")))
    }

    pub fn model_id(&self, view: &str) -> Result<&str> {
        self.views
            .get(view)
            .map(|v| v.model_id.as_str())
            .ok_or_else(|| Error::Manifest(format!("no view named {view:?}")))
    }

    fn split_ids(&self, split: &SplitEntry, n: usize) -> Result<Vec<SampleId>> {
        match &split.ids {
            Some(p) => read_ids(&self.resolve(p)),
            None => Ok((0..n as u64).map(SampleId).collect()),
        }
    }

    pub fn load_labels(&self, split_name: &str) -> Result<IdentifiedLabels> {
        let split = self.split(split_name)?;
        let labels = read_labels(&self.resolve(&split.labels))?;
        let ids = self.split_ids(split, labels.len())?;
        IdentifiedLabels::new(labels, ids)
    }

    pub fn load_view(&self, split_name: &str, view: &str) -> Result<IdentifiedMatrix> {
        let split = self.split(split_name)?;
        let files = split.views.get(view).ok_or_else(|| {
            Error::Manifest(format!("split {split_name:?} has no view {view:?}"))
        })?;
        let matrix = read_embeddings(&self.resolve(&files.embeddings))?;
        let ids = match &files.ids {
            Some(p) => read_ids(&self.resolve(p))?,
            None => self.split_ids(split, matrix.count())?,
        };
        IdentifiedMatrix::new(matrix, ids)
    }

    pub fn load_split(&self, split_name: &str, view: &str) -> Result<LoadedSplit> {
        Ok(LoadedSplit {
            embeddings: self.load_view(split_name, view)?,
            labels: self.load_labels(split_name)?,
        })
    }

    /// Loads two views of a split and aligns them on sample id.
    pub fn load_paired(&self, split_name: &str, view_x: &str, view_y: &str) -> Result<AlignOutcome> {
        let x = self.load_view(split_name, view_x)?;
        let y = self.load_view(split_name, view_y)?;
        let labels = self.load_labels(split_name)?;
        align_views(&x, &y, &labels)
    }
}

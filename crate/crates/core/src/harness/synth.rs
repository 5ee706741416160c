//! Two-view generator with shared class structure and per-view nuisance.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedding_store::{
    write_embeddings, write_ids, write_labels, EmbeddingMatrix, LabelVector, Manifest, PairedDataset, Precision,
    SampleId, SplitEntry, ViewEntry, ViewFiles,
};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub k_shared: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub n_classes: usize,
    /// Samples per class before the 50/50 train/val split.
    pub n_per_class: usize,
    pub nuisance_scale: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub train: PairedDataset,
    pub val: PairedDataset,
}

pub const PRESETS: &[&str] = &["shared8", "pair2"];

/// Named parameter sets. `shared8`: 8 shared latents inside 64- and 32-dim
/// views whose nuisance coordinates carry most of the variance, 10 classes,
/// 200 train + 200 val per class. `pair2`: two well separated classes.
pub fn preset(name: &str, seed: u64) -> Result<SynthParams> {
    match name {
        "shared8" => Ok(SynthParams {
            k_shared: 8,
            d_x: 64,
            d_y: 32,
            n_classes: 10,
            n_per_class: 400,
            nuisance_scale: 1.5,
            noise_scale: 0.6,
            seed,
        }),
        "pair2" => Ok(SynthParams {
            k_shared: 2,
            d_x: 6,
            d_y: 4,
            n_classes: 2,
            n_per_class: 200,
            nuisance_scale: 1.0,
            noise_scale: 0.1,
            seed,
        }),
        other => Err(Error::InvalidArgument(format!(
            "unknown synthetic preset '{other}' (known: {})",
            PRESETS.join(", ")
        ))),
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k_shared == 0 || self.k_shared > self.d_x.min(self.d_y) {
            return bad(format!(
                "k_shared = {} must lie in [1, min(d_x, d_y) = {}]",
                self.k_shared,
                self.d_x.min(self.d_y)
            ));
        }
        if self.n_classes < 2 {
            return bad("n_classes must be >= 2".into());
        }
        if self.n_per_class < 2 {
            return bad("n_per_class must be >= 2 so both splits are nonempty".into());
        }
        if !(self.nuisance_scale.is_finite() && self.nuisance_scale >= 0.0) {
            return bad(format!("nuisance_scale must be >= 0, got {}", self.nuisance_scale));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale > 0.0) {
            return bad(format!("noise_scale must be > 0, got {}", self.noise_scale));
        }
        Ok(())
    }
}

const CENTER_STREAM: u64 = 1;
const MIX_X_STREAM: u64 = 2;
const MIX_Y_STREAM: u64 = 3;
const LATENT_STREAM: u64 = 4;
const NUISANCE_X_STREAM: u64 = 5;
const NUISANCE_Y_STREAM: u64 = 6;

/// `k × k` Gaussian mixing matrix with entries of variance `1 / k`, redrawn
/// until its condition number is below 1e3.
fn mixing_matrix(k: usize, rng: &mut CounterRng) -> DMatrix<f64> {
    let scale = (k as f64).sqrt().recip();
    loop {
        let a = DMatrix::from_fn(k, k, |_, _| rng.normal() * scale);
        let s = a.singular_values();
        if s.min() > 1e-3 * s.max() {
            return a;
        }
    }
}

fn view(
    mix: &DMatrix<f64>,
    latent: &DMatrix<f64>,
    dim: usize,
    nuisance_scale: f64,
    rng: &mut CounterRng,
) -> DMatrix<f64> {
    let k = mix.nrows();
    let n = latent.ncols();
    let mut out = DMatrix::zeros(dim, n);
    out.rows_mut(0, k).copy_from(&(mix * latent));
    for j in 0..n {
        for i in k..dim {
            out[(i, j)] = nuisance_scale * rng.normal();
        }
    }
    out
}

/// Class centres `~ N(0, I)` in a `k_shared`-dim latent, samples
/// `z = centre + noise_scale · N(0, I)`. Each view is `[A z; nuisance]`
/// with its own random full-rank `A` and independent nuisance coordinates of
/// standard deviation `nuisance_scale`. Samples are interleaved by class; the
/// first half of each class goes to train.
pub fn gen_two_view(p: &SynthParams) -> Result<SynthData> {
    p.validate()?;
    let k = p.k_shared;
    let n = p.n_classes * p.n_per_class;
    let mut centre_rng = CounterRng::stream(p.seed, CENTER_STREAM);
    let centres = DMatrix::from_fn(k, p.n_classes, |_, _| centre_rng.normal());
    let a_x = mixing_matrix(k, &mut CounterRng::stream(p.seed, MIX_X_STREAM));
    let a_y = mixing_matrix(k, &mut CounterRng::stream(p.seed, MIX_Y_STREAM));

    let labels: Vec<u32> = (0..n).map(|j| (j % p.n_classes) as u32).collect();
    let mut latent_rng = CounterRng::stream(p.seed, LATENT_STREAM);
    let latent = DMatrix::from_fn(k, n, |i, j| {
        centres[(i, labels[j] as usize)] + p.noise_scale * latent_rng.normal()
    });
    let x = view(&a_x, &latent, p.d_x, p.nuisance_scale, &mut CounterRng::stream(p.seed, NUISANCE_X_STREAM));
    let y = view(&a_y, &latent, p.d_y, p.nuisance_scale, &mut CounterRng::stream(p.seed, NUISANCE_Y_STREAM));

    let full = PairedDataset::new(
        EmbeddingMatrix::new(x)?,
        EmbeddingMatrix::new(y)?,
        LabelVector::new(labels, p.n_classes as u32)?,
        (0..n as u64).map(SampleId).collect(),
    )?;
    let train_per_class = p.n_per_class.div_ceil(2);
    let (train_idx, val_idx): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|j| j / p.n_classes < train_per_class);
    Ok(SynthData {
        train: full.select(&train_idx),
        val: full.select(&val_idx),
    })
}

/// Writes both splits as `EMB1`/`LBL1`/id files under `dir` plus a
/// `manifest.json` with views `x` and `y`. Returns the manifest path.
pub fn write_manifest(data: &SynthData, dataset_id: &str, dir: &Path, precision: Precision) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::new(dataset_id);
    for (view, m) in [("x", data.train.view_x()), ("y", data.train.view_y())] {
        manifest.views.insert(
            view.into(),
            ViewEntry { model_id: format!("synth_{view}"), dim: Some(m.dim()) },
        );
    }
    for (split, ds) in [("train", &data.train), ("val", &data.val)] {
        let labels = PathBuf::from(format!("{split}.lbl1"));
        let ids = PathBuf::from(format!("{split}.ids"));
        write_labels(ds.labels(), &dir.join(&labels))?;
        write_ids(ds.sample_ids(), &dir.join(&ids))?;
        let mut views = std::collections::BTreeMap::new();
        for (view, m) in [("x", ds.view_x()), ("y", ds.view_y())] {
            let file = PathBuf::from(format!("{split}_{view}.emb1"));
            write_embeddings(m, &dir.join(&file), precision)?;
            views.insert(view.to_string(), ViewFiles { embeddings: file, ids: None });
        }
        manifest
            .splits
            .insert(split.into(), SplitEntry { labels, ids: Some(ids), views });
    }
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cca::fit_cca;

    fn small(nuisance: f64) -> SynthParams {
        SynthParams {
            k_shared: 3,
            d_x: 7,
            d_y: 5,
            n_classes: 4,
            n_per_class: 100,
            nuisance_scale: nuisance,
            noise_scale: 0.5,
            seed: 3,
        }
    }

    #[test]
    fn shapes_and_split() {
        let d = gen_two_view(&small(1.0)).unwrap();
        assert_eq!((d.train.view_x().dim(), d.train.view_y().dim()), (7, 5));
        assert_eq!((d.train.count(), d.val.count()), (200, 200));
        assert_eq!(d.train.labels().histogram(), vec![50; 4]);
        assert_eq!(d.val.labels().histogram(), vec![50; 4]);
        let overlap = d.train.sample_ids().iter().filter(|id| d.val.sample_ids().contains(id)).count();
        assert_eq!(overlap, 0);
    }

    #[test]
    fn seeded() {
        assert_eq!(gen_two_view(&small(1.0)).unwrap(), gen_two_view(&small(1.0)).unwrap());
        let other = SynthParams { seed: 4, ..small(1.0) };
        assert_ne!(gen_two_view(&small(1.0)).unwrap(), gen_two_view(&other).unwrap());
    }

    #[test]
    fn zero_nuisance_gives_exact_shared_block() {
        let d = gen_two_view(&small(0.0)).unwrap();
        let m = fit_cca(d.train.view_x(), d.train.view_y(), 1e-9).unwrap();
        let rho = m.correlations.as_slice();
        assert!(rho[..3].iter().all(|r| *r >= 1.0 - 1e-3), "{rho:?}");
        assert!(rho[3..].iter().all(|r| *r < 1e-6), "{rho:?}");
    }

    #[test]
    fn manifest_round_trip() {
        let d = gen_two_view(&small(1.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(&d, "small", dir.path(), Precision::F64).unwrap();
        let m = Manifest::load(&path).unwrap();
        assert_eq!(m.load_paired("train", "x", "y").unwrap().dataset, d.train);
        assert_eq!(m.load_paired("val", "x", "y").unwrap().dataset, d.val);
        assert_eq!(m.model_id("y").unwrap(), "synth_y");
    }

    #[test]
    fn parameter_checks() {
        for bad in [
            SynthParams { k_shared: 6, ..small(1.0) },
            SynthParams { k_shared: 0, ..small(1.0) },
            SynthParams { n_classes: 1, ..small(1.0) },
            SynthParams { noise_scale: 0.0, ..small(1.0) },
            SynthParams { nuisance_scale: -1.0, ..small(1.0) },
        ] {
            assert!(gen_two_view(&bad).is_err(), "{bad:?}");
        }
        assert!(preset("nope", 0).is_err());
        for name in PRESETS {
            preset(name, 0).unwrap().validate().unwrap();
        }
    }
}

//! Executes experiment specs cell by cell.

use std::borrow::Cow;

use rayon::prelude::*;

use super::report::{Report, ReportRow, RowKind};
use super::spec::{DataSpec, DatasetSpec, ExperimentSpec, Method, Regime, View};
use super::synth::{gen_two_view, preset};
use crate::cca::{fit_cca, project_x, project_y};
use crate::embedding_store::{
    balanced_subsample, imbalance_subsample, realized_ratio, EmbeddingMatrix, Fingerprint, Manifest,
    PairedDataset,
};
use crate::error::{Error, Result};
use crate::pca::{fit_pca, project};
use crate::probe::{evaluate, train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for independent cells. Results do not depend on it.
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { threads: 1 }
    }
}

/// One dataset with its train and val splits. Without a partner view,
/// `view_y` duplicates `view_x` and `model_y` is `None`.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub name: String,
    pub model_x: String,
    pub model_y: Option<String>,
    pub train: PairedDataset,
    pub val: PairedDataset,
    pub dropped: usize,
}

impl LoadedDataset {
    fn model(&self, view: View) -> &str {
        match view {
            View::X => &self.model_x,
            View::Y => self.model_y.as_deref().unwrap_or(""),
        }
    }

    fn partner(&self, view: View) -> &str {
        match view {
            View::X => self.model_y.as_deref().unwrap_or(""),
            View::Y => &self.model_x,
        }
    }
}

pub fn load_dataset(spec: &ExperimentSpec, ds: &DatasetSpec) -> Result<LoadedDataset> {
    match &ds.data {
        DataSpec::Files { manifest, view_x, view_y, train_split, val_split } => {
            let m = Manifest::load(&spec.resolve(manifest))?;
            let partner = view_y.as_deref().unwrap_or(view_x);
            let train = m.load_paired(train_split, view_x, partner)?;
            let val = m.load_paired(val_split, view_x, partner)?;
            Ok(LoadedDataset {
                name: ds.name.clone(),
                model_x: m.model_id(view_x)?.to_string(),
                model_y: match view_y {
                    Some(v) => Some(m.model_id(v)?.to_string()),
                    None => None,
                },
                dropped: train.dropped() + val.dropped(),
                train: train.dataset,
                val: val.dataset,
            })
        }
        DataSpec::Synthetic { preset: name, params, seed } => {
            let p = match (name, params) {
                (Some(name), None) => preset(name, *seed)?,
                (None, Some(p)) => p.clone(),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "synthetic dataset {:?} needs exactly one of preset or params",
                        ds.name
                    )))
                }
            };
            let data = gen_two_view(&p)?;
            Ok(LoadedDataset {
                name: ds.name.clone(),
                model_x: "synth_x".into(),
                model_y: Some("synth_y".into()),
                train: data.train,
                val: data.val,
                dropped: 0,
            })
        }
    }
}

fn guard(source: Fingerprint, val: &EmbeddingMatrix, what: &str) -> Result<()> {
    if source == val.fingerprint() {
        return Err(Error::Leakage(format!("{what} was fitted on the validation data")));
    }
    Ok(())
}

fn view_of(ds: &PairedDataset, view: View) -> &EmbeddingMatrix {
    match view {
        View::X => ds.view_x(),
        View::Y => ds.view_y(),
    }
}

struct Scored {
    view: View,
    accuracy: f64,
    orig_dim: usize,
    proj_dim: usize,
    rank_warning: bool,
}

/// Fits the method's transform on `train` only, projects both splits and
/// scores a probe per requested view.
fn score_method(
    train_ds: &PairedDataset,
    val_ds: &PairedDataset,
    method: Method,
    views: &[View],
    cfg: &TrainConfig,
    epsilon_rel: f64,
) -> Result<Vec<Scored>> {
    let probe = |tx: &EmbeddingMatrix, vx: &EmbeddingMatrix| -> Result<f64> {
        let p = train(tx, train_ds.labels(), cfg)?;
        evaluate(&p, vx, val_ds.labels())
    };
    let target = train_ds.view_x().dim().min(train_ds.view_y().dim());
    let mut out = Vec::with_capacity(views.len());
    match method {
        Method::Baseline => {
            for &v in views {
                let (tx, vx) = (view_of(train_ds, v), view_of(val_ds, v));
                out.push(Scored {
                    view: v,
                    accuracy: probe(tx, vx)?,
                    orig_dim: tx.dim(),
                    proj_dim: tx.dim(),
                    rank_warning: false,
                });
            }
        }
        Method::Pca => {
            for &v in views {
                let (tx, vx) = (view_of(train_ds, v), view_of(val_ds, v));
                let m = fit_pca(tx, target)?;
                guard(m.source, vx, "PCA")?;
                out.push(Scored {
                    view: v,
                    accuracy: probe(&project(&m, tx)?, &project(&m, vx)?)?,
                    orig_dim: tx.dim(),
                    proj_dim: m.k(),
                    rank_warning: false,
                });
            }
        }
        Method::Cca => {
            let m = fit_cca(train_ds.view_x(), train_ds.view_y(), epsilon_rel)?;
            guard(m.source_x(), val_ds.view_x(), "CCA view x")?;
            guard(m.source_y(), val_ds.view_y(), "CCA view y")?;
            for &v in views {
                let (tx, vx) = match v {
                    View::X => (project_x(&m, train_ds.view_x())?, project_x(&m, val_ds.view_x())?),
                    View::Y => (project_y(&m, train_ds.view_y())?, project_y(&m, val_ds.view_y())?),
                };
                out.push(Scored {
                    view: v,
                    accuracy: probe(&tx, &vx)?,
                    orig_dim: view_of(train_ds, v).dim(),
                    proj_dim: m.dim(),
                    rank_warning: m.rank_warning,
                });
            }
        }
    }
    Ok(out)
}

struct Task<'a> {
    data: &'a LoadedDataset,
    param: Option<f64>,
    method: Method,
    seed: u64,
}

fn run_task(spec: &ExperimentSpec, task: &Task<'_>) -> Result<Vec<ReportRow>> {
    let data = task.data;
    let train_ds: Cow<'_, PairedDataset> = match (spec.regime, task.param) {
        (Regime::ImbalanceSweep, Some(r)) => Cow::Owned(imbalance_subsample(&data.train, r, task.seed)?),
        (Regime::FractionSweep, Some(f)) => Cow::Owned(balanced_subsample(&data.train, f, task.seed)?),
        _ => Cow::Borrowed(&data.train),
    };
    let realized = (spec.regime == Regime::ImbalanceSweep).then(|| realized_ratio(train_ds.labels()));
    let views: Vec<View> = spec
        .score_views()
        .iter()
        .copied()
        .filter(|v| *v == View::X || data.model_y.is_some())
        .collect();
    let cfg = spec.probe.config(task.seed);
    let scored = score_method(&train_ds, &data.val, task.method, &views, &cfg, spec.epsilon_rel)?;
    Ok(scored
        .into_iter()
        .map(|s| ReportRow {
            kind: RowKind::Cell,
            dataset: data.name.clone(),
            param: task.param,
            view: s.view,
            model: data.model(s.view).to_string(),
            partner: data.partner(s.view).to_string(),
            method: task.method,
            seed: Some(task.seed),
            accuracy: s.accuracy,
            stddev: None,
            orig_dim: s.orig_dim,
            proj_dim: s.proj_dim,
            realized_ratio: realized,
            rank_warning: s.rank_warning,
        })
        .collect())
}

fn run_tasks(spec: &ExperimentSpec, tasks: &[Task<'_>], opts: &RunOptions) -> Result<Vec<ReportRow>> {
    let one = |t: &Task<'_>| {
        run_task(spec, t).map_err(|e| Error::Cell {
            method: t.method.to_string(),
            seed: t.seed,
            source: Box::new(e),
        })
    };
    let nested: Vec<Vec<ReportRow>> = match opts.threads {
        0 => return Err(Error::InvalidArgument("threads must be >= 1".into())),
        1 => tasks.iter().map(one).collect::<Result<_>>()?,
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {n} worker threads: {e}")))?
            .install(|| tasks.par_iter().map(one).collect::<Result<_>>())?,
    };
    Ok(nested.into_iter().flatten().collect())
}

fn base_report(spec: &ExperimentSpec, data: &[LoadedDataset], opts: &RunOptions) -> Report {
    let mut report = Report::new(spec.name.clone(), spec.regime);
    let cfg = spec.probe.config(0);
    report.provenance("epsilon_rel", spec.epsilon_rel);
    report.provenance(
        "probe",
        format!(
            "class={} learning_rate={} momentum={} weight_decay={} epochs={} batch_size={}",
            spec.probe.class, cfg.learning_rate, cfg.momentum, cfg.weight_decay, cfg.epochs, cfg.batch_size
        ),
    );
    let seeds: Vec<String> = spec.seeds.iter().map(u64::to_string).collect();
    report.provenance("seeds", seeds.join(" "));
    let views: Vec<&str> = spec.score_views().iter().map(|v| v.as_str()).collect();
    report.provenance("score", views.join(" "));
    report.provenance("threads", opts.threads);
    for d in data {
        report.provenance(
            format!("dataset {}", d.name),
            format!(
                "x={} y={} train={} val={} dropped={}",
                d.model_x,
                d.model_y.as_deref().unwrap_or("-"),
                d.train.count(),
                d.val.count(),
                d.dropped
            ),
        );
    }
    report
}

fn finish(mut report: Report, rows: Vec<ReportRow>) -> Report {
    let warnings = rows.iter().filter(|r| r.rank_warning).count();
    report.provenance("rank_warnings", warnings);
    report.rows = rows;
    report.aggregate();
    report
}

fn run_with(spec: &ExperimentSpec, data: &[LoadedDataset], params: &[Option<f64>], opts: &RunOptions) -> Result<Report> {
    let mut tasks = Vec::new();
    for d in data {
        for &param in params {
            for &method in &spec.methods {
                for &seed in &spec.seeds {
                    tasks.push(Task { data: d, param, method, seed });
                }
            }
        }
    }
    let rows = run_tasks(spec, &tasks, opts)?;
    Ok(finish(base_report(spec, data, opts), rows))
}

fn load_all(spec: &ExperimentSpec) -> Result<Vec<LoadedDataset>> {
    spec.validate()?;
    spec.datasets.iter().map(|d| load_dataset(spec, d)).collect()
}

/// Every (method, seed) cell on the unmodified training split.
pub fn run_comparison(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Report> {
    let data = load_all(spec)?;
    run_with(spec, &data, &[None], opts)
}

/// Comparison repeated on imbalanced subsets of the training split. The
/// validation split is never subsampled.
pub fn run_imbalance_sweep(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Report> {
    let data = load_all(spec)?;
    let params: Vec<Option<f64>> = spec.ratios.iter().copied().map(Some).collect();
    if params.is_empty() {
        return Err(Error::InvalidArgument("imbalance sweep needs ratios".into()));
    }
    run_with(spec, &data, &params, opts)
}

/// Baseline probes on balanced fractions of the training split.
pub fn run_fraction_sweep(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Report> {
    let data = load_all(spec)?;
    let params: Vec<Option<f64>> = spec.fractions.iter().copied().map(Some).collect();
    if params.is_empty() {
        return Err(Error::InvalidArgument("fraction sweep needs fractions".into()));
    }
    run_with(spec, &data, &params, opts)
}

/// Dispatches on the spec's regime.
pub fn run(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Report> {
    match spec.regime {
        Regime::ImbalanceSweep => run_imbalance_sweep(spec, opts),
        Regime::FractionSweep => run_fraction_sweep(spec, opts),
        _ => run_comparison(spec, opts),
    }
}

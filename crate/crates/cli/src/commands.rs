use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ccalign::cca::{self, CcaModel};
use ccalign::embedding_store::{
    balanced_subsample, imbalance_subsample, read_embedding_header, read_embeddings, read_labels, realized_ratio,
    write_embeddings, write_ids, write_labels, Manifest, PairedDataset, Precision, SplitEntry, ViewEntry,
    ViewFiles,
};
use ccalign::harness::{self, gen_two_view, spec::View, ExperimentSpec, RunOptions};
use ccalign::pca::{self, PcaModel};
use ccalign::probe::{self, DatasetClass, LinearProbe};
use ccalign::{Error, Result};
use serde_json::{json, Value};

use crate::{
    AlignArgs, Command, EvalProbeArgs, ExperimentCommand, ExperimentRunArgs, FitCcaArgs, FitPcaArgs, InspectArgs,
    ProjectArgs, SubsampleArgs, SynthCommand, SynthGenArgs, TrainProbeArgs,
};

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Inspect(a) => inspect(a),
        Command::Align(a) => align(a),
        Command::Subsample(a) => subsample(a),
        Command::FitCca(a) => fit_cca(a),
        Command::FitPca(a) => fit_pca(a),
        Command::Project(a) => project(a),
        Command::TrainProbe(a) => train_probe(a),
        Command::EvalProbe(a) => eval_probe(a),
        Command::Experiment { command: ExperimentCommand::Run(a) } => experiment_run(a),
        Command::Synth { command: SynthCommand::Gen(a) } => synth_gen(a),
    }
}

/// Prints `key: value` lines, or one JSON object.
fn emit(fields: &[(&str, Value)], as_json: bool) {
    if as_json {
        let map: serde_json::Map<String, Value> = fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        println!("{}", Value::Object(map));
        return;
    }
    for (k, v) in fields {
        match v {
            Value::String(s) => println!("{k}: {s}"),
            Value::Array(items) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(|i| match i {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                println!("{k}: {}", parts.join(" "));
            }
            other => println!("{k}: {other}"),
        }
    }
}

fn magic_of(path: &Path) -> Result<[u8; 4]> {
    use std::io::Read;
    let mut buf = [0u8; 4];
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut read = 0;
    while read < 4 {
        match f.read(&mut buf[read..]).map_err(|e| Error::io(path, e))? {
            0 => break,
            n => read += n,
        }
    }
    Ok(buf)
}

fn inspect(a: InspectArgs) -> Result<()> {
    let path = &a.path;
    let magic = magic_of(path)?;
    let fields: Vec<(&str, Value)> = match &magic {
        b"EMB1" => {
            let h = read_embedding_header(path)?;
            read_embeddings(path)?;
            vec![
                ("format", json!("EMB1")),
                ("version", json!(h.version)),
                ("dtype", json!(h.precision.to_string())),
                ("dim", json!(h.dim)),
                ("count", json!(h.count)),
                ("payload_bytes", json!(h.payload_bytes)),
                ("checksum", json!(format!("{:#018x}", h.checksum))),
                ("status", json!("ok")),
            ]
        }
        b"LBL1" => {
            let l = read_labels(path)?;
            vec![
                ("format", json!("LBL1")),
                ("classes", json!(l.num_classes())),
                ("count", json!(l.len())),
                ("class_counts", json!(l.histogram())),
                ("status", json!("ok")),
            ]
        }
        b"CCA1" => {
            let m = CcaModel::load(path)?;
            vec![
                ("format", json!("CCA1")),
                ("dim_x", json!(m.dim_x())),
                ("dim_y", json!(m.dim_y())),
                ("dim", json!(m.dim())),
                ("epsilon_rel", json!(m.epsilon_rel)),
                ("fit_count", json!(m.fit_count)),
                ("rank_warning", json!(m.rank_warning)),
                ("correlations", json!(m.correlations.as_slice())),
                ("status", json!("ok")),
            ]
        }
        b"PCA1" => {
            let m = PcaModel::load(path)?;
            vec![
                ("format", json!("PCA1")),
                ("dim", json!(m.dim())),
                ("k", json!(m.k())),
                ("fit_count", json!(m.fit_count)),
                ("variances", json!(m.variances.as_slice())),
                ("status", json!("ok")),
            ]
        }
        b"PRB1" => {
            let p = LinearProbe::load(path)?;
            vec![
                ("format", json!("PRB1")),
                ("classes", json!(p.num_classes())),
                ("dim", json!(p.dim())),
                ("status", json!("ok")),
            ]
        }
        _ if magic.starts_with(b"{") || magic.iter().any(|b| b.is_ascii_whitespace()) => {
            let m = Manifest::load(path)?;
            let views: Vec<String> = m.views.iter().map(|(k, v)| format!("{k}={}", v.model_id)).collect();
            let splits: Vec<&String> = m.splits.keys().collect();
            vec![
                ("format", json!("manifest")),
                ("schema_version", json!(m.schema_version)),
                ("dataset_id", json!(m.dataset_id)),
                ("views", json!(views)),
                ("splits", json!(splits)),
                ("status", json!("ok")),
            ]
        }
        _ => {
            return Err(Error::BadMagic {
                path: path.clone(),
                expected: "EMB1, LBL1, CCA1, PCA1, PRB1 or a JSON manifest".into(),
                found: String::from_utf8_lossy(&magic).into_owned(),
            })
        }
    };
    emit(&fields, a.json);
    Ok(())
}

/// Writes one split of one or two views plus a manifest into `dir`.
fn write_split(
    dir: &Path,
    source: &Manifest,
    split: &str,
    views: &[&str],
    ds: &PairedDataset,
    precision: Precision,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Manifest::new(source.dataset_id.clone());
    out.seed = source.seed;
    let labels = PathBuf::from(format!("{split}.lbl1"));
    let ids = PathBuf::from(format!("{split}.ids"));
    write_labels(ds.labels(), &dir.join(&labels))?;
    write_ids(ds.sample_ids(), &dir.join(&ids))?;
    let mut files = BTreeMap::new();
    for (name, m) in views.iter().zip([ds.view_x(), ds.view_y()]) {
        let file = PathBuf::from(format!("{split}_{name}.emb1"));
        write_embeddings(m, &dir.join(&file), precision)?;
        files.insert(name.to_string(), ViewFiles { embeddings: file, ids: None });
        out.views.insert(
            name.to_string(),
            ViewEntry { model_id: source.model_id(name)?.to_string(), dim: Some(m.dim()) },
        );
    }
    out.splits.insert(split.to_string(), SplitEntry { labels, ids: Some(ids), views: files });
    let path = dir.join("manifest.json");
    out.save(&path)?;
    Ok(path)
}

fn align(a: AlignArgs) -> Result<()> {
    let precision: Precision = a.precision.parse()?;
    let m = Manifest::load(&a.input.manifest)?;
    let outcome = m.load_paired(&a.input.split, &a.x, &a.y)?;
    let path = write_split(&a.out_dir, &m, &a.input.split, &[&a.x, &a.y], &outcome.dataset, precision)?;
    emit(
        &[
            ("kept", json!(outcome.dataset.count())),
            ("dropped_x", json!(outcome.dropped_x)),
            ("dropped_y", json!(outcome.dropped_y)),
            ("dropped_labels", json!(outcome.dropped_labels)),
            ("manifest", json!(path.display().to_string())),
        ],
        false,
    );
    Ok(())
}

fn subsample(a: SubsampleArgs) -> Result<()> {
    let precision: Precision = a.precision.parse()?;
    let m = Manifest::load(&a.input.manifest)?;
    let partner = a.y.as_deref().unwrap_or(&a.x);
    let ds = m.load_paired(&a.input.split, &a.x, partner)?.dataset;
    let subset = match (a.fraction, a.ratio) {
        (Some(f), None) => balanced_subsample(&ds, f, a.seed)?,
        (None, Some(r)) => imbalance_subsample(&ds, r, a.seed)?,
        _ => return Err(Error::InvalidArgument("give exactly one of --fraction or --ratio".into())),
    };
    let views: Vec<&str> = match &a.y {
        Some(y) => vec![&a.x, y],
        None => vec![&a.x],
    };
    let path = write_split(&a.out_dir, &m, &a.input.split, &views, &subset, precision)?;
    emit(
        &[
            ("kept", json!(subset.count())),
            ("class_counts", json!(subset.labels().histogram())),
            ("realized_ratio", json!(realized_ratio(subset.labels()))),
            ("manifest", json!(path.display().to_string())),
        ],
        false,
    );
    Ok(())
}

fn fit_cca(a: FitCcaArgs) -> Result<()> {
    let x = read_embeddings(&a.x)?;
    let y = read_embeddings(&a.y)?;
    let m = cca::fit_cca(&x, &y, a.epsilon)?;
    m.save(&a.out)?;
    emit(
        &[
            ("dim_x", json!(m.dim_x())),
            ("dim_y", json!(m.dim_y())),
            ("dim", json!(m.dim())),
            ("fit_count", json!(m.fit_count)),
            ("rank_warning", json!(m.rank_warning)),
            ("correlations", json!(m.correlations.as_slice())),
        ],
        false,
    );
    Ok(())
}

fn fit_pca(a: FitPcaArgs) -> Result<()> {
    let x = read_embeddings(&a.x)?;
    let m = pca::fit_pca(&x, a.k)?;
    m.save(&a.out)?;
    emit(
        &[("dim", json!(m.dim())), ("k", json!(m.k())), ("variances", json!(m.variances.as_slice()))],
        false,
    );
    Ok(())
}

fn project(a: ProjectArgs) -> Result<()> {
    let precision: Precision = a.precision.parse()?;
    let input = read_embeddings(&a.input)?;
    let out = match &magic_of(&a.model)? {
        b"CCA1" => {
            let m = CcaModel::load(&a.model)?;
            let view: View = a
                .view
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("--view x|y is required for CCA models".into()))?
                .parse()?;
            match view {
                View::X => cca::project_x(&m, &input)?,
                View::Y => cca::project_y(&m, &input)?,
            }
        }
        b"PCA1" => pca::project(&PcaModel::load(&a.model)?, &input)?,
        other => {
            return Err(Error::BadMagic {
                path: a.model.clone(),
                expected: "CCA1 or PCA1".into(),
                found: String::from_utf8_lossy(other).into_owned(),
            })
        }
    };
    write_embeddings(&out, &a.out, precision)?;
    emit(&[("dim", json!(out.dim())), ("count", json!(out.count()))], false);
    Ok(())
}

fn pick_view(m: &Manifest, view: Option<String>) -> Result<String> {
    if let Some(v) = view {
        return Ok(v);
    }
    let mut names = m.views.keys();
    match (names.next(), names.next()) {
        (Some(only), None) => Ok(only.clone()),
        _ => Err(Error::InvalidArgument(format!(
            "--view is required; manifest has views {:?}",
            m.views.keys().collect::<Vec<_>>()
        ))),
    }
}

fn load_view(manifest: &Path, split: &str, view: Option<String>) -> Result<PairedDataset> {
    let m = Manifest::load(manifest)?;
    let view = pick_view(&m, view)?;
    Ok(m.load_paired(split, &view, &view)?.dataset)
}

fn train_probe(a: TrainProbeArgs) -> Result<()> {
    let class: DatasetClass = a.config.parse()?;
    let ds = load_view(&a.train, &a.split, a.view)?;
    let mut cfg = probe::default_config(class).with_seed(a.seed);
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    let p = probe::train(ds.view_x(), ds.labels(), &cfg)?;
    p.save(&a.out)?;
    let train_acc = probe::evaluate(&p, ds.view_x(), ds.labels())?;
    emit(
        &[
            ("classes", json!(p.num_classes())),
            ("dim", json!(p.dim())),
            ("epochs", json!(cfg.epochs)),
            ("batch_size", json!(cfg.batch_size)),
            ("train_accuracy", json!(train_acc)),
        ],
        false,
    );
    Ok(())
}

fn eval_probe(a: EvalProbeArgs) -> Result<()> {
    let p = LinearProbe::load(&a.probe)?;
    let ds = load_view(&a.data, &a.split, a.view)?;
    let acc = probe::evaluate(&p, ds.view_x(), ds.labels())?;
    emit(&[("count", json!(ds.count())), ("accuracy", json!(acc))], false);
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn experiment_run(a: ExperimentRunArgs) -> Result<()> {
    let spec = ExperimentSpec::load(&a.spec)?;
    let report = harness::run(&spec, &RunOptions { threads: a.threads })?;
    write_file(&a.out, &report.to_csv())?;
    let text = report.to_text();
    if let Some(path) = &a.text {
        write_file(path, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn synth_gen(a: SynthGenArgs) -> Result<()> {
    let precision: Precision = a.precision.parse()?;
    let params = harness::preset(&a.preset, a.seed)?;
    let data = gen_two_view(&params)?;
    let path = harness::synth::write_manifest(&data, &a.preset, &a.out_dir, precision)?;
    emit(
        &[
            ("preset", json!(a.preset)),
            ("seed", json!(a.seed)),
            ("train", json!(data.train.count())),
            ("val", json!(data.val.count())),
            ("manifest", json!(path.display().to_string())),
        ],
        false,
    );
    Ok(())
}

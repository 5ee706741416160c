use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ccalign"))
}

/// Runs with an empty working directory so stray writes are detectable.
fn run_in(cwd: &Path, args: &[&str]) -> Output {
    bin().current_dir(cwd).args(args).output().expect("spawn ccalign")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Workspace {
    _tmp: tempfile::TempDir,
    cwd: PathBuf,
    out: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let cwd = tmp.path().join("cwd");
        let out = tmp.path().join("out");
        fs::create_dir_all(&cwd).unwrap();
        fs::create_dir_all(&out).unwrap();
        Self { _tmp: tmp, cwd, out }
    }

    fn path(&self, name: &str) -> String {
        self.out.join(name).display().to_string()
    }

    fn run(&self, args: &[&str]) -> Output {
        run_in(&self.cwd, args)
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
        stdout(&o)
    }

    fn synth(&self) -> String {
        self.ok(&["synth", "gen", "--preset", "shared8", "--seed", "0", "--out-dir", &self.path("data")]);
        self.path("data/manifest.json")
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        if !std::thread::panicking() {
            let stray: Vec<_> = fs::read_dir(&self.cwd).unwrap().collect();
            assert!(stray.is_empty(), "files written to the working directory: {stray:?}");
        }
    }
}

#[test]
fn inspect_reports_header() {
    let ws = Workspace::new();
    ws.synth();
    let out = ws.ok(&["inspect", &ws.path("data/train_x.emb1")]);
    for line in ["format: EMB1", "dtype: f64", "dim: 64", "count: 2000", "status: ok"] {
        assert!(out.lines().any(|l| l == line), "missing {line:?} in\n{out}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&ws.ok(&["inspect", "--json", &ws.path("data/train.lbl1")])).unwrap();
    assert_eq!(json["classes"], 10);
    assert_eq!(json["count"], 2000);
    let manifest = ws.ok(&["inspect", &ws.path("data/manifest.json")]);
    assert!(manifest.contains("views: x=synth_x y=synth_y"), "{manifest}");
}

#[test]
fn inspect_rejects_corruption() {
    let ws = Workspace::new();
    ws.synth();
    let path = ws.path("data/train_y.emb1");
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    fs::write(&path, &bytes).unwrap();
    let o = ws.run(&["inspect", &path]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[checksum-mismatch]: "), "{}", stderr(&o));

    fs::write(&path, b"JUNKJUNK").unwrap();
    let o = ws.run(&["inspect", &path]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[bad-magic]: "));

    let o = ws.run(&["inspect", &ws.path("missing.emb1")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[io]: "));
}

#[test]
fn fit_cca_count_mismatch_names_both_counts() {
    let ws = Workspace::new();
    let manifest = ws.synth();
    ws.ok(&[
        "subsample", "--manifest", &manifest, "--x", "x", "--ratio", "4", "--seed", "1", "--out-dir", &ws.path("sub"),
    ]);
    let o = ws.run(&[
        "fit-cca", "--x", &ws.path("sub/train_x.emb1"), "--y", &ws.path("data/train_y.emb1"), "--out", &ws.path("m.cca1"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[count-mismatch]: "), "{err}");
    assert!(err.contains("1100") && err.contains("2000"), "{err}");
    assert!(!Path::new(&ws.path("m.cca1")).exists());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let ws = Workspace::new();
    let o = ws.run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error[usage]: "), "{err}");
    assert!(err.contains("Usage:"), "{err}");
    let o = ws.run(&["fit-cca", "--x", "a.emb1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn every_subcommand_has_help_and_version() {
    let ws = Workspace::new();
    let subcommands: [&[&str]; 12] = [
        &[],
        &["inspect"],
        &["align"],
        &["subsample"],
        &["fit-cca"],
        &["fit-pca"],
        &["project"],
        &["train-probe"],
        &["eval-probe"],
        &["experiment", "run"],
        &["synth", "gen"],
        &["experiment"],
    ];
    for sub in subcommands {
        for flag in ["--help", "--version"] {
            let mut args: Vec<&str> = sub.to_vec();
            args.push(flag);
            let o = ws.run(&args);
            assert!(o.status.success(), "{args:?}: {}", stderr(&o));
            let text = stdout(&o);
            if flag == "--version" {
                assert!(text.contains(env!("CARGO_PKG_VERSION")), "{args:?}: {text}");
            } else {
                assert!(text.contains("Usage:"), "{args:?}: {text}");
            }
        }
    }
}

#[test]
fn transform_and_probe_pipeline() {
    let ws = Workspace::new();
    let manifest = ws.synth();
    let fit = ws.ok(&[
        "fit-cca", "--x", &ws.path("data/train_x.emb1"), "--y", &ws.path("data/train_y.emb1"), "--out", &ws.path("m.cca1"),
    ]);
    assert!(fit.contains("dim: 32"), "{fit}");
    ws.ok(&["project", "--model", &ws.path("m.cca1"), "--view", "y", "--in", &ws.path("data/val_y.emb1"), "--out", &ws.path("vy.emb1")]);
    assert!(ws.ok(&["inspect", &ws.path("vy.emb1")]).contains("dim: 32"));
    let o = ws.run(&["project", "--model", &ws.path("m.cca1"), "--view", "y", "--in", &ws.path("data/val_x.emb1"), "--out", &ws.path("bad.emb1")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[dim-mismatch]: "));

    ws.ok(&["fit-pca", "--x", &ws.path("data/train_x.emb1"), "--k", "8", "--out", &ws.path("m.pca1")]);
    ws.ok(&["project", "--model", &ws.path("m.pca1"), "--in", &ws.path("data/val_x.emb1"), "--out", &ws.path("px.emb1")]);
    assert!(ws.ok(&["inspect", &ws.path("m.pca1")]).contains("k: 8"));

    let train = |seed: &str, out: &str| {
        ws.ok(&["train-probe", "--train", &manifest, "--view", "y", "--config", "small", "--epochs", "20", "--seed", seed, "--out", &ws.path(out)])
    };
    train("3", "a.prb1");
    train("3", "b.prb1");
    assert_eq!(fs::read(ws.path("a.prb1")).unwrap(), fs::read(ws.path("b.prb1")).unwrap());
    let eval = ws.ok(&["eval-probe", "--probe", &ws.path("a.prb1"), "--data", &manifest, "--view", "y"]);
    let acc: f64 = eval.lines().find_map(|l| l.strip_prefix("accuracy: ")).unwrap().parse().unwrap();
    assert!(acc > 0.5, "{eval}");
    let o = ws.run(&["train-probe", "--train", &manifest, "--out", &ws.path("c.prb1")]);
    assert_eq!(o.status.code(), Some(1), "two views need --view");
}

#[test]
fn align_and_subsample_write_manifests() {
    let ws = Workspace::new();
    let manifest = ws.synth();
    let out = ws.ok(&["align", "--manifest", &manifest, "--split", "val", "--x", "x", "--y", "y", "--out-dir", &ws.path("al")]);
    assert!(out.contains("kept: 2000") && out.contains("dropped_x: 0"), "{out}");
    assert!(ws.ok(&["inspect", &ws.path("al/manifest.json")]).contains("splits: val"));
    let out = ws.ok(&[
        "subsample", "--manifest", &manifest, "--x", "x", "--y", "y", "--fraction", "0.1", "--seed", "4", "--out-dir", &ws.path("frac"),
    ]);
    assert!(out.contains("kept: 200") && out.contains("realized_ratio: 1"), "{out}");
    assert!(ws.ok(&["inspect", &ws.path("frac/train_y.emb1")]).contains("count: 200"));
    let o = ws.run(&["subsample", "--manifest", &manifest, "--x", "x", "--fraction", "0.1", "--ratio", "2", "--out-dir", &ws.path("z")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn experiment_pipeline_is_reproducible() {
    let ws = Workspace::new();
    ws.synth();
    let spec = r#"{
        "schema_version": 1,
        "name": "smoke",
        "regime": "reduce_dim",
        "datasets": [{"name": "shared8", "data": {"source": "files", "manifest": "data/manifest.json", "view_x": "x", "view_y": "y"}}],
        "methods": ["baseline", "pca", "cca"],
        "seeds": [0, 1],
        "probe": {"class": "large", "epochs": 10}
    }"#;
    fs::write(ws.path("spec.json"), spec).unwrap();
    let table = ws.ok(&["experiment", "run", "--spec", &ws.path("spec.json"), "--out", &ws.path("a.csv"), "--text", &ws.path("a.txt")]);
    ws.ok(&["experiment", "run", "--spec", &ws.path("spec.json"), "--out", &ws.path("b.csv"), "--threads", "3"]);
    ws.ok(&["experiment", "run", "--spec", &ws.path("spec.json"), "--out", &ws.path("c.csv")]);
    let a = fs::read(ws.path("a.csv")).unwrap();
    assert_eq!(a, fs::read(ws.path("c.csv")).unwrap());
    let rows = |bytes: &[u8]| -> Vec<String> {
        String::from_utf8_lossy(bytes).lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
    };
    assert_eq!(rows(&a), rows(&fs::read(ws.path("b.csv")).unwrap()));
    assert_eq!(fs::read_to_string(ws.path("a.txt")).unwrap(), table);
    assert!(table.contains("| synth_x | synth_y"), "{table}");
    assert!(table.contains("-50%"), "{table}");

    fs::write(ws.path("bad.json"), r#"{"schema_version": 1, "regime": "reduce_dim", "datasets": [], "methods": []}"#).unwrap();
    let o = ws.run(&["experiment", "run", "--spec", &ws.path("bad.json"), "--out", &ws.path("bad.csv")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[invalid-argument]: "));
}

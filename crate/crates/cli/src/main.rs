//! `ccalign` command-line interface.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ccalign", version, about = "Cross-model representation alignment with CCA", propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the header of an EMB1/LBL1/CCA1/PCA1/PRB1 file or a manifest and validate it.
    Inspect(InspectArgs),
    /// Inner-join two views and labels of a manifest split on sample id.
    Align(AlignArgs),
    /// Draw a balanced fraction or an imbalanced subset of a manifest split.
    Subsample(SubsampleArgs),
    /// Fit CCA between two sample-aligned EMB1 files.
    FitCca(FitCcaArgs),
    /// Fit a PCA projection to an EMB1 file.
    FitPca(FitPcaArgs),
    /// Apply a CCA1 or PCA1 model to an EMB1 file.
    Project(ProjectArgs),
    /// Train a linear probe on one view of a manifest split.
    TrainProbe(TrainProbeArgs),
    /// Score a linear probe on one view of a manifest split.
    EvalProbe(EvalProbeArgs),
    /// Run experiment specs.
    Experiment {
        #[command(subcommand)]
        command: ExperimentCommand,
    },
    /// Generate synthetic two-view data.
    Synth {
        #[command(subcommand)]
        command: SynthCommand,
    },
}

#[derive(Args)]
struct InspectArgs {
    path: PathBuf,
    /// Emit a JSON object instead of key: value lines.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    input: SplitArgs,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "f64")]
    precision: String,
}

#[derive(Args)]
#[group(id = "amount", required = true, multiple = false, args = ["fraction", "ratio"])]
struct SubsampleArgs {
    #[command(flatten)]
    input: SplitArgs,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: Option<String>,
    /// Keep this fraction of every class.
    #[arg(long)]
    fraction: Option<f64>,
    /// Geometric class-size profile with this max/min ratio.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "f64")]
    precision: String,
}

#[derive(Args)]
struct FitCcaArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Ridge added to each covariance, relative to its largest eigenvalue.
    #[arg(long, default_value_t = ccalign::stats::DEFAULT_EPSILON_REL)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitPcaArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Which side of a CCA model to apply (x or y).
    #[arg(long)]
    view: Option<String>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "f64")]
    precision: String,
}

#[derive(Args)]
struct TrainProbeArgs {
    /// Manifest holding the training split.
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
    /// View name; may be omitted when the manifest has a single view.
    #[arg(long)]
    view: Option<String>,
    #[arg(long, default_value = "large")]
    config: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalProbeArgs {
    #[arg(long)]
    probe: PathBuf,
    /// Manifest holding the evaluation split.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
    #[arg(long)]
    view: Option<String>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Execute a JSON experiment spec.
    Run(ExperimentRunArgs),
}

#[derive(Args)]
struct ExperimentRunArgs {
    #[arg(long)]
    spec: PathBuf,
    /// CSV report destination.
    #[arg(long)]
    out: PathBuf,
    /// Optional aligned-text report destination.
    #[arg(long)]
    text: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Write a synthetic preset as EMB1/LBL1 files plus a manifest.
    Gen(SynthGenArgs),
}

#[derive(Args)]
struct SynthGenArgs {
    #[arg(long)]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "f64")]
    precision: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let text = rendered.strip_prefix("error: ").unwrap_or(&rendered);
            eprint!("error[usage]: {text}");
            return ExitCode::from(1);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(if e.is_internal() { 2 } else { 1 })
        }
    }
}

//! Experiment regimes, synthetic data and reports.

pub mod registry;
pub mod report;
pub mod runner;
pub mod spec;
pub mod synth;

pub use report::{improvement_table, parse_csv, ImprovementRow, Report, ReportRow, RowKind};
pub use runner::{load_dataset, run, run_comparison, run_fraction_sweep, run_imbalance_sweep, LoadedDataset, RunOptions};
pub use spec::{DataSpec, DatasetSpec, ExperimentSpec, Method, ProbeSpec, Regime, ScoreView, View};
pub use synth::{gen_two_view, preset, SynthData, SynthParams};

//! JSON experiment description.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::SynthParams;
use crate::error::{Error, Result};
use crate::probe::{DatasetClass, TrainConfig};
use crate::stats::DEFAULT_EPSILON_REL;

pub const SPEC_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ReduceDim,
    SameDimRefine,
    FinetuneTransfer,
    MultiDataset,
    ImbalanceSweep,
    FractionSweep,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ReduceDim => "reduce_dim",
            Self::SameDimRefine => "same_dim_refine",
            Self::FinetuneTransfer => "finetune_transfer",
            Self::MultiDataset => "multi_dataset",
            Self::ImbalanceSweep => "imbalance_sweep",
            Self::FractionSweep => "fraction_sweep",
        }
    }

    pub fn needs_partner(self) -> bool {
        self != Self::FractionSweep
    }

    /// Views scored when the spec leaves `score` unset.
    pub fn default_score(self) -> ScoreView {
        match self {
            Self::ReduceDim | Self::FinetuneTransfer => ScoreView::X,
            _ => ScoreView::Both,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Pca,
    Cca,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::Pca, Method::Cca];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Pca => "pca",
            Self::Cca => "cca",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    X,
    Y,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::X => "x",
            Self::Y => "y",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Self::X),
            "y" => Ok(Self::Y),
            other => Err(Error::InvalidArgument(format!("unknown view '{other}' (expected x or y)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreView {
    X,
    Y,
    Both,
}

impl ScoreView {
    pub fn views(self) -> &'static [View] {
        match self {
            Self::X => &[View::X],
            Self::Y => &[View::Y],
            Self::Both => &[View::X, View::Y],
        }
    }
}

/// Probe recipe: a config class plus optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default = "default_class")]
    pub class: DatasetClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

fn default_class() -> DatasetClass {
    DatasetClass::Large
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            class: DatasetClass::Large,
            learning_rate: None,
            momentum: None,
            weight_decay: None,
            epochs: None,
            batch_size: None,
        }
    }
}

impl ProbeSpec {
    pub fn config(&self, seed: u64) -> TrainConfig {
        let base = TrainConfig::default_for(self.class);
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            momentum: self.momentum.unwrap_or(base.momentum),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Embeddings listed in a manifest. Relative manifest paths resolve
    /// against the spec file's directory.
    Files {
        manifest: PathBuf,
        view_x: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        view_y: Option<String>,
        #[serde(default = "default_train_split")]
        train_split: String,
        #[serde(default = "default_val_split")]
        val_split: String,
    },
    /// Generated data, either a named preset with a seed or explicit params.
    Synthetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params: Option<SynthParams>,
        #[serde(default)]
        seed: u64,
    },
}

fn default_train_split() -> String {
    "train".into()
}

fn default_val_split() -> String {
    "val".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub data: DataSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub regime: Regime,
    pub datasets: Vec<DatasetSpec>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub probe: ProbeSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon_rel: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ratios: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fractions: Vec<f64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON_REL
}

impl ExperimentSpec {
    /// A spec with default seeds, epsilon and probe recipe.
    pub fn new(regime: Regime, datasets: Vec<DatasetSpec>, methods: Vec<Method>) -> Self {
        Self {
            schema_version: SPEC_SCHEMA_VERSION,
            name: String::new(),
            regime,
            datasets,
            methods,
            probe: ProbeSpec::default(),
            seeds: default_seeds(),
            epsilon_rel: DEFAULT_EPSILON_REL,
            score: None,
            ratios: Vec::new(),
            fractions: Vec::new(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.base_dir = base_dir.into();
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, dir)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn score_views(&self) -> &'static [View] {
        self.score.unwrap_or_else(|| self.regime.default_score()).views()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.schema_version != SPEC_SCHEMA_VERSION {
            return bad(format!(
                "spec schema_version {} is not supported (expected {SPEC_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return bad("methods must be distinct".into());
        }
        if !(self.epsilon_rel.is_finite() && self.epsilon_rel > 0.0) {
            return bad(format!("epsilon_rel must be > 0, got {}", self.epsilon_rel));
        }
        self.probe.config(0).validate()?;
        match (self.regime, self.datasets.len()) {
            (_, 0) => return bad("datasets must be nonempty".into()),
            (Regime::MultiDataset, _) | (_, 1) => {}
            (r, n) => return bad(format!("regime {r} takes one dataset, got {n}")),
        }
        let names: BTreeSet<_> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        if names.len() != self.datasets.len() {
            return bad("dataset names must be distinct".into());
        }
        for ds in &self.datasets {
            match &ds.data {
                DataSpec::Files { view_y: None, .. } if self.regime.needs_partner() => {
                    return bad(format!("regime {} needs view_y for dataset {:?}", self.regime, ds.name));
                }
                DataSpec::Files { view_y: None, .. } if self.score == Some(ScoreView::Y) || self.score == Some(ScoreView::Both) => {
                    return bad(format!("dataset {:?} has no view_y to score", ds.name));
                }
                DataSpec::Synthetic { preset, params, .. } if preset.is_some() == params.is_some() => {
                    return bad(format!(
                        "synthetic dataset {:?} needs exactly one of preset or params",
                        ds.name
                    ));
                }
                _ => {}
            }
        }
        let needs_y = self.methods.iter().any(|m| *m != Method::Baseline);
        if needs_y && !self.regime.needs_partner() {
            return bad(format!("regime {} runs the baseline method only", self.regime));
        }
        match self.regime {
            Regime::ImbalanceSweep => {
                if self.ratios.is_empty() {
                    return bad("imbalance_sweep needs a nonempty ratios list".into());
                }
                if let Some(r) = self.ratios.iter().find(|r| !(r.is_finite() && **r >= 1.0)) {
                    return bad(format!("imbalance ratio must be >= 1, got {r}"));
                }
                check_distinct("ratios", &self.ratios)?;
            }
            Regime::FractionSweep => {
                if self.fractions.is_empty() {
                    return bad("fraction_sweep needs a nonempty fractions list".into());
                }
                if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
                    return bad(format!("fraction must lie in (0, 1], got {f}"));
                }
                check_distinct("fractions", &self.fractions)?;
            }
            _ => {}
        }
        if self.regime != Regime::ImbalanceSweep && !self.ratios.is_empty() {
            return bad(format!("ratios only apply to imbalance_sweep, not {}", self.regime));
        }
        if self.regime != Regime::FractionSweep && !self.fractions.is_empty() {
            return bad(format!("fractions only apply to fraction_sweep, not {}", self.regime));
        }
        Ok(())
    }
}

fn check_distinct(what: &str, values: &[f64]) -> Result<()> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!("duplicate entry {} in {what}", w[0])));
    }
    Ok(())
}

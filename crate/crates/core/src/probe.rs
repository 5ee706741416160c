//! Affine softmax classifier trained with momentum SGD.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::codec::{read_file, Reader, Writer};
use crate::embedding_store::{EmbeddingMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// `C × d`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl LinearProbe {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weights.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "probe needs at least 2 classes, got {}",
                weights.nrows()
            )));
        }
        if weights.ncols() == 0 {
            return Err(Error::InvalidArgument("probe input dimension is 0".into()));
        }
        if bias.len() != weights.nrows() {
            return Err(Error::DimMismatch {
                context: "probe bias".into(),
                expected: weights.nrows(),
                actual: bias.len(),
            });
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "probe parameters".into() });
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(num_classes: usize, dim: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(num_classes, dim), DVector::zeros(num_classes))
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// `W X + b 1ᵀ`, one column of logits per sample.
    pub fn logits(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }

    /// Predicted class per column. Ties go to the lowest class index.
    pub fn predict(&self, x: &EmbeddingMatrix) -> Result<Vec<u32>> {
        x.check_dim(self.dim(), "probe input")?;
        let z = self.logits(x.values());
        Ok(z.column_iter().map(|c| argmax(c.iter()) as u32).collect())
    }
}

fn argmax<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if *v > best_value {
            best = i;
            best_value = *v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetClass {
    Large,
    Small,
}

impl FromStr for DatasetClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "large" => Ok(Self::Large),
            "small" => Ok(Self::Small),
            other => Err(Error::InvalidArgument(format!(
                "unknown config class '{other}' (expected large or small)"
            ))),
        }
    }
}

impl fmt::Display for DatasetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Large => "large",
            Self::Small => "small",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn default_for(class: DatasetClass) -> Self {
        let (epochs, batch_size) = match class {
            DatasetClass::Large => (100, 128),
            DatasetClass::Small => (300, 64),
        };
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs,
            batch_size,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// A learning rate of 0 is accepted and leaves the probe at its zero
    /// initialization.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        Ok(())
    }
}

pub fn default_config(class: DatasetClass) -> TrainConfig {
    TrainConfig::default_for(class)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_w: DMatrix<f64>,
    pub grad_b: DVector<f64>,
}

fn check_batch(p: &LinearProbe, x: &DMatrix<f64>, labels: &[u32]) -> Result<()> {
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if x.nrows() != p.dim() {
        return Err(Error::DimMismatch {
            context: "probe input".into(),
            expected: p.dim(),
            actual: x.nrows(),
        });
    }
    if labels.len() != x.ncols() {
        return Err(Error::CountMismatch { x: x.ncols(), y: labels.len() });
    }
    if let Some(bad) = labels.iter().find(|l| **l as usize >= p.num_classes()) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {} classes",
            p.num_classes()
        )));
    }
    Ok(())
}

/// Turns logits into softmax probabilities in place and returns the summed
/// negative log-likelihood of `labels`.
fn softmax_nll(z: &mut DMatrix<f64>, labels: &[u32]) -> f64 {
    let mut total = 0.0;
    for (mut col, &label) in z.column_iter_mut().zip(labels) {
        let top = argmax(col.iter());
        let m = col[top];
        col.apply(|v| *v -= m);
        let rest: f64 = col.iter().enumerate().filter(|(i, _)| *i != top).map(|(_, v)| v.exp()).sum();
        let log_norm = rest.ln_1p();
        total += log_norm - col[label as usize];
        col.apply(|v| *v = (*v - log_norm).exp());
    }
    total
}

/// Mean softmax cross-entropy over the batch.
pub fn loss(p: &LinearProbe, x: &DMatrix<f64>, labels: &[u32]) -> Result<f64> {
    check_batch(p, x, labels)?;
    let mut z = p.logits(x);
    Ok(softmax_nll(&mut z, labels) / x.ncols() as f64)
}

/// Mean cross-entropy and its exact gradient. Weight decay is not included.
pub fn loss_and_grad(p: &LinearProbe, x: &DMatrix<f64>, labels: &[u32]) -> Result<LossGrad> {
    check_batch(p, x, labels)?;
    let n = x.ncols() as f64;
    let mut g = p.logits(x);
    let total = softmax_nll(&mut g, labels);
    for (j, &label) in labels.iter().enumerate() {
        g[(label as usize, j)] -= 1.0;
    }
    g /= n;
    let grad_b = DVector::from_iterator(g.nrows(), g.row_iter().map(|r| r.sum()));
    let grad_w = &g * x.transpose();
    Ok(LossGrad { loss: total / n, grad_w, grad_b })
}

fn check_dataset(x: &EmbeddingMatrix, labels: &LabelVector) -> Result<()> {
    if labels.len() != x.count() {
        return Err(Error::CountMismatch { x: x.count(), y: labels.len() });
    }
    Ok(())
}

pub fn train(x: &EmbeddingMatrix, labels: &LabelVector, cfg: &TrainConfig) -> Result<LinearProbe> {
    train_inner(x, labels, cfg, false).map(|(p, _)| p)
}

/// Same as [`train`], also returning the full training loss after each epoch.
pub fn train_with_history(
    x: &EmbeddingMatrix,
    labels: &LabelVector,
    cfg: &TrainConfig,
) -> Result<(LinearProbe, Vec<f64>)> {
    train_inner(x, labels, cfg, true)
}

fn train_inner(
    x: &EmbeddingMatrix,
    labels: &LabelVector,
    cfg: &TrainConfig,
    history: bool,
) -> Result<(LinearProbe, Vec<f64>)> {
    cfg.validate()?;
    check_dataset(x, labels)?;
    let classes = labels.num_classes() as usize;
    let mut p = LinearProbe::zeros(classes, x.dim())?;
    let mut vw = DMatrix::<f64>::zeros(classes, x.dim());
    let mut vb = DVector::<f64>::zeros(classes);
    let all = labels.as_slice();
    let mut losses = Vec::new();
    for epoch in 0..cfg.epochs {
        let order = CounterRng::stream(cfg.seed, epoch as u64).permutation(x.count());
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.values().select_columns(idx);
            let yb: Vec<u32> = idx.iter().map(|i| all[*i]).collect();
            let lg = loss_and_grad(&p, &xb, &yb)?;
            if !lg.loss.is_finite() {
                return Err(Error::Training { epoch, batch, loss: lg.loss });
            }
            vw *= cfg.momentum;
            vw += lg.grad_w + &p.weights * cfg.weight_decay;
            vb *= cfg.momentum;
            vb += lg.grad_b;
            p.weights -= &vw * cfg.learning_rate;
            p.bias -= &vb * cfg.learning_rate;
        }
        if history {
            let l = loss(&p, x.values(), all)?;
            if !l.is_finite() {
                return Err(Error::Training { epoch, batch: usize::MAX, loss: l });
            }
            losses.push(l);
        }
    }
    if p.weights.iter().chain(p.bias.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Training { epoch: cfg.epochs, batch: 0, loss: f64::NAN });
    }
    Ok((p, losses))
}

/// Fraction of samples whose predicted class equals the label.
pub fn evaluate(p: &LinearProbe, x: &EmbeddingMatrix, labels: &LabelVector) -> Result<f64> {
    check_dataset(x, labels)?;
    let predicted = p.predict(x)?;
    let hits = predicted.iter().zip(labels.as_slice()).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / x.count() as f64)
}

const PRB1_MAGIC: &[u8; 4] = b"PRB1";
const PRB1_VERSION: u32 = 1;

impl LinearProbe {
    /// `PRB1` layout: magic, version `u32`, C `u64`, d `u64`, weights
    /// (C × d, row-major) and bias (C), all `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(PRB1_MAGIC)
            .u32(PRB1_VERSION)
            .u64(self.num_classes() as u64)
            .u64(self.dim() as u64)
            .matrix(&self.weights)
            .vector(&self.bias);
        w.into_bytes()
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(path, bytes);
        r.magic(PRB1_MAGIC)?;
        r.version("PRB1", PRB1_VERSION)?;
        let c = r.usize()?;
        let d = r.usize()?;
        let weights = r.matrix(c, d)?;
        let bias = r.vector(c)?;
        Self::new(weights, bias)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(path, &read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_probe(c: usize, d: usize, rng: &mut CounterRng) -> LinearProbe {
        LinearProbe::new(
            DMatrix::from_fn(c, d, |_, _| rng.normal()),
            DVector::from_fn(c, |_, _| rng.normal()),
        )
        .unwrap()
    }

    /// Two Gaussian blobs in 2-D at (±3, 0), unit spread.
    fn blobs(n_per_class: usize, seed: u64) -> (EmbeddingMatrix, LabelVector) {
        let mut rng = CounterRng::new(seed);
        let n = 2 * n_per_class;
        let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let x = DMatrix::from_fn(2, n, |i, j| {
            let centre = if i == 0 { 6.0 * labels[j] as f64 - 3.0 } else { 0.0 };
            centre + rng.normal()
        });
        (EmbeddingMatrix::new(x).unwrap(), LabelVector::new(labels, 2).unwrap())
    }

    fn relative_error(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt() + b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if scale == 0.0 { 0.0 } else { diff / scale }
    }

    #[test]
    fn default_configs() {
        let large = default_config(DatasetClass::Large);
        assert_eq!(
            (large.learning_rate, large.momentum, large.weight_decay, large.epochs, large.batch_size),
            (0.01, 0.9, 5e-4, 100, 128)
        );
        let small = default_config(DatasetClass::Small);
        assert_eq!((small.epochs, small.batch_size), (300, 64));
        assert_eq!(
            (small.learning_rate, small.momentum, small.weight_decay),
            (large.learning_rate, large.momentum, large.weight_decay)
        );
        assert_eq!("small".parse::<DatasetClass>().unwrap(), DatasetClass::Small);
        assert!("medium".parse::<DatasetClass>().is_err());
    }

    #[test]
    fn config_validation() {
        let ok = default_config(DatasetClass::Large);
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..ok.clone() },
            TrainConfig { batch_size: 0, ..ok.clone() },
            TrainConfig { momentum: 1.0, ..ok.clone() },
            TrainConfig { learning_rate: -0.1, ..ok.clone() },
            TrainConfig { weight_decay: f64::NAN, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn zero_probe_loss_is_log_c() {
        let mut rng = CounterRng::new(1);
        let x = DMatrix::from_fn(3, 8, |_, _| rng.normal());
        let labels = [0, 1, 2, 3, 0, 0, 1, 2];
        let p = LinearProbe::zeros(4, 3).unwrap();
        let lg = loss_and_grad(&p, &x, &labels).unwrap();
        assert!((lg.loss - 4f64.ln()).abs() < 1e-15);
        let freq = [3.0 / 8.0, 2.0 / 8.0, 2.0 / 8.0, 1.0 / 8.0];
        for c in 0..4 {
            assert!((lg.grad_b[c] - (0.25 - freq[c])).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_loss() {
        let p = LinearProbe::new(DMatrix::from_row_slice(2, 1, &[10.0, -10.0]), DVector::zeros(2)).unwrap();
        let l = loss(&p, &DMatrix::from_element(1, 1, 1.0), &[0]).unwrap();
        let expected = (-20f64).exp().ln_1p();
        assert!((l - expected).abs() <= 1e-15 * expected);
        assert!((l - 2.06e-9).abs() < 1e-11);
    }

    #[test]
    fn large_logits_stay_finite() {
        let p = LinearProbe::new(DMatrix::from_row_slice(2, 1, &[1e4, -1e4]), DVector::zeros(2)).unwrap();
        let lg = loss_and_grad(&p, &DMatrix::from_element(1, 1, 1.0), &[1]).unwrap();
        assert!((lg.loss - 2e4).abs() < 1e-9);
        assert!(lg.grad_w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = CounterRng::new(2);
        let h = 1e-5;
        for _ in 0..20 {
            let c = 2 + rng.below(4) as usize;
            let d = 1 + rng.below(6) as usize;
            let b = 1 + rng.below(10) as usize;
            let p = random_probe(c, d, &mut rng);
            let x = DMatrix::from_fn(d, b, |_, _| rng.normal());
            let labels: Vec<u32> = (0..b).map(|_| rng.below(c as u64) as u32).collect();
            let lg = loss_and_grad(&p, &x, &labels).unwrap();
            let mut analytic = lg.grad_w.as_slice().to_vec();
            analytic.extend(lg.grad_b.iter());
            let mut numeric = Vec::new();
            for k in 0..(c * d + c) {
                let shifted = |delta: f64| {
                    let mut q = p.clone();
                    if k < c * d {
                        q.weights.as_mut_slice()[k] += delta;
                    } else {
                        q.bias[k - c * d] += delta;
                    }
                    loss(&q, &x, &labels).unwrap()
                };
                numeric.push((shifted(h) - shifted(-h)) / (2.0 * h));
            }
            assert!(relative_error(&analytic, &numeric) < 1e-5);
        }
    }

    #[test]
    fn batch_errors() {
        let p = LinearProbe::zeros(3, 2).unwrap();
        assert!(loss(&p, &DMatrix::zeros(2, 0), &[]).is_err());
        assert!(loss(&p, &DMatrix::zeros(3, 1), &[0]).is_err());
        assert!(loss(&p, &DMatrix::zeros(2, 2), &[0]).is_err());
        assert!(loss(&p, &DMatrix::zeros(2, 1), &[3]).is_err());
        assert!(LinearProbe::zeros(1, 2).is_err());
    }

    #[test]
    fn separable_blobs() {
        let (xt, yt) = blobs(100, 3);
        let (xv, yv) = blobs(100, 4);
        let cfg = default_config(DatasetClass::Large);
        let p = train(&xt, &yt, &cfg).unwrap();
        assert!(evaluate(&p, &xv, &yv).unwrap() >= 0.99);
    }

    #[test]
    fn epoch_losses_do_not_increase() {
        let (xt, yt) = blobs(100, 5);
        let (_, losses) = train_with_history(&xt, &yt, &default_config(DatasetClass::Large)).unwrap();
        assert_eq!(losses.len(), 100);
        for w in losses[1..].windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (xt, yt) = blobs(50, 6);
        let cfg = default_config(DatasetClass::Small).with_seed(9);
        let a = train(&xt, &yt, &cfg).unwrap();
        let b = train(&xt, &yt, &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = train(&xt, &yt, &cfg.with_seed(10)).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let (xt, yt) = blobs(20, 7);
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 1, ..default_config(DatasetClass::Large) };
        let p = train(&xt, &yt, &cfg).unwrap();
        assert_eq!(p, LinearProbe::zeros(2, 2).unwrap());
        // All logits tie, so every prediction is class 0.
        assert_eq!(evaluate(&p, &xt, &yt).unwrap(), 0.5);
    }

    #[test]
    fn evaluate_edge_cases() {
        let labels = LabelVector::new(vec![0, 1, 2, 1, 0, 2], 3).unwrap();
        let x = EmbeddingMatrix::new(DMatrix::from_fn(3, 6, |i, j| {
            if labels.as_slice()[j] as usize == i { 1.0 } else { 0.0 }
        }))
        .unwrap();
        let identity = LinearProbe::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        assert_eq!(evaluate(&identity, &x, &labels).unwrap(), 1.0);
        let zero = LinearProbe::zeros(3, 3).unwrap();
        assert_eq!(evaluate(&zero, &x, &labels).unwrap(), 2.0 / 6.0);
    }

    #[test]
    fn bias_shift_keeps_predictions() {
        let mut rng = CounterRng::new(8);
        let p = random_probe(4, 3, &mut rng);
        let x = EmbeddingMatrix::new(DMatrix::from_fn(3, 50, |_, _| rng.normal())).unwrap();
        let labels = LabelVector::new((0..50).map(|i| (i % 4) as u32).collect(), 4).unwrap();
        let mut shifted = p.clone();
        shifted.bias.add_scalar_mut(2.5);
        assert_eq!(p.predict(&x).unwrap(), shifted.predict(&x).unwrap());
        assert_eq!(evaluate(&p, &x, &labels).unwrap(), evaluate(&shifted, &x, &labels).unwrap());
    }

    #[test]
    fn non_finite_training_is_reported() {
        let x = EmbeddingMatrix::new(DMatrix::from_fn(1, 4, |_, j| 1e300 * (j as f64 + 1.0))).unwrap();
        let y = LabelVector::new(vec![0, 1, 0, 1], 2).unwrap();
        let cfg = TrainConfig { learning_rate: 1e10, ..default_config(DatasetClass::Large) };
        match train(&x, &y, &cfg) {
            Err(Error::Training { .. }) => {}
            other => panic!("expected training error, got {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let mut rng = CounterRng::new(11);
        let p = random_probe(3, 5, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.prb1");
        p.save(&path).unwrap();
        assert_eq!(LinearProbe::load(&path).unwrap(), p);
        std::fs::write(&path, &p.to_bytes()[..20]).unwrap();
        assert!(matches!(LinearProbe::load(&path), Err(Error::Truncated { .. })));
    }
}

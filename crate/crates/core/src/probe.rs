//! Binary MLP probes over frozen embeddings.
//!
//! Architecture: `D → hidden… → 1`, ramp activations on hidden layers,
//! logistic output, trained on mean binary cross-entropy by plain
//! mini-batch gradient descent. Weights start Glorot-uniform from
//! `SplitMix64::stream(seed, 0)` (row-major, layer by layer), biases at
//! zero; each epoch's visiting order is a Fisher-Yates shuffle from
//! `SplitMix64::stream(seed, 1)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Embeddings with one binary label per row.
#[derive(Debug, Clone)]
pub struct LabeledEmbeddings {
    pub set: EmbeddingSet,
    labels: Vec<u8>,
}

impl LabeledEmbeddings {
    pub fn new(set: EmbeddingSet, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != set.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} embeddings",
                labels.len(),
                set.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::Data(format!("label {} at row {i} is not 0 or 1", labels[i])));
        }
        Ok(Self { set, labels })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `outputs x inputs`, one inner vector per output unit.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    pub widths: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl MlpHead {
    /// Glorot-uniform weights, zero biases. `widths` is `[D, hidden…, 1]`.
    pub fn initialize(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) || *widths.last().unwrap() != 1 {
            return Err(Error::Shape(format!(
                "widths must be positive and end in 1, got {widths:?}"
            )));
        }
        let mut rng = SplitMix64::stream(seed, 0);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let bound = (6.0 / (inputs + outputs) as f64).sqrt();
                let weights = (0..outputs)
                    .map(|_| (0..inputs).map(|_| (2.0 * rng.next_f64() - 1.0) * bound).collect())
                    .collect();
                Layer {
                    weights,
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            layers,
        })
    }

    /// Checks that `layers` agree with `widths` and are finite.
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != self.layers.len() + 1 || self.widths.last() != Some(&1) {
            return Err(Error::Shape("head widths do not match its layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let (inputs, outputs) = (self.widths[i], self.widths[i + 1]);
            if layer.weights.len() != outputs
                || layer.bias.len() != outputs
                || layer.weights.iter().any(|r| r.len() != inputs)
            {
                return Err(Error::Shape(format!("layer {i} is not {outputs}x{inputs}")));
            }
            if layer.weights.iter().flatten().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    /// Output logit.
    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.forward(&a);
            if i + 1 < self.layers.len() {
                a.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        a[0]
    }

    /// Probability of class 1.
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.bias.len() * (l.inputs() + 1)).sum()
    }

    fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let n_w = layer.bias.len() * layer.inputs();
            if index < n_w {
                let cols = layer.inputs();
                return &mut layer.weights[index / cols][index % cols];
            }
            index -= n_w;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln σ(z) + (1-y) ln(1-σ(z))]`, evaluated without overflow.
fn bce_from_logit(z: f64, y: u8) -> f64 {
    z.max(0.0) - y as f64 * z + (-z.abs()).exp().ln_1p()
}

fn check_dims(head: &MlpHead, data: &LabeledEmbeddings) -> Result<()> {
    if head.input_dim() != data.set.dim() {
        return Err(Error::Shape(format!(
            "head expects {} inputs, embeddings have {}",
            head.input_dim(),
            data.set.dim()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy over `data`.
pub fn loss(head: &MlpHead, data: &LabeledEmbeddings) -> Result<f64> {
    check_dims(head, data)?;
    let total: f64 = data
        .set
        .rows()
        .zip(data.labels())
        .map(|(x, &y)| bce_from_logit(head.logit(x), y))
        .sum();
    Ok(total / data.len() as f64)
}

/// Gradient of the mean loss over `rows`, in the same shape as the head.
fn gradient(head: &MlpHead, data: &LabeledEmbeddings, rows: &[usize]) -> Vec<Layer> {
    let mut grads: Vec<Layer> = head
        .layers
        .iter()
        .map(|l| Layer {
            weights: vec![vec![0.0; l.inputs()]; l.bias.len()],
            bias: vec![0.0; l.bias.len()],
        })
        .collect();
    let scale = 1.0 / rows.len() as f64;
    let last = head.layers.len() - 1;
    for &r in rows {
        // Forward, keeping each layer's input and pre-activation.
        let mut inputs = Vec::with_capacity(head.layers.len());
        let mut pre = Vec::with_capacity(head.layers.len());
        let mut a = data.set.row(r).to_vec();
        for (i, layer) in head.layers.iter().enumerate() {
            let z = layer.forward(&a);
            inputs.push(a);
            a = if i < last { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
            pre.push(z);
        }
        let mut delta = vec![(sigmoid(pre[last][0]) - data.labels[r] as f64) * scale];
        for i in (0..head.layers.len()).rev() {
            let g = &mut grads[i];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                for (gw, x) in g.weights[o].iter_mut().zip(&inputs[i]) {
                    *gw += d * x;
                }
            }
            if i > 0 {
                let layer = &head.layers[i];
                delta = (0..layer.inputs())
                    .map(|j| {
                        if pre[i - 1][j] > 0.0 {
                            delta.iter().zip(&layer.weights).map(|(d, row)| d * row[j]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
    }
    grads
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512],
            epochs: 20,
            batch: 32,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

pub fn train(data: &LabeledEmbeddings, config: &TrainConfig) -> Result<MlpHead> {
    train_with_history(data, config).map(|(head, _)| head)
}

/// Trains and also returns the full-data loss after each epoch.
pub fn train_with_history(data: &LabeledEmbeddings, config: &TrainConfig) -> Result<(MlpHead, Vec<f64>)> {
    if data.len() < 2 {
        return Err(Error::Range(format!("need at least 2 samples, got {}", data.len())));
    }
    let ones = data.labels().iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == data.len() {
        return Err(Error::Data("training data must contain both classes".into()));
    }
    if config.batch == 0 || config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::Range("batch size and learning rate must be positive".into()));
    }
    let mut widths = vec![data.set.dim()];
    widths.extend(&config.hidden);
    widths.push(1);
    let mut head = MlpHead::initialize(&widths, config.seed)?;

    let mut shuffler = SplitMix64::stream(config.seed, 1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        shuffler.shuffle(&mut order);
        for batch in order.chunks(config.batch) {
            let grads = gradient(&head, data, batch);
            for (layer, g) in head.layers.iter_mut().zip(&grads) {
                for (row, grow) in layer.weights.iter_mut().zip(&g.weights) {
                    for (w, gw) in row.iter_mut().zip(grow) {
                        *w -= config.learning_rate * gw;
                    }
                }
                for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                    *b -= config.learning_rate * gb;
                }
            }
        }
        history.push(loss(&head, data)?);
    }
    head.validate()?;
    Ok((head, history))
}

/// Fraction of rows whose thresholded prediction (`p >= 0.5` → 1) matches
/// the label.
pub fn evaluate(head: &MlpHead, data: &LabeledEmbeddings) -> Result<f64> {
    check_dims(head, data)?;
    if data.is_empty() {
        return Err(Error::Range("no samples to evaluate".into()));
    }
    let correct = data
        .set
        .rows()
        .zip(data.labels())
        .filter(|(x, &y)| u8::from(head.predict(x) >= 0.5) == y)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

pub const GRADIENT_CHECK_STEP: f64 = 1e-5;
/// Denominator floor for relative errors, so parameters whose true
/// gradient is (near) zero are judged on absolute error instead.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative discrepancy between backpropagated gradients and
/// central finite differences, `|a − n| / max(|a|, |n|, floor)`.
pub fn gradient_check(head: &MlpHead, batch: &LabeledEmbeddings) -> Result<f64> {
    check_dims(head, batch)?;
    let rows: Vec<usize> = (0..batch.len()).collect();
    let analytic: Vec<f64> = gradient(head, batch, &rows)
        .into_iter()
        .flat_map(|l| l.weights.into_iter().flatten().chain(l.bias))
        .collect();
    let mut probe = head.clone();
    let mut worst = 0.0f64;
    for (p, a) in analytic.iter().enumerate() {
        let original = *probe.parameter_mut(p);
        *probe.parameter_mut(p) = original + GRADIENT_CHECK_STEP;
        let up = loss(&probe, batch)?;
        *probe.parameter_mut(p) = original - GRADIENT_CHECK_STEP;
        let down = loss(&probe, batch)?;
        *probe.parameter_mut(p) = original;
        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_STEP);
        let denom = a.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Labels from a CSV with a header: the `label` column if present,
/// otherwise the last column. Values must be 0 or 1.
pub fn parse_labels(text: &str) -> Result<Vec<u8>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("labels header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::Format("labels file has no columns".into()));
    }
    let col = headers.iter().position(|h| h == "label").unwrap_or(headers.len() - 1);
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| Error::Format(format!("labels row {}: {e}", i + 1)))?;
            match rec.get(col) {
                Some("0") => Ok(0),
                Some("1") => Ok(1),
                other => Err(Error::Data(format!("labels row {}: {other:?} is not 0 or 1", i + 1))),
            }
        })
        .collect()
}

pub fn load_labels(path: &Path) -> Result<Vec<u8>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, dim: usize, seed: u64) -> LabeledEmbeddings {
        let mut rng = SplitMix64::new(seed);
        let data: Vec<f64> = (0..n * dim).map(|_| rng.next_gaussian()).collect();
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        LabeledEmbeddings::new(EmbeddingSet::new(data, n, dim, "toy", "none").unwrap(), labels).unwrap()
    }

    fn constant_head(dim: usize, p: f64) -> MlpHead {
        let mut head = MlpHead::initialize(&[dim, 1], 0).unwrap();
        head.layers[0].weights[0].fill(0.0);
        head.layers[0].bias[0] = (p / (1.0 - p)).ln();
        head
    }

    #[test]
    fn constant_head_accuracy() {
        let data = toy(10, 3, 1);
        let ones = LabeledEmbeddings::new(data.set.clone(), vec![1; 10]).unwrap();
        let zeros = LabeledEmbeddings::new(data.set.clone(), vec![0; 10]).unwrap();
        let head = constant_head(3, 0.9);
        assert!((head.predict(data.set.row(0)) - 0.9).abs() < 1e-12);
        assert_eq!(evaluate(&head, &ones).unwrap(), 1.0);
        assert_eq!(evaluate(&head, &zeros).unwrap(), 0.0);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = toy(20, 4, 2);
        let cfg = TrainConfig { hidden: vec![5], epochs: 0, ..TrainConfig::default() };
        let head = train(&data, &cfg).unwrap();
        assert_eq!(head, MlpHead::initialize(&[4, 5, 1], cfg.seed).unwrap());
    }

    #[test]
    fn training_is_seed_deterministic() {
        let data = toy(40, 4, 3);
        let cfg = TrainConfig { hidden: vec![6], epochs: 3, batch: 8, learning_rate: 0.1, seed: 17 };
        assert_eq!(train(&data, &cfg).unwrap(), train(&data, &cfg).unwrap());
    }

    #[test]
    fn single_class_rejected() {
        let data = toy(6, 2, 4);
        let one_class = LabeledEmbeddings::new(data.set, vec![1; 6]).unwrap();
        assert!(matches!(train(&one_class, &TrainConfig::default()), Err(Error::Data(_))));
    }

    #[test]
    fn dimension_mismatch() {
        let head = constant_head(3, 0.5);
        assert!(matches!(evaluate(&head, &toy(4, 2, 0)), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_output_layer_forces_zero_hidden_gradients() {
        let data = toy(8, 3, 5);
        let mut head = MlpHead::initialize(&[3, 4, 4, 1], 9).unwrap();
        head.layers[2].weights[0].fill(0.0);
        let grads = gradient(&head, &data, &(0..8).collect::<Vec<_>>());
        for l in &grads[..2] {
            assert!(l.weights.iter().flatten().chain(&l.bias).all(|g| *g == 0.0));
        }
        assert!(gradient_check(&head, &data).unwrap() < 1e-4);
    }

    #[test]
    fn gradient_check_repeatable() {
        let data = toy(8, 5, 6);
        let head = MlpHead::initialize(&[5, 7, 3, 1], 1).unwrap();
        let e1 = gradient_check(&head, &data).unwrap();
        assert_eq!(e1, gradient_check(&head, &data).unwrap());
        assert!(e1 < 1e-4, "{e1}");
    }

    #[test]
    fn stable_loss_for_large_logits() {
        assert!((bce_from_logit(800.0, 1)).abs() < 1e-300);
        assert!((bce_from_logit(-800.0, 1) - 800.0).abs() < 1e-9);
        assert!((bce_from_logit(0.0, 0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn labels_csv() {
        assert_eq!(parse_labels("label\n0\n1\n1\n").unwrap(), vec![0, 1, 1]);
        assert_eq!(parse_labels("path,young\na,1\nb,0\n").unwrap(), vec![1, 0]);
        assert!(parse_labels("label\n2\n").is_err());
    }

    #[test]
    fn head_json_roundtrip_is_exact() {
        let head = MlpHead::initialize(&[3, 2, 1], 4).unwrap();
        let text = serde_json::to_string(&head).unwrap();
        let back: MlpHead = serde_json::from_str(&text).unwrap();
        assert_eq!(back, head);
        back.validate().unwrap();
    }
}

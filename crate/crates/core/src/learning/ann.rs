//! Single-hidden-layer classifier: standardized inputs, `tanh` hidden
//! units, softmax outputs, trained by full-batch gradient descent with a
//! backtracking line search on the per-class binary cross-entropy plus an
//! L2 penalty on the weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LearningError;

pub const HIDDEN_UNITS: usize = 10;
pub const MODEL_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub lambda_reg: f64,
    pub epochs: usize,
    pub init_range: f64,
    pub initial_step: f64,
    pub gradient_tolerance: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { lambda_reg: 1e-3, epochs: 2000, init_range: 0.1, initial_step: 1.0, gradient_tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs: usize,
}

/// Network weights plus the input standardization learned from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub schema: u32,
    pub inputs: usize,
    pub outputs: usize,
    pub hidden: usize,
    /// `W1 (hidden×inputs, row-major) | b1 | W2 (outputs×hidden) | b2`.
    pub params: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub lambda_reg: f64,
}

/// Standardized training set.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub outputs: usize,
}

struct Layout {
    inputs: usize,
    outputs: usize,
    hidden: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.hidden * self.inputs + self.hidden + self.outputs * self.hidden + self.outputs
    }
    fn b1(&self) -> usize {
        self.hidden * self.inputs
    }
    fn w2(&self) -> usize {
        self.b1() + self.hidden
    }
    fn b2(&self) -> usize {
        self.w2() + self.outputs * self.hidden
    }
    fn is_weight(&self, idx: usize) -> bool {
        idx < self.b1() || (idx >= self.w2() && idx < self.b2())
    }
}

/// Hidden activations and output logits for one standardized input.
fn forward(l: &Layout, p: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a: Vec<f64> = (0..l.hidden)
        .map(|h| {
            let row = &p[h * l.inputs..(h + 1) * l.inputs];
            (p[l.b1() + h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh()
        })
        .collect();
    let z = (0..l.outputs)
        .map(|k| {
            let row = &p[l.w2() + k * l.hidden..l.w2() + (k + 1) * l.hidden];
            p[l.b2() + k] + row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect();
    (a, z)
}

/// `(softmax, log h, log(1 − h))` computed from logits without cancellation.
fn softmax_logs(z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    let h: Vec<f64> = e.iter().map(|v| v / total).collect();
    let log_h = e.iter().map(|v| v.ln() - total.ln()).collect();
    let log_rest = e.iter().map(|v| (total - v).max(0.0).ln() - total.ln()).collect();
    (h, log_h, log_rest)
}

/// Regularized cross-entropy `H(Θ)` and its gradient.
pub fn loss_and_gradient(
    inputs: usize,
    hidden: usize,
    params: &[f64],
    data: &TrainingSet,
    lambda_reg: f64,
) -> (f64, Vec<f64>) {
    let l = Layout { inputs, outputs: data.outputs, hidden };
    let n = data.x.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; l.len()];
    for (x, &y) in data.x.iter().zip(&data.y) {
        let (a, z) = forward(&l, params, x);
        let (h, log_h, log_rest) = softmax_logs(&z);
        for k in 0..l.outputs {
            loss -= if k == y { log_h[k] } else { log_rest[k] };
        }
        // dL/dz_m = Σ_k g_k h_k (δ_km − h_m) with g_k = −1/h_k for the label
        // and 1/(1 − h_k) otherwise; h_k/(1 − h_k) uses the exact complement.
        let mut weight = vec![0.0; l.outputs];
        for k in 0..l.outputs {
            weight[k] = if k == y { -1.0 } else { (log_h[k] - log_rest[k]).exp() };
        }
        let sum_w: f64 = weight.iter().sum();
        let dz: Vec<f64> = (0..l.outputs).map(|m| (weight[m] - h[m] * sum_w) / n).collect();
        let mut da = vec![0.0; l.hidden];
        for k in 0..l.outputs {
            grad[l.b2() + k] += dz[k];
            for j in 0..l.hidden {
                grad[l.w2() + k * l.hidden + j] += dz[k] * a[j];
                da[j] += dz[k] * params[l.w2() + k * l.hidden + j];
            }
        }
        for j in 0..l.hidden {
            let dz1 = da[j] * (1.0 - a[j] * a[j]);
            grad[l.b1() + j] += dz1;
            for (c, v) in x.iter().enumerate() {
                grad[j * l.inputs + c] += dz1 * v;
            }
        }
    }
    loss /= n;
    for (idx, (g, p)) in grad.iter_mut().zip(params).enumerate() {
        if l.is_weight(idx) {
            loss += lambda_reg / (2.0 * n) * p * p;
            *g += lambda_reg / n * p;
        }
    }
    (loss, grad)
}

impl Classifier {
    /// Trains on `features`/`labels` (labels index the `outputs` classes).
    pub fn train(
        features: &[Vec<f64>],
        labels: &[usize],
        outputs: usize,
        options: &TrainOptions,
        seed: u64,
    ) -> Result<(Classifier, TrainReport), LearningError> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(LearningError::EmptyDataset);
        }
        let inputs = features[0].len();
        if features.iter().any(|f| f.len() != inputs) {
            return Err(LearningError::DimensionMismatch { expected: inputs, got: 0 });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= outputs) {
            return Err(LearningError::BadLabel { label: bad, classes: outputs });
        }
        let n = features.len() as f64;
        let mean: Vec<f64> = (0..inputs).map(|c| features.iter().map(|f| f[c]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..inputs)
            .map(|c| {
                let var = features.iter().map(|f| (f[c] - mean[c]).powi(2)).sum::<f64>() / n;
                if var.sqrt() > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut model = Classifier {
            schema: MODEL_SCHEMA,
            inputs,
            outputs,
            hidden: HIDDEN_UNITS,
            params: Vec::new(),
            mean,
            scale,
            lambda_reg: options.lambda_reg,
        };
        let layout = model.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.params = (0..layout.len()).map(|_| rng.random_range(-options.init_range..=options.init_range)).collect();
        let data = TrainingSet { x: features.iter().map(|f| model.standardize(f)).collect(), y: labels.to_vec(), outputs };

        let eval = |p: &[f64]| loss_and_gradient(inputs, HIDDEN_UNITS, p, &data, options.lambda_reg);
        let (mut loss, mut grad) = eval(&model.params);
        let initial_loss = loss;
        let mut step = options.initial_step;
        let mut epochs = 0;
        while epochs < options.epochs {
            if !loss.is_finite() {
                return Err(LearningError::NonFiniteLoss { epoch: epochs });
            }
            let g2: f64 = grad.iter().map(|g| g * g).sum();
            if g2.sqrt() <= options.gradient_tolerance {
                break;
            }
            epochs += 1;
            let accepted = loop {
                let trial: Vec<f64> = model.params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
                let (tl, tg) = eval(&trial);
                if tl.is_finite() && tl <= loss - 1e-4 * step * g2 {
                    break Some((trial, tl, tg));
                }
                step *= 0.5;
                if step < 1e-14 {
                    break None;
                }
            };
            match accepted {
                Some((p, l, g)) => {
                    model.params = p;
                    loss = l;
                    grad = g;
                    step = (step * 2.0).min(1e6);
                }
                None => break,
            }
        }
        if !loss.is_finite() {
            return Err(LearningError::NonFiniteLoss { epoch: epochs });
        }
        Ok((model, TrainReport { initial_loss, final_loss: loss, epochs }))
    }

    fn layout(&self) -> Layout {
        Layout { inputs: self.inputs, outputs: self.outputs, hidden: self.hidden }
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    /// Softmax outputs for a raw feature vector.
    pub fn posteriors(&self, x: &[f64]) -> Result<Vec<f64>, LearningError> {
        if x.len() != self.inputs {
            return Err(LearningError::DimensionMismatch { expected: self.inputs, got: x.len() });
        }
        let (_, z) = forward(&self.layout(), &self.params, &self.standardize(x));
        Ok(softmax_logs(&z).0)
    }

    /// Most probable class (lowest index on ties) and all posteriors.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), LearningError> {
        let h = self.posteriors(x)?;
        Ok((argmax(&h), h))
    }

    /// Squared norm of the weight matrices (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        let l = self.layout();
        self.params.iter().enumerate().filter(|(i, _)| l.is_weight(*i)).map(|(_, p)| p * p).sum()
    }

    /// All-zero parameters: uniform posteriors everywhere.
    pub fn zeros(inputs: usize, outputs: usize) -> Classifier {
        let l = Layout { inputs, outputs, hidden: HIDDEN_UNITS };
        Classifier {
            schema: MODEL_SCHEMA,
            inputs,
            outputs,
            hidden: HIDDEN_UNITS,
            params: vec![0.0; l.len()],
            mean: vec![0.0; inputs],
            scale: vec![1.0; inputs],
            lambda_reg: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Classifier, LearningError> {
        let m: Classifier = serde_json::from_str(text).map_err(|e| LearningError::Import(e.to_string()))?;
        let l = m.layout();
        if m.params.len() != l.len() || m.mean.len() != m.inputs || m.scale.len() != m.inputs {
            return Err(LearningError::Import("parameter count does not match the layout".into()));
        }
        Ok(m)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_is_uniform() {
        let m = Classifier::zeros(3, 4);
        let (k, h) = m.predict(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(k, 0);
        for p in h {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert!(matches!(m.predict(&[1.0]), Err(LearningError::DimensionMismatch { .. })));
    }

    #[test]
    fn single_label_dataset_predicts_that_label() {
        let x: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64, (k * k) as f64]).collect();
        let y = vec![2; 10];
        let (m, report) = Classifier::train(&x, &y, 3, &TrainOptions::default(), 4).unwrap();
        assert!(report.final_loss <= report.initial_loss);
        for f in &x {
            assert_eq!(m.predict(f).unwrap().0, 2);
        }
    }

    #[test]
    fn json_round_trip() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let (m, _) = Classifier::train(&x, &[0, 1], 2, &TrainOptions { epochs: 5, ..Default::default() }, 1).unwrap();
        assert_eq!(Classifier::from_json(&m.to_json()).unwrap(), m);
        assert!(Classifier::from_json("{}").is_err());
    }
}

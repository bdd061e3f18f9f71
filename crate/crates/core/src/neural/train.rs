use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{bce_with_logits, sigmoid};
use super::network::{LayerParams, Network, NetworkSpec};
use super::NeuralError;
use crate::datagen::FeatureScaling;

pub const MODEL_FORMAT: &str = "mipred-model";
pub const MODEL_VERSION: u32 = 1;

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Samples per update; the whole training set when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Positive-class weight per label; 1 when absent.
    #[serde(default)]
    pub pos_weight: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, learning_rate: f64, seed: u64) -> Self {
        Self {
            epochs,
            learning_rate,
            batch_size: None,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            pos_weight: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.epsilon <= 0.0
        {
            return bad("Adam needs beta1, beta2 in [0, 1) and epsilon > 0");
        }
        if let Some(w) = &self.pos_weight {
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return bad("positive weights must be finite and non-negative");
            }
        }
        Ok(())
    }
}

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub scaling: FeatureScaling,
    pub config: TrainConfig,
    /// Mean training loss per epoch.
    pub loss_log: Vec<f64>,
}

/// Rows of `features` divided by the scaling divisor.
pub fn feature_matrix(
    features: &[Vec<f64>],
    width: usize,
    scaling: &FeatureScaling,
) -> Result<DMatrix<f64>, NeuralError> {
    if let Some(f) = features.iter().find(|f| f.len() != width) {
        return Err(NeuralError::Shape(format!(
            "expected {width} features, got {}",
            f.len()
        )));
    }
    let d = if scaling.divisor > 0.0 {
        scaling.divisor
    } else {
        1.0
    };
    Ok(DMatrix::from_fn(features.len(), width, |i, j| {
        features[i][j] / d
    }))
}

pub fn label_matrix(labels: &[Vec<u8>], width: usize) -> Result<DMatrix<f64>, NeuralError> {
    if let Some(l) = labels.iter().find(|l| l.len() != width) {
        return Err(NeuralError::Shape(format!(
            "expected {width} labels, got {}",
            l.len()
        )));
    }
    Ok(DMatrix::from_fn(labels.len(), width, |i, j| {
        labels[i][j] as f64
    }))
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Trains a freshly initialised network with Adam on binary cross-entropy.
/// Initial weights, batch order and dropout masks all come from
/// `config.seed`.
pub fn train(
    spec: &NetworkSpec,
    features: &[Vec<f64>],
    labels: &[Vec<u8>],
    scaling: &FeatureScaling,
    config: &TrainConfig,
) -> Result<TrainedModel, NeuralError> {
    config.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(NeuralError::Shape(format!(
            "{} feature rows and {} label rows",
            features.len(),
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut network = Network::init(spec.clone(), &mut rng)?;
    let k = network.output_width();
    let x = feature_matrix(features, spec.input_width, scaling)?;
    let y = label_matrix(labels, k)?;
    let pos_weight = match &config.pos_weight {
        Some(w) if w.len() == k => w.clone(),
        Some(w) => {
            return Err(NeuralError::Config(format!(
                "{} positive weights for {k} labels",
                w.len()
            )))
        }
        None => vec![1.0; k],
    };
    let n = x.nrows();
    let batch = config.batch_size.unwrap_or(n).min(n);
    let mut params = network.flat_params();
    let mut adam = Adam::new(params.len(), config);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let (xb, yb) = if batch == n {
                (x.clone(), y.clone())
            } else {
                (select_rows(&x, chunk), select_rows(&y, chunk))
            };
            let (logits, cache) = network.forward_cached(&xb, Some(&mut rng))?;
            let (loss, dlogits) = bce_with_logits(&logits, &yb, &pos_weight)?;
            if !loss.is_finite() {
                return Err(NeuralError::Diverged {
                    epoch: epoch + 1,
                    loss,
                });
            }
            epoch_loss += loss * chunk.len() as f64 / n as f64;
            let grad = network.backward(&cache, &dlogits);
            adam.step(&mut params, &grad);
            network.set_flat_params(&params);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NeuralError::Diverged {
                epoch: epoch + 1,
                loss: f64::NAN,
            });
        }
        loss_log.push(epoch_loss);
    }
    Ok(TrainedModel {
        network,
        scaling: scaling.clone(),
        config: config.clone(),
        loss_log,
    })
}

impl TrainedModel {
    pub fn spec(&self) -> &NetworkSpec {
        &self.network.spec
    }

    /// Logits for raw (unscaled) feature rows, in evaluation mode.
    pub fn logits(&self, features: &[Vec<f64>]) -> Result<DMatrix<f64>, NeuralError> {
        let x = feature_matrix(features, self.network.input_width(), &self.scaling)?;
        self.network.forward(&x, None)
    }

    pub fn predict_batch(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, NeuralError> {
        let z = self.logits(features)?;
        Ok(z.row_iter()
            .map(|r| r.iter().map(|&v| sigmoid(v)).collect())
            .collect())
    }

    pub fn predict_probabilities(&self, features: &[f64]) -> Result<Vec<f64>, NeuralError> {
        Ok(self.predict_batch(&[features.to_vec()])?.remove(0))
    }

    /// Labels at a 0.5 threshold.
    pub fn predict_labels(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<u8>>, NeuralError> {
        Ok(self
            .predict_batch(features)?
            .into_iter()
            .map(|p| p.into_iter().map(|v| u8::from(v >= 0.5)).collect())
            .collect())
    }

    pub fn to_json(&self) -> Result<String, NeuralError> {
        let layers = self
            .network
            .params
            .iter()
            .map(|p| match p {
                LayerParams::Affine { w, b } => Some(StoredLayer {
                    rows: w.nrows(),
                    cols: w.ncols(),
                    weights: w.transpose().as_slice().to_vec(),
                    bias: b.as_slice().to_vec(),
                }),
                LayerParams::None => None,
            })
            .collect();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            spec: self.network.spec.clone(),
            scaling: self.scaling.clone(),
            config: self.config.clone(),
            loss_log: self.loss_log.clone(),
            layers,
        };
        serde_json::to_string_pretty(&file).map_err(|e| NeuralError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| NeuralError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(NeuralError::Version {
                expected: format!("{MODEL_FORMAT} v{MODEL_VERSION}"),
                found: format!("{} v{}", file.format, file.version),
            });
        }
        let params = file
            .layers
            .into_iter()
            .map(|l| match l {
                Some(l) => {
                    if l.weights.len() != l.rows * l.cols {
                        return Err(NeuralError::Format(
                            "weight count does not match its shape".into(),
                        ));
                    }
                    Ok(LayerParams::Affine {
                        w: DMatrix::from_row_slice(l.rows, l.cols, &l.weights),
                        b: DVector::from_vec(l.bias),
                    })
                }
                None => Ok(LayerParams::None),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let network = Network::from_params(file.spec, params)?;
        if network.flat_params().iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::Format("non-finite parameter".into()));
        }
        Ok(Self {
            network,
            scaling: file.scaling,
            config: file.config,
            loss_log: file.loss_log,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct StoredLayer {
    rows: usize,
    cols: usize,
    /// Row-major, `rows` = fan-in.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    spec: NetworkSpec,
    scaling: FeatureScaling,
    config: TrainConfig,
    loss_log: Vec<f64>,
    layers: Vec<Option<StoredLayer>>,
}

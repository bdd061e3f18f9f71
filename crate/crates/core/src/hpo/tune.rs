use serde::{Deserialize, Serialize};

use super::bo::{bo_run, BoConfig, BoResult, Evaluation, HyperSpace};
use super::HpoError;
use crate::datagen::{LabeledDataset, Split};
use crate::metrics::sample_accuracy;
use crate::neural::{train, NetworkSpec, TrainConfig, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Ann,
    Cnn,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Ann => "ann",
            Architecture::Cnn => "cnn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ann" => Some(Architecture::Ann),
            "cnn" => Some(Architecture::Cnn),
            _ => None,
        }
    }

    pub fn space(self, epochs: (f64, f64)) -> HyperSpace {
        match self {
            Architecture::Ann => HyperSpace::ann(epochs),
            Architecture::Cnn => HyperSpace::cnn(epochs),
        }
    }
}

/// Training hyperparameters; fields an architecture does not use are
/// ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub hidden_layers: usize,
    pub neurons: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default)]
    pub dropout1: f64,
    #[serde(default)]
    pub dropout2: f64,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            neurons: 64,
            learning_rate: 1e-3,
            epochs: 500,
            dropout1: 0.0,
            dropout2: 0.0,
            batch_size: None,
        }
    }
}

impl HyperParams {
    /// Copy with every dimension named in `space` taken from `theta`.
    pub fn with_theta(&self, space: &HyperSpace, theta: &[f64]) -> Result<Self, HpoError> {
        let mut out = self.clone();
        for (d, &v) in space.dims.iter().zip(theta) {
            match d.name.as_str() {
                "hidden_layers" => out.hidden_layers = v as usize,
                "neurons" => out.neurons = v as usize,
                "learning_rate" => out.learning_rate = v,
                "epochs" => out.epochs = v as usize,
                "dropout1" => out.dropout1 = v,
                "dropout2" => out.dropout2 = v,
                other => return Err(HpoError::Space(format!("unknown dimension {other}"))),
            }
        }
        Ok(out)
    }

    pub fn network(&self, arch: Architecture, input: usize, outputs: usize) -> NetworkSpec {
        match arch {
            Architecture::Ann => NetworkSpec::ann(input, self.hidden_layers, self.neurons, outputs),
            Architecture::Cnn => NetworkSpec::cnn(input, outputs, self.dropout1, self.dropout2),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let mut c = TrainConfig::new(self.epochs, self.learning_rate, seed);
        c.batch_size = self.batch_size;
        c
    }
}

/// Features and labels of one split.
pub fn split_arrays(ds: &LabeledDataset, split: Split) -> (Vec<Vec<f64>>, Vec<Vec<u8>>) {
    ds.subset(split)
        .into_iter()
        .map(|i| (i.features.clone(), i.labels.clone()))
        .unzip()
}

/// Trains on the train split.
pub fn train_on_dataset(
    ds: &LabeledDataset,
    arch: Architecture,
    params: &HyperParams,
    seed: u64,
) -> Result<TrainedModel, crate::neural::NeuralError> {
    let (x, y) = split_arrays(ds, Split::Train);
    let spec = params.network(arch, ds.feature_width(), ds.num_labels());
    train(&spec, &x, &y, &ds.scaling, &params.train_config(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneSettings {
    pub architecture: Architecture,
    /// Epoch range searched.
    pub epochs: (f64, f64),
    /// Values for the dimensions that are not searched.
    pub base: HyperParams,
    pub bo: BoConfig,
    /// Seed of every training run, so the objective is deterministic.
    pub train_seed: u64,
}

/// Maximises test-split sample accuracy of a network trained on the train
/// split.
pub fn tune_network(
    ds: &LabeledDataset,
    settings: &TuneSettings,
    on_eval: impl FnMut(&Evaluation),
) -> Result<(HyperSpace, BoResult), HpoError> {
    let (xt, yt) = split_arrays(ds, Split::Test);
    if xt.is_empty() || ds.indices(Split::Train).is_empty() {
        return Err(HpoError::Data(
            "tuning needs nonempty train and test splits".into(),
        ));
    }
    let space = settings.architecture.space(settings.epochs);
    let objective = |theta: &[f64]| -> Result<f64, String> {
        let params = settings
            .base
            .with_theta(&space, theta)
            .map_err(|e| e.to_string())?;
        let model = train_on_dataset(ds, settings.architecture, &params, settings.train_seed)
            .map_err(|e| e.to_string())?;
        let pred = model.predict_labels(&xt).map_err(|e| e.to_string())?;
        sample_accuracy(&yt, &pred).map_err(|e| e.to_string())
    };
    let result = bo_run(objective, &space, &settings.bo, on_eval)?;
    Ok((space, result))
}

//! From-scratch mean-aggregation message-passing network with hand-derived
//! gradients, plus the training loop and the LLM-free inference path.

mod checkpoint;
mod model;
mod optimizer;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{forward, loss_and_gradients, DropoutCtx, ForwardPass};
pub use optimizer::{Optimizer, OptimizerKind};
pub use train::{predict, predict_enhanced, train, EpochMetrics, TrainOutput};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Lane};

/// One layer's learnable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// `in_dim x out_dim`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// The full parameter stack. Layer dims chain: `d0 -> d1 -> ... -> dL` with
/// `d0` the embedding dim and `dL` the class count.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters {
    pub layers: Vec<LayerParams>,
}

impl ModelParameters {
    /// Uniform Glorot initialization, deterministic in `run_seed`.
    pub fn glorot_init(dims: &[usize], run_seed: u64) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut rng = keyed_rng(run_seed, Lane::Init, 0, l as u64, 0);
                let weight = Array2::from_shape_fn((fan_in, fan_out), |_| {
                    rng.random_range(-bound..bound)
                });
                LayerParams {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `[d0, d1, ..., dL]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.layers.iter().map(|l| l.weight.nrows()).collect();
        dims.push(self.layers.last().map_or(0, |l| l.weight.ncols()));
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Validation("model has no layers".into()));
        }
        for (l, pair) in self.layers.windows(2).enumerate() {
            if pair[0].weight.ncols() != pair[1].weight.nrows() {
                return Err(Error::Validation(format!(
                    "layer {l} output dim {} does not feed layer {} input dim {}",
                    pair[0].weight.ncols(),
                    l + 1,
                    pair[1].weight.nrows()
                )));
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.ncols() {
                return Err(Error::Validation(format!(
                    "layer {l} bias len {} != out dim {}",
                    layer.bias.len(),
                    layer.weight.ncols()
                )));
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("layer {l} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Per-layer gradients, shaped like the parameters they correspond to.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrads>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

/// Training hyperparameters. Defaults are the standard settings for citation
/// benchmarks; everything is overridable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerChoice,
    pub dropout_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            hidden_dim: 256,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            epochs: 300,
            batch_size: 512,
            seed: 0,
            optimizer: OptimizerChoice::Adam,
            dropout_rate: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::Argument("num_layers must be at least 1".into()));
        }
        if self.hidden_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Argument(
                "hidden_dim, epochs, and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Argument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Argument("weight_decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Argument(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// `[d0, hidden, ..., num_classes]` for this config.
    pub fn dims(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        for _ in 1..self.num_layers {
            dims.push(self.hidden_dim);
        }
        dims.push(num_classes);
        dims
    }
}

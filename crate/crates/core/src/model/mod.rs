//! End-to-end model: configuration, parameters, forward pass, loss,
//! optimizer, training loop and checkpointing.

mod adam;
mod checkpoint;
mod forward;
mod gradcheck;
mod params;
mod train;

pub use adam::{adam_step, clip_global_norm};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use forward::{
    forward, predict_sequence, sequence_loss, trace_loss, ForwardTrace, Mode, PredictionStep,
    PredictionTrace, StepTrace,
};
pub use gradcheck::{gradcheck_model, GradCheckDims};
pub use params::{LiveParams, Param, ParamSet, PARAM_NAMES};
pub use train::{train, EpochLog, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which parts of the architecture are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Stage-aware cell plus the stage-adaptive convolutional module.
    #[default]
    Full,
    /// Master gates pinned to ones and the convolutional module bypassed:
    /// a standard LSTM predicting from the hidden state alone.
    PlainLstm,
}

/// All hyperparameters. Shapes derive from `n_features`, `hidden`, `chunk`,
/// `window` and `bottleneck`; the rest steer training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature dimension of each visit record.
    pub n_features: usize,
    /// Hidden size; also the number of convolution kernels (the residual
    /// connection requires them to match).
    pub hidden: usize,
    /// Cell-state dimensions sharing one master-gate entry. The master
    /// gates live in dimension `hidden / chunk`.
    pub chunk: usize,
    /// Observation window length for the convolutional module.
    pub window: usize,
    /// Squeeze-excite bottleneck width.
    pub bottleneck: usize,
    pub dropout_p: f64,
    pub dropconnect_p: f64,
    /// Time intervals are divided by this before entering the cell.
    pub delta_scale: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Predictions are clamped to `[label_clip, 1 - label_clip]` inside the
    /// loss.
    pub label_clip: f64,
    /// Sequences longer than this keep only their most recent steps.
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub ablation: Ablation,
}

fn default_max_len() -> usize {
    400
}

impl ModelConfig {
    /// Desk-scale defaults for a given feature dimension.
    pub fn with_features(n_features: usize) -> Self {
        ModelConfig {
            n_features,
            hidden: 24,
            chunk: 4,
            window: 10,
            bottleneck: 12,
            dropout_p: 0.3,
            dropconnect_p: 0.3,
            delta_scale: 1.0,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 20,
            batch_size: 16,
            seed: 42,
            label_clip: 1e-7,
            max_len: default_max_len(),
            ablation: Ablation::Full,
        }
    }

    /// Master-gate dimension `hidden / chunk`.
    pub fn master_dim(&self) -> usize {
        self.hidden / self.chunk
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_features == 0 {
            return bad("n_features must be at least 1".into());
        }
        if self.hidden == 0 || self.chunk == 0 {
            return bad("hidden and chunk must be at least 1".into());
        }
        if self.hidden % self.chunk != 0 {
            return bad(format!(
                "hidden ({}) must be divisible by chunk ({})",
                self.hidden, self.chunk
            ));
        }
        if self.hidden / self.chunk < 2 {
            return bad(format!(
                "master-gate dimension hidden/chunk = {}/{} must be at least 2",
                self.hidden, self.chunk
            ));
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.bottleneck == 0 || self.bottleneck >= self.hidden {
            return bad(format!(
                "bottleneck ({}) must lie in [1, hidden) = [1, {})",
                self.bottleneck, self.hidden
            ));
        }
        for (name, p) in [("dropout_p", self.dropout_p), ("dropconnect_p", self.dropconnect_p)] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} ({p}) must lie in [0, 1)"));
            }
        }
        if !(self.delta_scale > 0.0) {
            return bad(format!("delta_scale ({}) must be positive", self.delta_scale));
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate ({}) must be positive", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} ({b}) must lie in [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps ({}) must be positive", self.adam_eps));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.label_clip > 0.0 && self.label_clip < 0.5) {
            return bad(format!("label_clip ({}) must lie in (0, 0.5)", self.label_clip));
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1".into());
        }
        Ok(())
    }
}

//! Per-point MLP contact classifier: model, weighted cross-entropy, AdamW training with
//! up-axis rotation augmentation, rotation-averaged prediction and checkpoints.

mod checkpoint;
mod mlp;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, TensorInfo, CHECKPOINT_VERSION};
pub use mlp::{softmax_rows, weighted_cross_entropy, Dense, HiddenLayer, MlpModel, Mode, BN_EPSILON, BN_MOMENTUM, PRELU_INIT};
pub use train::{
    grad_check, grad_check_with, predict, predict_rows, rotated_features, rotation_about_up, train, AdamW, EpochStats,
    GraspExample, TrainOutcome, TrainingSet, GRAD_CHECK_PARAMS, GRAD_CHECK_STEP,
};

use crate::contact::ContactError;
use crate::features::FeatureError;
use crate::handmodel::HandModelError;

pub const LEARNING_RATES: [f64; 3] = [5e-4, 1e-3, 5e-3];
pub const HIDDEN_UNITS: usize = 90;

#[derive(Debug, thiserror::Error)]
pub enum LearnerError {
    #[error("feature dimension {actual} does not match model input {expected}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("{labels} labels for {rows} rows")]
    LabelCount { rows: usize, labels: usize },
    #[error("training data has no complete batch")]
    NoData,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite in epoch {epoch}; last good model returned")]
    NonFiniteLoss { epoch: usize, checkpoint: Box<MlpModel> },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    HandModel(#[from] HandModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Adam first-moment decay.
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled (AdamW) weight decay.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Early-stopping patience in epochs, applied when validation data is given.
    pub patience: usize,
    pub seed: u64,
    pub rotation_step_deg: f64,
    pub hidden: Vec<usize>,
    /// Class-weight mixing with the uniform distribution.
    pub lambda: f64,
    /// Apply occlusion dropout when building features.
    pub dropout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 5e-4,
            batch_size: 25,
            epochs: 100,
            patience: 10,
            seed: 0,
            rotation_step_deg: 30.0,
            hidden: vec![HIDDEN_UNITS],
            lambda: crate::contact::DEFAULT_LAMBDA,
            dropout: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidConfig(m.to_string()));
        if !LEARNING_RATES.contains(&self.learning_rate) {
            return bad("learning rate must be one of 5e-4, 1e-3, 5e-3");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("moment decays must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0 && self.weight_decay >= 0.0) {
            return bad("epsilon must be positive and weight decay non-negative");
        }
        if self.batch_size < 2 || self.epochs == 0 || self.patience == 0 {
            return bad("batch size must be at least 2; epochs and patience positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("at least one non-empty hidden layer is required");
        }
        let turns = 360.0 / self.rotation_step_deg;
        if !(self.rotation_step_deg > 0.0) || (turns - turns.round()).abs() > 1e-9 {
            return bad("rotation step must divide 360 degrees");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn rotations(&self) -> usize {
        (360.0 / self.rotation_step_deg).round() as usize
    }

    /// FNV-1a of the canonical JSON form, as hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in json {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

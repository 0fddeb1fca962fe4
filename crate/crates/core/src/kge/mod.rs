//! Knowledge graph embedding: tables, scoring functions, the
//! self-adversarial negative sampling loss, sparse Adam, local training and
//! filtered link-prediction evaluation.

mod adam;
mod eval;
mod loss;
mod score;
mod table;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub use adam::{adam_step, adam_step_except, update_row as adam_update_row, AdamConfig, AdamState};
pub use eval::{evaluate_ranking, weighted_metrics, RankingResult};
pub use loss::{
    backward as backward_scores, check_sample as check_sample_bounds, forward as forward_scores,
    log_sigmoid, sample_batch, sample_loss as sample_loss_terms, self_adversarial_loss,
    self_adversarial_loss_into, softmax, Corruption, Gradients, Sample, SampleScores,
};
pub use score::{relation_repr, score, score_repr, score_repr_grad};
pub use table::{init_embeddings, EmbeddingTable};
pub use train::{local_train, train_epoch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KgeMethod {
    TransE,
    RotatE,
    ComplEx,
}

impl KgeMethod {
    /// Width of an entity row (`D_e`): complex-space methods store real and
    /// imaginary halves side by side.
    pub fn entity_width(self, dim: usize) -> usize {
        match self {
            KgeMethod::TransE => dim,
            KgeMethod::RotatE | KgeMethod::ComplEx => 2 * dim,
        }
    }

    /// Width of a stored relation row. RotatE stores one phase per coordinate.
    pub fn relation_width(self, dim: usize) -> usize {
        match self {
            KgeMethod::TransE | KgeMethod::RotatE => dim,
            KgeMethod::ComplEx => 2 * dim,
        }
    }

    pub fn is_complex(self) -> bool {
        !matches!(self, KgeMethod::TransE)
    }
}

impl fmt::Display for KgeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KgeMethod::TransE => "transe",
            KgeMethod::RotatE => "rotate",
            KgeMethod::ComplEx => "complex",
        })
    }
}

impl FromStr for KgeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(KgeMethod::TransE),
            "rotate" => Ok(KgeMethod::RotatE),
            "complex" => Ok(KgeMethod::ComplEx),
            other => Err(Error::Config(format!("unknown kge_method {other:?}"))),
        }
    }
}

/// Local training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Margin γ.
    pub gamma: f64,
    /// Initialization width ε.
    pub epsilon: f64,
    /// Self-adversarial temperature α.
    pub adv_temperature: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub negatives: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 8.0,
            epsilon: 2.0,
            adv_temperature: 1.0,
            learning_rate: 1e-4,
            batch_size: 512,
            local_epochs: 3,
            negatives: 16,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.gamma > 0.0, InvalidArgument, "gamma must be > 0");
        ensure!(self.adv_temperature > 0.0, InvalidArgument, "adv_temperature must be > 0");
        ensure!(self.batch_size >= 1, InvalidArgument, "batch_size must be >= 1");
        ensure!(self.learning_rate > 0.0, InvalidArgument, "learning_rate must be > 0");
        ensure!(self.epsilon >= 0.0, InvalidArgument, "epsilon must be >= 0");
        Ok(())
    }

    /// Half-width of the uniform initialization interval, `(γ + ε) / D`.
    pub fn init_bound(&self, dim: usize) -> f64 {
        (self.gamma + self.epsilon) / dim as f64
    }
}

//! Audio prompt tuning: initialize class prompts from averaged encoder
//! embeddings, then optimize only those prompt vectors against the frozen
//! separator on simulated mixtures.

mod bank;
mod tune;

pub use bank::{init_prompts, init_prompts_random, mean_embeddings, PromptBank, Provenance};
pub use tune::{joint_finetune, tune_prompts, TuneConfig, TuneStats};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AptError {
    #[error("class {class_id} has no enrollment samples")]
    EmptyClass { class_id: usize },
    #[error("tuning requires a bank with initial provenance")]
    BankNotInitial,
    #[error("class {class_id} is not available to the bank/manifest pairing")]
    ClassNotInBank { class_id: usize },
    #[error("non-finite loss at optimizer step {step}; run aborted")]
    NonFiniteLoss { step: usize },
    #[error("invalid tuning config: {0}")]
    BadConfig(String),
    #[error("prompt payload: {0}")]
    BadPayload(String),
    #[error("model: {0}")]
    Model(#[from] crate::models::ModelError),
    #[error("corpus: {0}")]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// Trainable parameter count of a bank: K x D.
pub fn count_trainable(bank: &PromptBank) -> usize {
    bank.count_trainable()
}

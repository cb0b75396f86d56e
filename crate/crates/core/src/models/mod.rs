//! Desk-scale backbones: the sound-event encoder, the prompt-conditioned
//! separator, checkpoint serialization, and backbone pretraining.

mod adam;
mod checkpoint;
mod init;
mod pretrain;
mod sed;
mod trainer;
mod uss;

pub use adam::Adam;
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, NamedTensor, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use pretrain::{
    enrollment_embeddings, heldout_accuracy, pretrain_backbone, PretrainConfig, PretrainStats,
};
pub use sed::{
    bind_sed, build_sed_graph, center_crop, sed_forward, sed_logits, SedDims, SedGraph, SedMode,
    SedModel, SED_CHANNELS,
};
pub use trainer::{SepJob, SepResult, SepTrainer};
pub use uss::{
    bind_sep, build_sep_graph, prepare_sep_input, separate, SepGraph, SepInput, SepMode, TrainSet,
    UssDims, UssModel, USS_CHANNELS,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input length {got}, expected {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("dimension {got}, expected {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint format version {got}, this build reads {want}")]
    VersionMismatch { got: u32, want: u32 },
    #[error("non-finite loss at step {step}")]
    Divergence { step: usize },
    #[error("checkpoint is missing tensor `{0}`")]
    MissingTensor(String),
    #[error("class {class_id} is not in the classifier head")]
    ClassNotInHead { class_id: usize },
    #[error("no enrollment embedding for class {class_id}, sample {sample_index}")]
    MissingEmbedding { class_id: usize, sample_index: usize },
    #[error("grad: {0}")]
    Grad(#[from] crate::grad::GradError),
    #[error("dsp: {0}")]
    Dsp(#[from] crate::dsp::DspError),
    #[error("corpus: {0}")]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

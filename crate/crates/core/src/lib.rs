//! Desk-scale laboratory for query-conditioned sound separation with
//! tunable class prompts.
//!
//! The pipeline: synthesize a deterministic audio corpus with a seen /
//! unseen class split, pretrain a small classification encoder and a
//! prompt-conditioned masking separator on the seen classes, initialize
//! per-class prompt vectors from averaged encoder embeddings, then
//! optimize only those prompts against the frozen separator on simulated
//! two-source mixtures, and quantify the gain over the zero-shot
//! embeddings with median-SDR reports.

pub mod apt;
pub mod corpus;
pub mod dsp;
pub mod eval;
pub mod grad;
pub mod models;
pub mod rng;

pub use apt::{AptError, PromptBank, TuneConfig};
pub use eval::{EvalError, EvalReport};
pub use corpus::{CorpusError, CorpusManifest, MixtureExample};
pub use dsp::{DspConfig, DspError, MelSpec, Spectrogram, Waveform};
pub use grad::{Graph, GradError, Tensor};
pub use models::{Checkpoint, ModelError, SedModel, UssModel};
pub use rng::Rng;

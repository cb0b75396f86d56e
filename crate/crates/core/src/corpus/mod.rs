//! Deterministic synthetic corpus: class generators, manifests, nested
//! few-shot subsets, and mixture simulation.

mod fewshot;
mod gen;
mod manifest;
mod mix;
mod spec;

pub use fewshot::sample_fewshot;
pub use gen::gen_class_sample;
pub use manifest::{
    build_corpus, CorpusCache, CorpusConfig, CorpusEntry, CorpusManifest, TRAIN_FRACTION,
};
pub use mix::{
    fixed_test_pairs, pair_and_mix, ClassMixtureStream, MixtureExample, MixtureStream, Pool,
};
pub use spec::{default_classes, ClassSpec, GeneratorKind, Split};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate class id {0}")]
    DuplicateClassId(usize),
    #[error("classes {a} and {b} of family {family} have overlapping parameter ranges")]
    OverlappingRanges { family: &'static str, a: usize, b: usize },
    #[error("requested {shots} shots but only {available} train samples per class exist")]
    ShotsTooLarge { shots: usize, available: usize },
    #[error("mixture simulation needs at least two classes")]
    FewerThanTwoClasses,
    #[error("crop of {crop_len} samples exceeds clip length {clip_len}")]
    CropTooLong { crop_len: usize, clip_len: usize },
    #[error("no corpus entry for class {class_id}, sample {sample_index}")]
    MissingEntry { class_id: usize, sample_index: usize },
    #[error("dsp: {0}")]
    Dsp(#[from] crate::dsp::DspError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

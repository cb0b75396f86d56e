//! Quantitative evaluation: SDR, median aggregation, per-class reports,
//! the ideal-ratio-mask ceiling, and deterministic 2-D projections.

mod oracle;
mod projection;
mod report;
mod sdr;

pub use oracle::{apply_ideal_mask, ideal_mask_oracle};
pub use projection::{
    emit_projection, project_embeddings, PcaBasis, ProjPoint, ProjectionSet, Role,
};
pub use report::{
    emit_report, evaluate_system, improved_classes, load_report, ClassReport, EvalReport,
    ReportFormat, SystemLabel,
};
pub use sdr::{median, sdr};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length {got}, expected {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("median of an empty list")]
    EmptyList,
    #[error("test mixture's target class {class_id} is missing from the bank")]
    MissingClass { class_id: usize },
    #[error("projection needs at least 3 distinct embeddings, got {distinct}")]
    RankDeficient { distinct: usize },
    #[error("model: {0}")]
    Model(#[from] crate::models::ModelError),
    #[error("grad: {0}")]
    Grad(#[from] crate::grad::GradError),
    #[error("dsp: {0}")]
    Dsp(#[from] crate::dsp::DspError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

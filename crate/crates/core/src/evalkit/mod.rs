//! Evaluation metrics for retrieval, localisation and classification.

mod classify;
mod mcq;
mod temporal;

pub use classify::{accuracy, binary_accuracy, pnr_error, summarize_pnr, PnrSummary};
pub use mcq::{argmax_first, mcq_accuracy, McqAccuracy, McqKind, McqQuestion, DEFAULT_MCQ_OPTIONS};
pub use temporal::{
    mean_average_precision_iou, recall_at_k_iou, temporal_iou, GroundTruthSegment, MapReport,
    ScoredSpan, Span, TemporalPrediction,
};

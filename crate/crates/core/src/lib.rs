//! Action-aware, scene-aware video-text contrastive learning at desk scale.
//!
//! * [`corpus`]: narration ingestion, noun/verb tagging, clip pairing and the
//!   temporal adjacency index used for scene negatives.
//! * [`egonce`]: the contrastive objective, its InfoNCE baseline and exact
//!   gradients with a finite-difference verifier.
//! * [`trainer`]: projection heads, Adam, synthetic corpora, the training
//!   loop and the classification transfer heads.
//! * [`evalkit`]: MCQ accuracy, recall@k at IoU, mAP@IoU, classification
//!   accuracy and PNR localisation error.

pub mod corpus;
pub mod egonce;
pub mod error;
pub mod evalkit;
pub mod gradcheck;
pub mod linalg;
pub mod precise;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::Matrix;

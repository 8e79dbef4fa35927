//! Projection-head training over precomputed features, synthetic corpora and
//! classification transfer heads.

mod data;
mod head;
pub mod io;
mod optim;
mod step;
mod train;
mod transfer;

pub use data::{generate_synthetic_corpus, ClusterLabel, FeatureCorpus, SyntheticCorpus, SyntheticCorpusSpec};
pub use head::{HeadCache, HeadGradients, ProjectionHead, DEFAULT_EMBED_DIM};
pub use optim::{Adam, AdamConfig, DEFAULT_LEARNING_RATE};
pub use step::{
    loss_and_gradients, numeric_param_gradient, param_gradcheck, train_step, BatchSampler,
    DualGradients, DualHeads, Objective, SceneFeatures, StepConfig, TrainBatch,
};
pub use train::{
    build_mcq_templates, evaluate_mcq, seeded_stream, select_best, train, EpochCheckpoint,
    McqTemplate, TrainConfig, TrainOutcome,
};
pub use transfer::{
    finetune_classifier, finetune_with, FinetuneResult, TransferHead, TransferTask, PNR_POSITIONS,
};

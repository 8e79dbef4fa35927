use super::data::FeatureCorpus;
use super::optim::{Adam, AdamConfig};
use super::step::{train_step, BatchSampler, DualHeads, Objective, StepConfig};
use super::head::DEFAULT_EMBED_DIM;
use crate::egonce::{AnchorSet, EmbeddingMatrix, DEFAULT_TAU};
use crate::corpus::DEFAULT_MAX_GAP_SEC;
use crate::error::{Error, Result};
use crate::evalkit::{mcq_accuracy, McqAccuracy, McqKind, McqQuestion, DEFAULT_MCQ_OPTIONS};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// RNG stream ids derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_MCQ: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_SCENE: u64 = 4;

pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub objective: Objective,
    pub anchors: AnchorSet,
    pub max_gap_sec: f64,
    pub embed_dim: usize,
    pub optimizer: AdamConfig,
    /// Fraction of videos held out for MCQ evaluation.
    pub heldout_fraction: f64,
    pub mcq_options: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 10,
            batch_size: 64,
            tau: DEFAULT_TAU,
            objective: Objective::Egonce,
            anchors: AnchorSet::Augmented,
            max_gap_sec: DEFAULT_MAX_GAP_SEC,
            embed_dim: DEFAULT_EMBED_DIM,
            optimizer: AdamConfig::default(),
            heldout_fraction: 0.2,
            mcq_options: DEFAULT_MCQ_OPTIONS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.max_gap_sec.is_finite() && self.max_gap_sec > 0.0) {
            return Err(Error::Config(format!("max_gap_sec must be positive, got {}", self.max_gap_sec)));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be positive".into()));
        }
        if self.mcq_options < 2 {
            return Err(Error::Config("mcq_options must be at least 2".into()));
        }
        self.optimizer.validate()
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            objective: self.objective,
            tau: self.tau,
            anchors: self.anchors,
        }
    }
}

/// A question over held-out corpus rows: text of `query` against the video
/// of each candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct McqTemplate {
    pub query: usize,
    pub candidates: Vec<usize>,
    pub answer_index: usize,
    pub kind: McqKind,
}

/// One inter-video and one intra-video question per held-out clip. Distractors
/// are clips whose narration shares no action with the query; a question is
/// skipped when too few such clips exist.
pub fn build_mcq_templates<R: Rng + ?Sized>(
    corpus: &FeatureCorpus,
    options: usize,
    rng: &mut R,
) -> Vec<McqTemplate> {
    let pairs = corpus.pairs();
    let mut out = Vec::new();
    for (q, pair) in pairs.iter().enumerate() {
        for kind in [McqKind::InterVideo, McqKind::IntraVideo] {
            let pool: Vec<usize> = (0..pairs.len())
                .filter(|&j| {
                    let same_video = pairs[j].video_id() == pair.video_id();
                    let wanted = match kind {
                        McqKind::InterVideo => !same_video,
                        McqKind::IntraVideo => same_video && j != q,
                    };
                    wanted && !pairs[j].tags().shares_action(pair.tags())
                })
                .collect();
            if pool.len() < options - 1 {
                continue;
            }
            let mut candidates: Vec<usize> = pool.choose_multiple(rng, options - 1).copied().collect();
            let answer_index = rng.random_range(0..options);
            candidates.insert(answer_index, q);
            out.push(McqTemplate {
                query: q,
                candidates,
                answer_index,
                kind,
            });
        }
    }
    out
}

fn embed(heads: &DualHeads, corpus: &FeatureCorpus) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    Ok((
        heads.video.forward(corpus.video_features())?,
        heads.text.forward(corpus.text_features())?,
    ))
}

pub fn evaluate_mcq(heads: &DualHeads, corpus: &FeatureCorpus, templates: &[McqTemplate]) -> Result<McqAccuracy> {
    let (video, text) = embed(heads, corpus)?;
    let questions: Vec<McqQuestion> = templates
        .iter()
        .map(|t| McqQuestion {
            query: text.row(t.query).to_vec(),
            candidates: t.candidates.iter().map(|&c| video.row(c).to_vec()).collect(),
            answer_index: t.answer_index,
            kind: t.kind,
        })
        .collect();
    Ok(mcq_accuracy(&questions))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochCheckpoint {
    pub epoch: usize,
    pub heads: DualHeads,
    /// Mean training loss over the epoch; absent for the initialisation.
    pub mean_loss: Option<f64>,
    pub mcq: McqAccuracy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Epoch 0 is the initialisation.
    pub checkpoints: Vec<EpochCheckpoint>,
    pub best_epoch: usize,
    pub step_losses: Vec<f64>,
    /// Metrics log, one JSON object per line.
    pub log: Vec<String>,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochCheckpoint {
        &self.checkpoints[self.best_epoch]
    }

    pub fn log_text(&self) -> String {
        let mut s = self.log.join("\n");
        s.push('\n');
        s
    }
}

/// Earliest epoch with the highest intra-video accuracy.
pub fn select_best(checkpoints: &[EpochCheckpoint]) -> usize {
    let mut best = 0;
    for (i, c) in checkpoints.iter().enumerate() {
        let score = c.mcq.intra.unwrap_or(f64::NEG_INFINITY);
        if score > checkpoints[best].mcq.intra.unwrap_or(f64::NEG_INFINITY) {
            best = i;
        }
    }
    best
}

/// Runs `config.epochs` epochs over the training videos, evaluating MCQ
/// accuracy on the held-out videos after initialisation and every epoch.
/// `provenance` is echoed verbatim into the config line of the log.
pub fn train(
    config: &TrainConfig,
    corpus: &FeatureCorpus,
    provenance: serde_json::Value,
) -> Result<TrainOutcome> {
    config.validate()?;
    let (train_set, heldout) =
        corpus.split_by_video(config.heldout_fraction, &mut seeded_stream(config.seed, STREAM_SPLIT))?;
    if heldout.is_empty() {
        return Err(Error::Config("the held-out split is empty".into()));
    }
    if train_set.is_empty() && config.epochs > 0 {
        return Err(Error::Config("the training split is empty".into()));
    }
    let templates = build_mcq_templates(&heldout, config.mcq_options, &mut seeded_stream(config.seed, STREAM_MCQ));
    if templates.is_empty() {
        return Err(Error::Config(format!(
            "the held-out split supports no {}-option question",
            config.mcq_options
        )));
    }

    let mut log = Vec::new();
    log.push(
        json!({
            "event": "config",
            "config": config,
            "input": provenance,
            "split": {
                "train_clips": train_set.len(),
                "heldout_clips": heldout.len(),
                "heldout_videos": heldout.videos().len(),
                "mcq_questions": templates.len(),
            },
            "notes": {
                "warmup": "none",
                "weight_decay": "none",
                "lr_schedule": "constant",
            },
        })
        .to_string(),
    );

    let mut heads = DualHeads::random(
        &mut seeded_stream(config.seed, STREAM_INIT),
        corpus.video_dim(),
        corpus.text_dim(),
        config.embed_dim,
    );
    let mut adam = Adam::new(config.optimizer, &heads.tensor_sizes())?;
    let step_cfg = config.step_config();
    let sampler = BatchSampler::new(&train_set, config.max_gap_sec)?;
    let mut shuffle_rng = seeded_stream(config.seed, STREAM_SHUFFLE);
    let mut scene_rng = seeded_stream(config.seed, STREAM_SCENE);

    let mut checkpoints = Vec::with_capacity(config.epochs + 1);
    let mcq = evaluate_mcq(&heads, &heldout, &templates)?;
    log.push(json!({"event": "epoch", "epoch": 0, "mean_loss": null, "mcq": mcq}).to_string());
    checkpoints.push(EpochCheckpoint {
        epoch: 0,
        heads: heads.clone(),
        mean_loss: None,
        mcq,
    });

    let mut step_losses = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let scene = match config.objective {
                Objective::Egonce => Some(&mut scene_rng),
                Objective::Infonce => None,
            };
            let batch = sampler.batch(chunk, scene)?;
            let loss = train_step(&mut heads, &batch, &step_cfg, &mut adam)?;
            log.push(
                json!({
                    "event": "step",
                    "epoch": epoch,
                    "step": step_losses.len(),
                    "loss": loss.total,
                    "v2t": loss.v2t,
                    "t2v": loss.t2v,
                    "anchors": loss.anchors,
                    "missing_partners": loss.missing_partners,
                })
                .to_string(),
            );
            step_losses.push(loss.total);
            sum += loss.total;
            steps += 1;
        }
        let mean_loss = (steps > 0).then(|| sum / steps as f64);
        let mcq = evaluate_mcq(&heads, &heldout, &templates)?;
        log.push(json!({"event": "epoch", "epoch": epoch, "mean_loss": mean_loss, "mcq": mcq}).to_string());
        checkpoints.push(EpochCheckpoint {
            epoch,
            heads: heads.clone(),
            mean_loss,
            mcq,
        });
    }
    let best_epoch = select_best(&checkpoints);
    log.push(
        json!({
            "event": "best",
            "epoch": best_epoch,
            "criterion": "highest intra-video MCQ accuracy, earliest epoch on ties",
            "mcq": checkpoints[best_epoch].mcq,
        })
        .to_string(),
    );
    Ok(TrainOutcome {
        checkpoints,
        best_epoch,
        step_losses,
        log,
    })
}

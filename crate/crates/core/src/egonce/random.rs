use super::{l2_normalize, AugmentedBatch, EmbeddingMatrix, ScenePartners, DEFAULT_NORM_EPSILON};
use crate::corpus::ActionTags;
use crate::linalg::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Shape of a random [`AugmentedBatch`] for property tests and gradient checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomBatchSpec {
    pub batch_size: usize,
    pub dim: usize,
    /// Probability that a batch row gets a scene partner; 0 disables partners.
    pub partner_probability: f64,
    /// Tags are drawn from `n0..n{nouns}` and `v0..v{verbs}`; each row gets
    /// up to two of each, possibly none.
    pub noun_vocab: usize,
    pub verb_vocab: usize,
}

impl Default for RandomBatchSpec {
    fn default() -> Self {
        Self {
            batch_size: 4,
            dim: 8,
            partner_probability: 0.5,
            noun_vocab: 4,
            verb_vocab: 3,
        }
    }
}

pub fn random_unit_rows<R: Rng + ?Sized>(rng: &mut R, rows: usize, dim: usize) -> EmbeddingMatrix {
    let data: Vec<f64> = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
    let raw = EmbeddingMatrix::raw(Matrix::from_vec(rows, dim, data).expect("sized"));
    l2_normalize(&raw, DEFAULT_NORM_EPSILON).embeddings
}

pub fn random_tags<R: Rng + ?Sized>(rng: &mut R, nouns: usize, verbs: usize) -> ActionTags {
    let mut pick = |prefix: &str, vocab: usize| -> Vec<String> {
        if vocab == 0 {
            return Vec::new();
        }
        let count = rng.random_range(0..=2usize);
        (0..count)
            .map(|_| format!("{prefix}{}", rng.random_range(0..vocab)))
            .collect()
    };
    let n = pick("n", nouns);
    let v = pick("v", verbs);
    ActionTags::new(n, v)
}

pub fn random_batch<R: Rng + ?Sized>(rng: &mut R, spec: &RandomBatchSpec) -> AugmentedBatch {
    let n = spec.batch_size;
    let video = random_unit_rows(rng, n, spec.dim);
    let text = random_unit_rows(rng, n, spec.dim);
    let tags = (0..n)
        .map(|_| random_tags(rng, spec.noun_vocab, spec.verb_vocab))
        .collect();
    let scene = (spec.partner_probability > 0.0).then(|| ScenePartners {
        video: random_unit_rows(rng, n, spec.dim),
        text: random_unit_rows(rng, n, spec.dim),
        present: (0..n)
            .map(|_| rng.random_bool(spec.partner_probability.min(1.0)))
            .collect(),
        tags: (0..n)
            .map(|_| random_tags(rng, spec.noun_vocab, spec.verb_vocab))
            .collect(),
    });
    AugmentedBatch::new(video, text, tags, scene).expect("consistent random batch")
}

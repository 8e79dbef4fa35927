use crate::corpus::{
    pair_clip, ActionTags, ClipTextPair, NarrationRecord, SceneAdjacencyIndex, TaggedNarration,
    DEFAULT_WINDOW_SEC,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

/// Clip-text pairs with precomputed video and text features, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCorpus {
    pairs: Vec<ClipTextPair>,
    video: Matrix,
    text: Matrix,
}

impl FeatureCorpus {
    pub fn new(pairs: Vec<ClipTextPair>, video: Matrix, text: Matrix) -> Result<Self> {
        if video.rows() != pairs.len() || text.rows() != pairs.len() {
            return Err(Error::Shape(format!(
                "{} pairs but {} video and {} text feature rows",
                pairs.len(),
                video.rows(),
                text.rows()
            )));
        }
        if video.cols() == 0 || text.cols() == 0 {
            return Err(Error::Shape("feature dimension must be positive".into()));
        }
        if !(video.is_finite() && text.is_finite()) {
            return Err(Error::Validation("features must be finite".into()));
        }
        let mut seen = BTreeSet::new();
        for p in &pairs {
            if !seen.insert(p.pair_id.as_str()) {
                return Err(Error::Validation(format!("duplicate pair_id {:?}", p.pair_id)));
            }
        }
        Ok(Self { pairs, video, text })
    }

    /// Aligns feature rows keyed by pair id with `pairs`.
    pub fn from_keyed(
        pairs: Vec<ClipTextPair>,
        video: (&[String], &Matrix),
        text: (&[String], &Matrix),
    ) -> Result<Self> {
        fn align(pairs: &[ClipTextPair], ids: &[String], m: &Matrix, what: &str) -> Result<Matrix> {
            if ids.len() != m.rows() {
                return Err(Error::Shape(format!(
                    "{what} features: {} ids for {} rows",
                    ids.len(),
                    m.rows()
                )));
            }
            let index: HashMap<&str, usize> =
                ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
            let rows = pairs
                .iter()
                .map(|p| {
                    index.get(p.pair_id.as_str()).copied().ok_or_else(|| {
                        Error::Lookup(format!("no {what} features for pair {:?}", p.pair_id))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(m.select_rows(&rows))
        }
        let v = align(&pairs, video.0, video.1, "video")?;
        let t = align(&pairs, text.0, text.1, "text")?;
        Self::new(pairs, v, t)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[ClipTextPair] {
        &self.pairs
    }

    pub fn video_features(&self) -> &Matrix {
        &self.video
    }

    pub fn text_features(&self) -> &Matrix {
        &self.text
    }

    pub fn video_dim(&self) -> usize {
        self.video.cols()
    }

    pub fn text_dim(&self) -> usize {
        self.text.cols()
    }

    pub fn pair_ids(&self) -> Vec<String> {
        self.pairs.iter().map(|p| p.pair_id.clone()).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureCorpus {
        FeatureCorpus {
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            video: self.video.select_rows(indices),
            text: self.text.select_rows(indices),
        }
    }

    /// Distinct video ids in first-appearance order.
    pub fn videos(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.pairs
            .iter()
            .map(|p| p.video_id())
            .filter(|v| seen.insert(*v))
            .collect()
    }

    /// Holds out `round(fraction · videos)` whole videos, chosen with `rng`.
    /// Returns `(train, held_out)`.
    pub fn split_by_video<R: Rng + ?Sized>(
        &self,
        heldout_fraction: f64,
        rng: &mut R,
    ) -> Result<(FeatureCorpus, FeatureCorpus)> {
        if !(0.0..=1.0).contains(&heldout_fraction) {
            return Err(Error::Config(format!(
                "heldout_fraction must lie in [0, 1], got {heldout_fraction}"
            )));
        }
        let mut videos = self.videos();
        videos.shuffle(rng);
        let k = (heldout_fraction * videos.len() as f64).round() as usize;
        let held: BTreeSet<&str> = videos[..k].iter().copied().collect();
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, p) in self.pairs.iter().enumerate() {
            if held.contains(p.video_id()) {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        Ok((self.subset(&train), self.subset(&test)))
    }
}

/// Parameters of a generated corpus with known noun/verb cluster structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub num_videos: usize,
    pub clips_per_video: usize,
    pub noun_cluster_count: usize,
    pub verb_cluster_count: usize,
    pub feature_dim: usize,
    /// Standard deviation of the per-coordinate Gaussian noise around a centroid.
    pub noise: f64,
    pub seed: u64,
    /// Gap between consecutive narrations of a video.
    pub clip_spacing_sec: f64,
    /// Give every clip its own noun and verb so no two clips share an action.
    pub unique_tags: bool,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            num_videos: 20,
            clips_per_video: 30,
            noun_cluster_count: 4,
            verb_cluster_count: 3,
            feature_dim: 32,
            noise: 1.5,
            seed: 0,
            clip_spacing_sec: 10.0,
            unique_tags: false,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_videos", self.num_videos),
            ("clips_per_video", self.clips_per_video),
            ("noun_cluster_count", self.noun_cluster_count),
            ("verb_cluster_count", self.verb_cluster_count),
            ("feature_dim", self.feature_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config(format!("noise must be non-negative, got {}", self.noise)));
        }
        if !(self.clip_spacing_sec.is_finite() && self.clip_spacing_sec > 0.0) {
            return Err(Error::Config(format!(
                "clip_spacing_sec must be positive, got {}",
                self.clip_spacing_sec
            )));
        }
        Ok(())
    }

    pub fn cluster_count(&self) -> usize {
        self.noun_cluster_count * self.verb_cluster_count
    }

    pub fn clip_count(&self) -> usize {
        self.num_videos * self.clips_per_video
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterLabel {
    pub noun: usize,
    pub verb: usize,
}

impl ClusterLabel {
    /// Row of this cluster in the centroid matrices.
    pub fn index(&self, verb_cluster_count: usize) -> usize {
        self.noun * verb_cluster_count + self.verb
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub spec: SyntheticCorpusSpec,
    pub corpus: FeatureCorpus,
    pub labels: Vec<ClusterLabel>,
    /// One row per cluster, indexed by [`ClusterLabel::index`].
    pub video_centroids: Matrix,
    pub text_centroids: Matrix,
    pub adjacency: SceneAdjacencyIndex,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// Builds a corpus whose video and text features are cluster centroids plus
/// Gaussian noise. Cluster labels are spread evenly over clips and shuffled,
/// so every cluster is used whenever there are at least as many clips as
/// clusters.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.feature_dim;
    let clusters = spec.cluster_count();
    let video_centroids = gaussian_matrix(&mut rng, clusters, d, 1.0);
    let text_centroids = gaussian_matrix(&mut rng, clusters, d, 1.0);

    let n = spec.clip_count();
    let mut assignment: Vec<usize> = (0..n).map(|i| i % clusters).collect();
    assignment.shuffle(&mut rng);
    let labels: Vec<ClusterLabel> = assignment
        .iter()
        .map(|&c| ClusterLabel {
            noun: c / spec.verb_cluster_count,
            verb: c % spec.verb_cluster_count,
        })
        .collect();

    let mut video = gaussian_matrix(&mut rng, n, d, spec.noise);
    let mut text = gaussian_matrix(&mut rng, n, d, spec.noise);
    for (i, &c) in assignment.iter().enumerate() {
        video
            .row_mut(i)
            .iter_mut()
            .zip(video_centroids.row(c))
            .for_each(|(x, m)| *x += m);
        text.row_mut(i)
            .iter_mut()
            .zip(text_centroids.row(c))
            .for_each(|(x, m)| *x += m);
    }

    let duration = spec.clips_per_video as f64 * spec.clip_spacing_sec;
    let mut pairs = Vec::with_capacity(n);
    for (i, label) in labels.iter().enumerate() {
        let v = i / spec.clips_per_video;
        let j = i % spec.clips_per_video;
        let (noun, verb) = if spec.unique_tags {
            (format!("noun{i}"), format!("verb{i}"))
        } else {
            (format!("noun{}", label.noun), format!("verb{}", label.verb))
        };
        let record = NarrationRecord::new(
            format!("video{v:03}"),
            (j as f64 + 0.5) * spec.clip_spacing_sec,
            format!("#C C {verb} the {noun}"),
        )?;
        let narration = TaggedNarration {
            record,
            tags: ActionTags::new([noun], [verb]),
        };
        let id = format!("video{v:03}#{j}");
        pairs.push(pair_clip(&narration, id, DEFAULT_WINDOW_SEC, duration)?);
    }
    let adjacency = SceneAdjacencyIndex::build(&pairs)?;
    Ok(SyntheticCorpus {
        spec: spec.clone(),
        corpus: FeatureCorpus::new(pairs, video, text)?,
        labels,
        video_centroids,
        text_centroids,
        adjacency,
    })
}

//! The action-aware, scene-aware contrastive objective.
//!
//! Loss values are negative mean log-ratios, so lower is better and every
//! per-anchor term is non-negative. See [`EgoNce`] for the anchor-set and
//! scene-partner conventions.

mod loss;
mod mask;
mod random;

pub use loss::{
    egonce_t2v, egonce_total, egonce_v2t, finite_difference_check, infonce, AnchorSet,
    BatchGradients, DirectionalLoss, EgoNce, LossResult, DEFAULT_TAU,
};
pub use mask::{build_positive_mask, PositiveMask};
pub use random::{random_batch, random_tags, random_unit_rows, RandomBatchSpec};

use crate::corpus::ActionTags;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

/// Row-norm tolerance for matrices flagged as normalised.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_NORM_EPSILON: f64 = 1e-12;

/// `N × d` embeddings, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    values: Matrix,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Wraps raw values without any normalisation claim.
    pub fn raw(values: Matrix) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    /// Wraps rows that are already unit-norm, verifying the claim.
    pub fn from_unit_rows(values: Matrix) -> Result<Self> {
        for (i, row) in values.iter_rows().enumerate() {
            let n = norm(row);
            if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "row {i} has norm {n}, expected unit norm"
                )));
            }
        }
        Ok(Self {
            values,
            normalized: true,
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }
}

/// Output of [`l2_normalize`]: the normalised matrix and how many rows hit the
/// epsilon guard.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub embeddings: EmbeddingMatrix,
    pub zero_rows: usize,
}

/// Divides each row by `max(‖row‖, epsilon)`.
pub fn l2_normalize(m: &EmbeddingMatrix, epsilon: f64) -> Normalized {
    let mut values = m.values.clone();
    let mut zero_rows = 0;
    for i in 0..values.rows() {
        let row = values.row_mut(i);
        let n = norm(row);
        if n <= epsilon {
            zero_rows += 1;
        }
        let denom = n.max(epsilon);
        row.iter_mut().for_each(|x| *x /= denom);
    }
    Normalized {
        embeddings: EmbeddingMatrix {
            values,
            normalized: true,
        },
        zero_rows,
    }
}

/// `S[i][j] = anchors[i] · targets[j]`.
pub fn similarity_matrix(anchors: &EmbeddingMatrix, targets: &EmbeddingMatrix) -> Result<Matrix> {
    if anchors.dim() != targets.dim() {
        return Err(Error::Shape(format!(
            "anchor dim {} differs from target dim {}",
            anchors.dim(),
            targets.dim()
        )));
    }
    if !(anchors.is_normalized() && targets.is_normalized()) {
        return Err(Error::InvalidInput(
            "similarity_matrix expects normalised embeddings".into(),
        ));
    }
    let mut out = Matrix::zeros(anchors.rows(), targets.rows());
    for i in 0..anchors.rows() {
        for j in 0..targets.rows() {
            out[(i, j)] = dot(anchors.row(i), targets.row(j));
        }
    }
    Ok(out)
}

/// Scene-negative partners `i′` of a batch. Row `i` holds the partner of batch
/// row `i` when `present[i]`; absent rows are ignored entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePartners {
    pub video: EmbeddingMatrix,
    pub text: EmbeddingMatrix,
    pub present: Vec<bool>,
    pub tags: Vec<ActionTags>,
}

/// Which rows of a batch occupy the augmented set, in order: all batch rows,
/// then present partners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRef {
    Batch(usize),
    Partner(usize),
}

/// A batch `B` plus its optional scene partners, together forming `B̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedBatch {
    video: EmbeddingMatrix,
    text: EmbeddingMatrix,
    tags: Vec<ActionTags>,
    scene: Option<ScenePartners>,
}

impl AugmentedBatch {
    pub fn new(
        video: EmbeddingMatrix,
        text: EmbeddingMatrix,
        tags: Vec<ActionTags>,
        scene: Option<ScenePartners>,
    ) -> Result<Self> {
        let n = video.rows();
        let d = video.dim();
        if text.rows() != n || text.dim() != d {
            return Err(Error::Shape(format!(
                "video is {n}x{d} but text is {}x{}",
                text.rows(),
                text.dim()
            )));
        }
        if tags.len() != n {
            return Err(Error::Shape(format!("{} tag rows for {n} batch rows", tags.len())));
        }
        if !(video.is_normalized() && text.is_normalized()) {
            return Err(Error::InvalidInput("batch embeddings must be normalised".into()));
        }
        if let Some(s) = &scene {
            for (what, m) in [("scene video", &s.video), ("scene text", &s.text)] {
                if m.rows() != n || m.dim() != d {
                    return Err(Error::Shape(format!(
                        "{what} is {}x{} but the batch is {n}x{d}",
                        m.rows(),
                        m.dim()
                    )));
                }
                if !m.is_normalized() {
                    return Err(Error::InvalidInput(format!("{what} must be normalised")));
                }
            }
            if s.present.len() != n || s.tags.len() != n {
                return Err(Error::Shape(format!(
                    "scene partners need {n} presence flags and tag rows, got {} and {}",
                    s.present.len(),
                    s.tags.len()
                )));
            }
        }
        Ok(Self {
            video,
            text,
            tags,
            scene,
        })
    }

    /// Batch without scene partners.
    pub fn plain(video: EmbeddingMatrix, text: EmbeddingMatrix, tags: Vec<ActionTags>) -> Result<Self> {
        Self::new(video, text, tags, None)
    }

    pub fn batch_size(&self) -> usize {
        self.video.rows()
    }

    pub fn dim(&self) -> usize {
        self.video.dim()
    }

    pub fn video(&self) -> &EmbeddingMatrix {
        &self.video
    }

    pub fn text(&self) -> &EmbeddingMatrix {
        &self.text
    }

    pub fn tags(&self) -> &[ActionTags] {
        &self.tags
    }

    pub fn scene(&self) -> Option<&ScenePartners> {
        self.scene.as_ref()
    }

    /// Rows of `B̃` in canonical order.
    pub fn augmented_rows(&self) -> Vec<RowRef> {
        let mut rows: Vec<RowRef> = (0..self.batch_size()).map(RowRef::Batch).collect();
        if let Some(s) = &self.scene {
            rows.extend(
                s.present
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p)
                    .map(|(i, _)| RowRef::Partner(i)),
            );
        }
        rows
    }

    /// `|B̃|`
    pub fn augmented_size(&self) -> usize {
        self.batch_size() + self.partner_count()
    }

    pub fn partner_count(&self) -> usize {
        self.scene
            .as_ref()
            .map_or(0, |s| s.present.iter().filter(|&&p| p).count())
    }

    /// Batch rows that have no scene partner.
    pub fn missing_partners(&self) -> usize {
        self.batch_size() - self.partner_count()
    }

    /// Tags of every row of `B̃`, in [`augmented_rows`](Self::augmented_rows) order.
    pub fn augmented_tags(&self) -> Vec<&ActionTags> {
        self.augmented_rows()
            .into_iter()
            .map(|r| match r {
                RowRef::Batch(i) => &self.tags[i],
                RowRef::Partner(i) => &self.scene.as_ref().expect("partner row").tags[i],
            })
            .collect()
    }

    /// Positive mask over `B̃` from the noun/verb rule.
    pub fn positive_mask(&self) -> PositiveMask {
        build_positive_mask(self.augmented_tags())
    }

    /// Stacks video and text rows of `B̃`.
    pub(crate) fn stacked(&self) -> (Matrix, Matrix) {
        let rows = self.augmented_rows();
        let d = self.dim();
        let mut video = Matrix::zeros(rows.len(), d);
        let mut text = Matrix::zeros(rows.len(), d);
        for (k, r) in rows.iter().enumerate() {
            let (v, t) = match *r {
                RowRef::Batch(i) => (self.video.row(i), self.text.row(i)),
                RowRef::Partner(i) => {
                    let s = self.scene.as_ref().expect("partner row");
                    (s.video.row(i), s.text.row(i))
                }
            };
            video.row_mut(k).copy_from_slice(v);
            text.row_mut(k).copy_from_slice(t);
        }
        (video, text)
    }
}

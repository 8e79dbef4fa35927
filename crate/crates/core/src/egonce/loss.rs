use super::{AugmentedBatch, EmbeddingMatrix, PositiveMask, RowRef};
use crate::error::{Error, Result};
use crate::gradcheck::{self, GradCheck};
use crate::precise;
use crate::linalg::{dot, log_sum_exp, Matrix};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TAU: f64 = 0.05;

/// Which rows act as anchors in the outer mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorSet {
    /// Every present row of `B̃`, scene partners included.
    #[default]
    Augmented,
    /// Only the original batch rows `B`.
    Batch,
}

/// Gradients with respect to every embedding row of an [`AugmentedBatch`].
/// Scene gradients are `N × d` with zero rows where no partner is present.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradients {
    pub video: Matrix,
    pub text: Matrix,
    pub scene_video: Option<Matrix>,
    pub scene_text: Option<Matrix>,
}

impl BatchGradients {
    fn zeros_for(batch: &AugmentedBatch) -> Self {
        let (n, d) = (batch.batch_size(), batch.dim());
        let scene = batch.scene().map(|_| Matrix::zeros(n, d));
        Self {
            video: Matrix::zeros(n, d),
            text: Matrix::zeros(n, d),
            scene_video: scene.clone(),
            scene_text: scene,
        }
    }

    fn video_row_mut(&mut self, r: RowRef) -> &mut [f64] {
        match r {
            RowRef::Batch(i) => self.video.row_mut(i),
            RowRef::Partner(i) => self.scene_video.as_mut().expect("scene grad").row_mut(i),
        }
    }

    fn text_row_mut(&mut self, r: RowRef) -> &mut [f64] {
        match r {
            RowRef::Batch(i) => self.text.row_mut(i),
            RowRef::Partner(i) => self.scene_text.as_mut().expect("scene grad").row_mut(i),
        }
    }

    fn video_row(&self, r: RowRef) -> &[f64] {
        match r {
            RowRef::Batch(i) => self.video.row(i),
            RowRef::Partner(i) => self.scene_video.as_ref().expect("scene grad").row(i),
        }
    }

    fn text_row(&self, r: RowRef) -> &[f64] {
        match r {
            RowRef::Batch(i) => self.text.row(i),
            RowRef::Partner(i) => self.scene_text.as_ref().expect("scene grad").row(i),
        }
    }

    fn add_assign(&mut self, other: &BatchGradients) {
        fn add(a: &mut Matrix, b: &Matrix) {
            a.add_assign(b).expect("same batch shape");
        }
        add(&mut self.video, &other.video);
        add(&mut self.text, &other.text);
        if let (Some(a), Some(b)) = (self.scene_video.as_mut(), other.scene_video.as_ref()) {
            add(a, b);
        }
        if let (Some(a), Some(b)) = (self.scene_text.as_mut(), other.scene_text.as_ref()) {
            add(a, b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.video.is_finite()
            && self.text.is_finite()
            && self.scene_video.as_ref().is_none_or(Matrix::is_finite)
            && self.scene_text.as_ref().is_none_or(Matrix::is_finite)
    }

    /// Video rows of `B̃`, then text rows of `B̃`, flattened.
    pub fn flatten(&self, rows: &[RowRef]) -> Vec<f64> {
        let mut out = Vec::new();
        for &r in rows {
            out.extend_from_slice(self.video_row(r));
        }
        for &r in rows {
            out.extend_from_slice(self.text_row(r));
        }
        out
    }
}

/// One direction (video→text or text→video) of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalLoss {
    pub value: f64,
    /// Per-anchor terms, in augmented-row order.
    pub per_anchor: Vec<f64>,
    pub grad: BatchGradients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub total: f64,
    pub v2t: f64,
    pub t2v: f64,
    pub grad: BatchGradients,
    pub anchors: usize,
    pub missing_partners: usize,
}

/// The objective with a fixed temperature.
///
/// For anchor `i` the term is
/// `log Σ_{k∈B̃} exp(s_ik/τ) − log Σ_{k∈P_i} exp(s_ik/τ)`, where the
/// denominator runs over every present row of `B̃` (batch targets plus scene
/// partner targets) and `P_i` is the positive mask row over the same rows.
/// The loss is the mean of these terms over the anchor set; both
/// log-sum-exps subtract their own maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoNce {
    pub tau: f64,
    pub anchors: AnchorSet,
}

impl Default for EgoNce {
    fn default() -> Self {
        Self::new(DEFAULT_TAU)
    }
}

#[derive(Clone, Copy)]
enum Direction {
    VideoToText,
    TextToVideo,
}

impl EgoNce {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            anchors: AnchorSet::Augmented,
        }
    }

    pub fn with_anchors(mut self, anchors: AnchorSet) -> Self {
        self.anchors = anchors;
        self
    }

    fn anchor_count(&self, batch: &AugmentedBatch) -> usize {
        match self.anchors {
            AnchorSet::Augmented => batch.augmented_size(),
            AnchorSet::Batch => batch.batch_size(),
        }
    }

    fn check(&self, batch: &AugmentedBatch, mask: &PositiveMask) -> Result<()> {
        check_tau(self.tau)?;
        if batch.batch_size() == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        if mask.size() != batch.augmented_size() {
            return Err(Error::Shape(format!(
                "positive mask covers {} rows but the augmented batch has {}",
                mask.size(),
                batch.augmented_size()
            )));
        }
        Ok(())
    }

    pub fn v2t(&self, batch: &AugmentedBatch, mask: &PositiveMask) -> Result<DirectionalLoss> {
        self.direction(batch, mask, Direction::VideoToText)
    }

    pub fn t2v(&self, batch: &AugmentedBatch, mask: &PositiveMask) -> Result<DirectionalLoss> {
        self.direction(batch, mask, Direction::TextToVideo)
    }

    pub fn total(&self, batch: &AugmentedBatch, mask: &PositiveMask) -> Result<LossResult> {
        let v2t = self.v2t(batch, mask)?;
        let t2v = self.t2v(batch, mask)?;
        let mut grad = v2t.grad;
        grad.add_assign(&t2v.grad);
        Ok(LossResult {
            total: v2t.value + t2v.value,
            v2t: v2t.value,
            t2v: t2v.value,
            grad,
            anchors: self.anchor_count(batch),
            missing_partners: batch.missing_partners(),
        })
    }

    fn direction(
        &self,
        batch: &AugmentedBatch,
        mask: &PositiveMask,
        dir: Direction,
    ) -> Result<DirectionalLoss> {
        self.check(batch, mask)?;
        let rows = batch.augmented_rows();
        let (video, text) = batch.stacked();
        let (anchors, targets) = match dir {
            Direction::VideoToText => (&video, &text),
            Direction::TextToVideo => (&text, &video),
        };
        let n_anchor = self.anchor_count(batch);
        let terms = directional_terms(anchors, targets, mask, n_anchor, self.tau, true)?;

        let mut grad = BatchGradients::zeros_for(batch);
        let (g_anchor, g_target) = terms.grads.expect("gradients requested");
        for (k, &r) in rows.iter().enumerate() {
            let (a_row, t_row) = match dir {
                Direction::VideoToText => (grad.video_row_mut(r), g_anchor.row(k)),
                Direction::TextToVideo => (grad.text_row_mut(r), g_anchor.row(k)),
            };
            a_row.iter_mut().zip(t_row).for_each(|(a, b)| *a += b);
            let (dst, src) = match dir {
                Direction::VideoToText => (grad.text_row_mut(r), g_target.row(k)),
                Direction::TextToVideo => (grad.video_row_mut(r), g_target.row(k)),
            };
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
        Ok(DirectionalLoss {
            value: terms.value,
            per_anchor: terms.per_anchor,
            grad,
        })
    }

    /// Compares analytic gradients of [`total`](Self::total) with central
    /// differences over every embedding entry of `B̃`.
    pub fn finite_difference_check(
        &self,
        batch: &AugmentedBatch,
        mask: &PositiveMask,
        h: f64,
    ) -> Result<GradCheck> {
        let analytic = self.total(batch, mask)?;
        let rows = batch.augmented_rows();
        let analytic = analytic.grad.flatten(&rows);
        let numeric = self.numeric_gradient(batch, mask, h)?;
        Ok(gradcheck::compare(&analytic, &numeric))
    }

    /// Central-difference gradient in [`BatchGradients::flatten`] order. The
    /// objective is re-evaluated from its definition in double-double
    /// precision, independently of the `f64` path used by [`total`](Self::total).
    pub fn numeric_gradient(
        &self,
        batch: &AugmentedBatch,
        mask: &PositiveMask,
        h: f64,
    ) -> Result<Vec<f64>> {
        self.check(batch, mask)?;
        let (video, text) = batch.stacked();
        let (m, d) = (video.rows(), video.cols());
        let mut x = video.into_vec();
        x.extend(text.into_vec());
        let n_anchor = self.anchor_count(batch);
        precise::central_difference(&x, h, |p| {
            let (v, t) = p.split_at(m * d);
            let f = precise::contrastive_direction(v, t, d, mask, n_anchor, self.tau)
                + precise::contrastive_direction(t, v, d, mask, n_anchor, self.tau);
            Ok(f)
        })
    }
}

pub fn egonce_v2t(batch: &AugmentedBatch, mask: &PositiveMask, tau: f64) -> Result<DirectionalLoss> {
    EgoNce::new(tau).v2t(batch, mask)
}

pub fn egonce_t2v(batch: &AugmentedBatch, mask: &PositiveMask, tau: f64) -> Result<DirectionalLoss> {
    EgoNce::new(tau).t2v(batch, mask)
}

pub fn egonce_total(batch: &AugmentedBatch, mask: &PositiveMask, tau: f64) -> Result<LossResult> {
    EgoNce::new(tau).total(batch, mask)
}

pub fn finite_difference_check(
    batch: &AugmentedBatch,
    mask: &PositiveMask,
    tau: f64,
    h: f64,
) -> Result<GradCheck> {
    EgoNce::new(tau).finite_difference_check(batch, mask, h)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("temperature must be positive, got {tau}")))
    }
}

struct Terms {
    value: f64,
    per_anchor: Vec<f64>,
    grads: Option<(Matrix, Matrix)>,
}

/// Mean over the first `n_anchor` rows of `anchors` of
/// `lse_k(a·t_k/τ) − lse_{k∈P}(a·t_k/τ)`, with gradients w.r.t. both inputs.
fn directional_terms(
    anchors: &Matrix,
    targets: &Matrix,
    mask: &PositiveMask,
    n_anchor: usize,
    tau: f64,
    with_grad: bool,
) -> Result<Terms> {
    let m = targets.rows();
    let scale = 1.0 / n_anchor as f64;
    let mut grads = with_grad.then(|| {
        (
            Matrix::zeros(anchors.rows(), anchors.cols()),
            Matrix::zeros(targets.rows(), targets.cols()),
        )
    });
    let mut per_anchor = Vec::with_capacity(n_anchor);
    let mut logits = vec![0.0; m];
    for i in 0..n_anchor {
        let a = anchors.row(i);
        for (k, l) in logits.iter_mut().enumerate() {
            *l = dot(a, targets.row(k)) / tau;
        }
        let positives = mask.row(i);
        if !positives.iter().any(|&p| p) {
            return Err(Error::Config(format!("anchor {i} has an empty positive set")));
        }
        let lse_all = log_sum_exp(logits.iter().copied());
        let lse_pos = log_sum_exp(
            logits
                .iter()
                .zip(positives)
                .filter(|(_, &p)| p)
                .map(|(&l, _)| l),
        );
        let term = lse_all - lse_pos;
        if !term.is_finite() {
            return Err(Error::NumericAbort {
                anchor: i,
                message: format!("loss term is {term}"),
            });
        }
        per_anchor.push(term);

        if let Some((g_anchor, g_target)) = grads.as_mut() {
            // d term / d logit_k = softmax_all(k) − softmax_pos(k)
            for k in 0..m {
                let mut coeff = (logits[k] - lse_all).exp();
                if positives[k] {
                    coeff -= (logits[k] - lse_pos).exp();
                }
                let coeff = coeff * scale / tau;
                if coeff == 0.0 {
                    continue;
                }
                let t = targets.row(k);
                g_anchor
                    .row_mut(i)
                    .iter_mut()
                    .zip(t)
                    .for_each(|(g, x)| *g += coeff * x);
                g_target
                    .row_mut(k)
                    .iter_mut()
                    .zip(a)
                    .for_each(|(g, x)| *g += coeff * x);
            }
        }
    }
    let value = per_anchor.iter().sum::<f64>() * scale;
    Ok(Terms {
        value,
        per_anchor,
        grads,
    })
}

/// Plain symmetric video-text InfoNCE over matched rows, computed on the full
/// similarity matrix with row-wise and column-wise log-softmax.
pub fn infonce(video: &EmbeddingMatrix, text: &EmbeddingMatrix, tau: f64) -> Result<LossResult> {
    check_tau(tau)?;
    let n = video.rows();
    if n == 0 || text.rows() != n || text.dim() != video.dim() {
        return Err(Error::Shape(format!(
            "infonce needs equal non-empty batches, got {}x{} and {}x{}",
            n,
            video.dim(),
            text.rows(),
            text.dim()
        )));
    }
    let mut logits = video.values().matmul(&text.values().transpose())?;
    logits.scale(1.0 / tau);

    let inv_n = 1.0 / n as f64;
    // dL/dlogits accumulated from both directions
    let mut dlogits = Matrix::zeros(n, n);
    let mut v2t = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let lse = log_sum_exp(row.iter().copied());
        let term = lse - row[i];
        if !term.is_finite() {
            return Err(Error::NumericAbort {
                anchor: i,
                message: format!("video-to-text term is {term}"),
            });
        }
        v2t += term;
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            dlogits[(i, j)] += ((row[j] - lse).exp() - target) * inv_n;
        }
    }
    let mut t2v = 0.0;
    for j in 0..n {
        let lse = log_sum_exp((0..n).map(|i| logits[(i, j)]));
        let term = lse - logits[(j, j)];
        if !term.is_finite() {
            return Err(Error::NumericAbort {
                anchor: j,
                message: format!("text-to-video term is {term}"),
            });
        }
        t2v += term;
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            dlogits[(i, j)] += ((logits[(i, j)] - lse).exp() - target) * inv_n;
        }
    }
    v2t *= inv_n;
    t2v *= inv_n;

    dlogits.scale(1.0 / tau);
    let grad_video = dlogits.matmul(text.values())?;
    let grad_text = dlogits.t_matmul(video.values())?;
    Ok(LossResult {
        total: v2t + t2v,
        v2t,
        t2v,
        grad: BatchGradients {
            video: grad_video,
            text: grad_text,
            scene_video: None,
            scene_text: None,
        },
        anchors: n,
        missing_partners: n,
    })
}

use super::data::FeatureCorpus;
use super::head::{forward_precise, HeadGradients, ProjectionHead};
use super::optim::Adam;
use crate::corpus::{ActionTags, SceneAdjacencyIndex};
use crate::egonce::{
    build_positive_mask, infonce, AnchorSet, AugmentedBatch, EgoNce, LossResult, PositiveMask,
    ScenePartners, DEFAULT_TAU,
};
use crate::error::{Error, Result};
use crate::gradcheck::{self, GradCheck};
use crate::linalg::Matrix;
use crate::precise;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Egonce,
    Infonce,
}

/// Loss settings for one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub objective: Objective,
    pub tau: f64,
    pub anchors: AnchorSet,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Egonce,
            tau: DEFAULT_TAU,
            anchors: AnchorSet::Augmented,
        }
    }
}

/// The video and text projection heads trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHeads {
    pub video: ProjectionHead,
    pub text: ProjectionHead,
}

impl DualHeads {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d_video: usize, d_text: usize, d_out: usize) -> Self {
        let video = ProjectionHead::random(rng, d_video, d_out);
        let text = ProjectionHead::random(rng, d_text, d_out);
        Self { video, text }
    }

    /// Video weight, video bias, text weight, text bias.
    pub fn tensor_sizes(&self) -> [usize; 4] {
        [
            self.video.weight.as_slice().len(),
            self.video.bias.len(),
            self.text.weight.as_slice().len(),
            self.text.bias.len(),
        ]
    }

    /// Parameters in [`tensor_sizes`](Self::tensor_sizes) order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.video.flatten();
        out.extend(self.text.flatten());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualGradients {
    pub video: HeadGradients,
    pub text: HeadGradients,
}

impl DualGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.video.flatten();
        out.extend(self.text.flatten());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|g| g.is_finite())
    }
}

/// Features of each batch row's scene partner; absent rows hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFeatures {
    pub video: Matrix,
    pub text: Matrix,
    pub present: Vec<bool>,
    pub tags: Vec<ActionTags>,
}

/// Raw features and tags for one batch, before projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub video: Matrix,
    pub text: Matrix,
    pub tags: Vec<ActionTags>,
    pub scene: Option<SceneFeatures>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.video.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.video.rows() == 0
    }

    fn validate(&self, heads: &DualHeads) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        if self.text.rows() != n || self.tags.len() != n {
            return Err(Error::Shape(format!(
                "batch has {n} video rows, {} text rows and {} tag rows",
                self.text.rows(),
                self.tags.len()
            )));
        }
        if self.video.cols() != heads.video.d_in() || self.text.cols() != heads.text.d_in() {
            return Err(Error::Shape(format!(
                "feature dims {}/{} do not match heads {}/{}",
                self.video.cols(),
                self.text.cols(),
                heads.video.d_in(),
                heads.text.d_in()
            )));
        }
        if let Some(s) = &self.scene {
            if s.video.rows() != n || s.text.rows() != n || s.present.len() != n || s.tags.len() != n {
                return Err(Error::Shape("scene features must have one row per batch row".into()));
            }
        }
        Ok(())
    }

    /// Rows of `B̃` as `(video features, text features, tags)`: batch rows,
    /// then present partners.
    fn augmented(&self) -> (Matrix, Matrix, Vec<&ActionTags>) {
        let mut tags: Vec<&ActionTags> = self.tags.iter().collect();
        let Some(s) = &self.scene else {
            return (self.video.clone(), self.text.clone(), tags);
        };
        let partners: Vec<usize> = (0..self.len()).filter(|&i| s.present[i]).collect();
        let video = stack(&self.video, &s.video.select_rows(&partners));
        let text = stack(&self.text, &s.text.select_rows(&partners));
        tags.extend(partners.iter().map(|&i| &s.tags[i]));
        (video, text, tags)
    }
}

fn stack(a: &Matrix, b: &Matrix) -> Matrix {
    let mut data = a.as_slice().to_vec();
    data.extend_from_slice(b.as_slice());
    Matrix::from_vec(a.rows() + b.rows(), a.cols(), data).expect("equal widths")
}

/// Assembles batches from a corpus, drawing scene partners from `adjacency`.
#[derive(Debug)]
pub struct BatchSampler<'a> {
    corpus: &'a FeatureCorpus,
    adjacency: SceneAdjacencyIndex,
    rows: HashMap<&'a str, usize>,
    max_gap_sec: f64,
}

impl<'a> BatchSampler<'a> {
    pub fn new(corpus: &'a FeatureCorpus, max_gap_sec: f64) -> Result<Self> {
        if !(max_gap_sec.is_finite() && max_gap_sec > 0.0) {
            return Err(Error::Config(format!("max_gap_sec must be positive, got {max_gap_sec}")));
        }
        let adjacency = SceneAdjacencyIndex::build(corpus.pairs())?;
        let rows = corpus
            .pairs()
            .iter()
            .enumerate()
            .map(|(i, p)| (p.pair_id.as_str(), i))
            .collect();
        Ok(Self {
            corpus,
            adjacency,
            rows,
            max_gap_sec,
        })
    }

    pub fn adjacency(&self) -> &SceneAdjacencyIndex {
        &self.adjacency
    }

    /// Batch of the given corpus rows. With `scene_rng`, each row draws one
    /// scene negative; rows without an adjacent clip get none.
    pub fn batch<R: Rng + ?Sized>(&self, indices: &[usize], scene_rng: Option<&mut R>) -> Result<TrainBatch> {
        let c = self.corpus;
        let tags = indices.iter().map(|&i| c.pairs()[i].tags().clone()).collect();
        let scene = match scene_rng {
            None => None,
            Some(rng) => {
                let n = indices.len();
                let mut video = Matrix::zeros(n, c.video_dim());
                let mut text = Matrix::zeros(n, c.text_dim());
                let mut present = vec![false; n];
                let mut tags = vec![ActionTags::default(); n];
                for (k, &i) in indices.iter().enumerate() {
                    let anchor = &c.pairs()[i].pair_id;
                    if let Some(id) = self.adjacency.sample_scene_negative_with(anchor, self.max_gap_sec, rng)? {
                        let j = self.rows[id];
                        video.row_mut(k).copy_from_slice(c.video_features().row(j));
                        text.row_mut(k).copy_from_slice(c.text_features().row(j));
                        tags[k] = c.pairs()[j].tags().clone();
                        present[k] = true;
                    }
                }
                Some(SceneFeatures {
                    video,
                    text,
                    present,
                    tags,
                })
            }
        };
        Ok(TrainBatch {
            video: c.video_features().select_rows(indices),
            text: c.text_features().select_rows(indices),
            tags,
            scene,
        })
    }
}

fn first_non_finite_row(m: &Matrix) -> Option<usize> {
    m.iter_rows().position(|r| r.iter().any(|x| !x.is_finite()))
}

/// Loss and exact parameter gradients of both heads for one batch.
pub fn loss_and_gradients(
    heads: &DualHeads,
    batch: &TrainBatch,
    cfg: &StepConfig,
) -> Result<(LossResult, DualGradients)> {
    batch.validate(heads)?;
    let (v_emb, v_cache) = heads.video.forward_cached(&batch.video)?;
    let (t_emb, t_cache) = heads.text.forward_cached(&batch.text)?;

    let (loss, scene) = match cfg.objective {
        Objective::Infonce => (infonce(&v_emb, &t_emb, cfg.tau)?, None),
        Objective::Egonce => {
            let scene = match &batch.scene {
                None => None,
                Some(s) => {
                    let (sv, sv_cache) = heads.video.forward_cached(&s.video)?;
                    let (st, st_cache) = heads.text.forward_cached(&s.text)?;
                    Some((sv, sv_cache, st, st_cache, s))
                }
            };
            let partners = scene.as_ref().map(|(sv, _, st, _, s)| ScenePartners {
                video: sv.clone(),
                text: st.clone(),
                present: s.present.clone(),
                tags: s.tags.clone(),
            });
            let aug = AugmentedBatch::new(v_emb, t_emb, batch.tags.clone(), partners)?;
            let mask = aug.positive_mask();
            let loss = EgoNce::new(cfg.tau).with_anchors(cfg.anchors).total(&aug, &mask)?;
            (loss, scene)
        }
    };
    if !loss.total.is_finite() {
        return Err(Error::NumericAbort {
            anchor: 0,
            message: format!("total loss is {}", loss.total),
        });
    }
    for m in [&loss.grad.video, &loss.grad.text] {
        if let Some(anchor) = first_non_finite_row(m) {
            return Err(Error::NumericAbort {
                anchor,
                message: "non-finite embedding gradient".into(),
            });
        }
    }

    let mut video = heads.video.backward(&batch.video, &v_cache, &loss.grad.video)?;
    let mut text = heads.text.backward(&batch.text, &t_cache, &loss.grad.text)?;
    if let Some((_, sv_cache, _, st_cache, s)) = &scene {
        let zeros = Matrix::zeros(s.video.rows(), heads.video.d_out());
        let gv = loss.grad.scene_video.as_ref().unwrap_or(&zeros);
        let gt = loss.grad.scene_text.as_ref().unwrap_or(&zeros);
        video.add_assign(&heads.video.backward(&s.video, sv_cache, gv)?)?;
        text.add_assign(&heads.text.backward(&s.text, st_cache, gt)?)?;
    }
    let grads = DualGradients { video, text };
    if !grads.is_finite() {
        return Err(Error::NumericAbort {
            anchor: 0,
            message: "non-finite parameter gradient".into(),
        });
    }
    Ok((loss, grads))
}

/// One optimizer update of both heads. `opt` must track
/// [`DualHeads::tensor_sizes`].
pub fn train_step(
    heads: &mut DualHeads,
    batch: &TrainBatch,
    cfg: &StepConfig,
    opt: &mut Adam,
) -> Result<LossResult> {
    let (loss, g) = loss_and_gradients(heads, batch, cfg)?;
    let DualHeads { video, text } = heads;
    opt.update(
        &mut [
            video.weight.as_mut_slice(),
            &mut video.bias,
            text.weight.as_mut_slice(),
            &mut text.bias,
        ],
        &[
            g.video.weight.as_slice(),
            &g.video.bias,
            g.text.weight.as_slice(),
            &g.text.bias,
        ],
    )?;
    Ok(loss)
}

/// Central differences of the loss with respect to every head parameter, in
/// [`DualHeads::flatten`] order. Projection, normalisation and the objective
/// are re-evaluated from their definitions in double-double precision.
pub fn numeric_param_gradient(
    heads: &DualHeads,
    batch: &TrainBatch,
    cfg: &StepConfig,
    h: f64,
) -> Result<Vec<f64>> {
    batch.validate(heads)?;
    let n = batch.len();
    let (video, text, mask, n_anchor) = match cfg.objective {
        Objective::Infonce => (
            batch.video.clone(),
            batch.text.clone(),
            PositiveMask::identity(n),
            n,
        ),
        Objective::Egonce => {
            let (v, t, tags) = batch.augmented();
            let mask = build_positive_mask(tags.iter().copied());
            let n_anchor = match cfg.anchors {
                AnchorSet::Augmented => v.rows(),
                AnchorSet::Batch => n,
            };
            (v, t, mask, n_anchor)
        }
    };
    if mask.positives_per_row().contains(&0) {
        return Err(Error::Config("a row has an empty positive set".into()));
    }
    let d_out = heads.video.d_out();
    let split = heads.video.param_count();
    precise::central_difference(&heads.flatten(), h, |p| {
        let (pv, pt) = p.split_at(split);
        let v = forward_precise(&video, pv, d_out);
        let t = forward_precise(&text, pt, d_out);
        Ok(precise::contrastive_direction(&v, &t, d_out, &mask, n_anchor, cfg.tau)
            + precise::contrastive_direction(&t, &v, d_out, &mask, n_anchor, cfg.tau))
    })
}

pub fn param_gradcheck(heads: &DualHeads, batch: &TrainBatch, cfg: &StepConfig, h: f64) -> Result<GradCheck> {
    let (_, analytic) = loss_and_gradients(heads, batch, cfg)?;
    let numeric = numeric_param_gradient(heads, batch, cfg, h)?;
    Ok(gradcheck::compare(&analytic.flatten(), &numeric))
}

use super::head::HeadGradients;
use super::optim::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::evalkit::argmax_first;
use crate::gradcheck::{self, GradCheck};
use crate::linalg::{log_sum_exp, Matrix};
use crate::precise::{self, Dd};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Keyframe positions scored per PNR clip.
pub const PNR_POSITIONS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferTask {
    /// Object state change: two-way classification.
    Oscc,
    /// Point-of-no-return: one logit per sampled frame position.
    Pnr,
}

impl TransferTask {
    pub fn classes(self) -> usize {
        match self {
            TransferTask::Oscc => 2,
            TransferTask::Pnr => PNR_POSITIONS,
        }
    }
}

/// Linear classifier `features · W + b` over `C` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferHead {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl TransferHead {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.cols() || weight.cols() == 0 {
            return Err(Error::Shape(format!(
                "bias has {} entries for a {}x{} weight",
                bias.len(),
                weight.rows(),
                weight.cols()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(d_in: usize, classes: usize) -> Self {
        Self {
            weight: Matrix::zeros(d_in, classes),
            bias: vec![0.0; classes],
        }
    }

    pub fn for_task(d_in: usize, task: TransferTask) -> Self {
        Self::zeros(d_in, task.classes())
    }

    /// Gaussian weights with standard deviation `scale`, zero bias.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d_in: usize, classes: usize, scale: f64) -> Self {
        let data = (0..d_in * classes)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        Self {
            weight: Matrix::from_vec(d_in, classes, data).expect("sized"),
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.weight.cols()
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    /// Weight entries row-major, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.weight.as_slice().to_vec();
        out.extend_from_slice(&self.bias);
        out
    }

    fn check_inputs(&self, features: &Matrix, labels: Option<&[usize]>) -> Result<()> {
        if features.cols() != self.d_in() {
            return Err(Error::Shape(format!(
                "features have dim {} but the head expects {}",
                features.cols(),
                self.d_in()
            )));
        }
        if let Some(labels) = labels {
            if labels.len() != features.rows() {
                return Err(Error::Validation(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    features.rows()
                )));
            }
            if labels.is_empty() {
                return Err(Error::InvalidInput("no training samples".into()));
            }
            if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= self.classes()) {
                return Err(Error::Validation(format!(
                    "label {l} of sample {i} is outside [0, {})",
                    self.classes()
                )));
            }
        }
        Ok(())
    }

    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        self.check_inputs(features, None)?;
        let mut z = features.matmul(&self.weight)?;
        for i in 0..z.rows() {
            z.row_mut(i).iter_mut().zip(&self.bias).for_each(|(a, b)| *a += b);
        }
        Ok(z)
    }

    /// Arg-max class per sample; the lowest index wins ties.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(features)?.iter_rows().map(argmax_first).collect())
    }

    /// Mean softmax cross-entropy and its gradient.
    pub fn cross_entropy(&self, features: &Matrix, labels: &[usize]) -> Result<(f64, HeadGradients)> {
        self.check_inputs(features, Some(labels))?;
        let z = self.logits(features)?;
        let n = labels.len() as f64;
        let mut dz = Matrix::zeros(z.rows(), z.cols());
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = z.row(i);
            let lse = log_sum_exp(row.iter().copied());
            loss += lse - row[y];
            for (k, g) in dz.row_mut(i).iter_mut().enumerate() {
                let p = (row[k] - lse).exp();
                *g = (p - if k == y { 1.0 } else { 0.0 }) / n;
            }
        }
        let weight = features.t_matmul(&dz)?;
        let mut bias = vec![0.0; self.classes()];
        for row in dz.iter_rows() {
            bias.iter_mut().zip(row).for_each(|(b, g)| *b += g);
        }
        Ok((loss / n, HeadGradients { weight, bias }))
    }

    /// Central differences of the mean cross-entropy, evaluated in
    /// double-double, in [`flatten`](Self::flatten) order.
    pub fn numeric_gradient(&self, features: &Matrix, labels: &[usize], h: f64) -> Result<Vec<f64>> {
        self.check_inputs(features, Some(labels))?;
        let (d, c) = (self.d_in(), self.classes());
        precise::central_difference(&self.flatten(), h, |p| {
            let (w, b) = p.split_at(d * c);
            let mut total = Dd::ZERO;
            for (x, &y) in features.iter_rows().zip(labels) {
                let z: Vec<Dd> = (0..c)
                    .map(|k| {
                        x.iter()
                            .enumerate()
                            .fold(b[k], |acc, (j, &xj)| acc + Dd::new(xj) * w[j * c + k])
                    })
                    .collect();
                total = total + precise::log_sum_exp(&z) - z[y];
            }
            Ok(total / Dd::new(labels.len() as f64))
        })
    }

    pub fn gradcheck(&self, features: &Matrix, labels: &[usize], h: f64) -> Result<GradCheck> {
        let (_, g) = self.cross_entropy(features, labels)?;
        let numeric = self.numeric_gradient(features, labels, h)?;
        Ok(gradcheck::compare(&g.flatten(), &numeric))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneResult {
    pub head: TransferHead,
    /// Training accuracy after each epoch.
    pub accuracy: Vec<f64>,
    /// Mean cross-entropy before each epoch's update.
    pub loss: Vec<f64>,
}

/// Full-batch Adam on the cross-entropy, one update per epoch.
pub fn finetune_classifier(
    head: TransferHead,
    features: &Matrix,
    labels: &[usize],
    epochs: usize,
    lr: f64,
) -> Result<FinetuneResult> {
    finetune_with(head, features, labels, epochs, AdamConfig::with_lr(lr))
}

pub fn finetune_with(
    mut head: TransferHead,
    features: &Matrix,
    labels: &[usize],
    epochs: usize,
    optimizer: AdamConfig,
) -> Result<FinetuneResult> {
    head.check_inputs(features, Some(labels))?;
    let mut adam = Adam::new(optimizer, &[head.weight.as_slice().len(), head.bias.len()])?;
    let mut accuracy = Vec::with_capacity(epochs);
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (loss, g) = head.cross_entropy(features, labels)?;
        if !loss.is_finite() {
            return Err(Error::NumericAbort {
                anchor: 0,
                message: format!("cross-entropy is {loss}"),
            });
        }
        losses.push(loss);
        let TransferHead { weight, bias } = &mut head;
        adam.update(&mut [weight.as_mut_slice(), bias], &[g.weight.as_slice(), &g.bias])?;
        let pred = head.predict(features)?;
        accuracy.push(crate::evalkit::accuracy(&pred, labels)?);
    }
    Ok(FinetuneResult {
        head,
        accuracy,
        loss: losses,
    })
}

use crate::egonce::{l2_normalize, EmbeddingMatrix, DEFAULT_NORM_EPSILON};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::precise::Dd;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const DEFAULT_EMBED_DIM: usize = 256;

/// Affine map into the shared embedding space followed by L2 normalisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Pre-normalisation outputs kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadCache {
    pub projected: Matrix,
    pub norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl HeadGradients {
    pub fn zeros_like(head: &ProjectionHead) -> Self {
        Self {
            weight: Matrix::zeros(head.d_in(), head.d_out()),
            bias: vec![0.0; head.d_out()],
        }
    }

    pub fn add_assign(&mut self, other: &HeadGradients) -> Result<()> {
        self.weight.add_assign(&other.weight)?;
        if self.bias.len() != other.bias.len() {
            return Err(Error::Shape("bias gradient length mismatch".into()));
        }
        self.bias.iter_mut().zip(&other.bias).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Weight entries row-major, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.weight.as_slice().to_vec();
        out.extend_from_slice(&self.bias);
        out
    }
}

impl ProjectionHead {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        let head = Self { weight, bias };
        head.validate()?;
        Ok(head)
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(d_in, d_out),
            bias: vec![0.0; d_out],
        }
    }

    /// Gaussian weights with standard deviation `1/√d_in`, zero bias.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize) -> Self {
        let std = 1.0 / (d_in.max(1) as f64).sqrt();
        let data = (0..d_in * d_out)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * std)
            .collect();
        Self {
            weight: Matrix::from_vec(d_in, d_out, data).expect("sized"),
            bias: vec![0.0; d_out],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bias.len() != self.weight.cols() {
            return Err(Error::Shape(format!(
                "bias has {} entries for a {}x{} weight",
                self.bias.len(),
                self.weight.rows(),
                self.weight.cols()
            )));
        }
        if !(self.weight.is_finite() && self.bias.iter().all(|b| b.is_finite())) {
            return Err(Error::Validation("projection head has non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }

    /// Weight entries row-major, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.weight.as_slice().to_vec();
        out.extend_from_slice(&self.bias);
        out
    }

    pub fn forward(&self, features: &Matrix) -> Result<EmbeddingMatrix> {
        Ok(self.forward_cached(features)?.0)
    }

    pub fn forward_cached(&self, features: &Matrix) -> Result<(EmbeddingMatrix, HeadCache)> {
        if features.cols() != self.d_in() {
            return Err(Error::Shape(format!(
                "features have dim {} but the head expects {}",
                features.cols(),
                self.d_in()
            )));
        }
        let mut projected = features.matmul(&self.weight)?;
        for i in 0..projected.rows() {
            projected
                .row_mut(i)
                .iter_mut()
                .zip(&self.bias)
                .for_each(|(y, b)| *y += b);
        }
        let norms: Vec<f64> = projected.iter_rows().map(norm).collect();
        let embeddings = l2_normalize(&EmbeddingMatrix::raw(projected.clone()), DEFAULT_NORM_EPSILON).embeddings;
        Ok((embeddings, HeadCache { projected, norms }))
    }

    /// Chains `dL/du` (u the normalised output) back to the parameters using
    /// `du/dy = (I − u uᵀ)/‖y‖`; rows with `‖y‖` at or below the normalisation
    /// epsilon contribute nothing.
    pub fn backward(
        &self,
        features: &Matrix,
        cache: &HeadCache,
        grad_unit: &Matrix,
    ) -> Result<HeadGradients> {
        let (n, d) = (cache.projected.rows(), self.d_out());
        if grad_unit.rows() != n || grad_unit.cols() != d || features.rows() != n {
            return Err(Error::Shape(format!(
                "backward got {}x{} gradients and {} feature rows for {n}x{d} outputs",
                grad_unit.rows(),
                grad_unit.cols(),
                features.rows()
            )));
        }
        let mut grad_y = Matrix::zeros(n, d);
        for i in 0..n {
            let norm = cache.norms[i];
            if norm <= DEFAULT_NORM_EPSILON {
                continue;
            }
            let y = cache.projected.row(i);
            let g = grad_unit.row(i);
            let gu = dot(g, y) / norm;
            for ((out, &gk), &yk) in grad_y.row_mut(i).iter_mut().zip(g).zip(y) {
                *out = (gk - gu * yk / norm) / norm;
            }
        }
        let weight = features.t_matmul(&grad_y)?;
        let mut bias = vec![0.0; d];
        for row in grad_y.iter_rows() {
            bias.iter_mut().zip(row).for_each(|(b, g)| *b += g);
        }
        Ok(HeadGradients { weight, bias })
    }
}

/// `normalize(features · W + b)` evaluated in double-double, with the
/// parameters given as a flat weight-then-bias slice.
pub(crate) fn forward_precise(features: &Matrix, params: &[Dd], d_out: usize) -> Vec<Dd> {
    let d_in = features.cols();
    let (w, b) = params.split_at(d_in * d_out);
    let mut out = Vec::with_capacity(features.rows() * d_out);
    for x in features.iter_rows() {
        let start = out.len();
        for j in 0..d_out {
            let mut y = b[j];
            for (k, &xk) in x.iter().enumerate() {
                y = y + Dd::new(xk) * w[k * d_out + j];
            }
            out.push(y);
        }
        let row = &mut out[start..];
        let norm = row.iter().map(|&y| y * y).sum::<Dd>().sqrt();
        row.iter_mut().for_each(|y| *y = *y / norm);
    }
    out
}

//! Double-double arithmetic (~106-bit significand) used by the
//! finite-difference verifiers.
//!
//! Central differences in plain `f64` bottom out near `ε·|f|/h ≈ 1e-11`,
//! which is too coarse for gradient entries around `1e-8`. The verifiers
//! therefore evaluate the objective on [`Dd`] values; perturbed inputs
//! `x ± h` are exact in this representation.

use crate::egonce::PositiveMask;
use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub const fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    fn scale_pow2(self, k: i32) -> Dd {
        let f = 2f64.powi(k);
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    pub fn exp(self) -> Dd {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        if self.hi > 709.0 {
            return Dd::new(f64::INFINITY);
        }
        if self.hi.is_nan() {
            return Dd::new(f64::NAN);
        }
        let k = (self.hi / LN2.hi).round();
        // r = (x − k·ln2) / 2^9, |r| < 7e-4
        let r = (self - LN2 * Dd::new(k)).scale_pow2(-9);
        // exp(r) − 1 by Taylor series; 10 terms reach well below 1e-32
        let mut term = r;
        let mut sum = r;
        for i in 2..=10 {
            term = term * r / Dd::new(i as f64);
            sum = sum + term;
        }
        // (1 + s)² − 1 = 2s + s², applied nine times undoes the 2^-9
        for _ in 0..9 {
            sum = sum.scale_pow2(1) + sum * sum;
        }
        (sum + Dd::ONE).scale_pow2(k as i32)
    }

    pub fn ln(self) -> Dd {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 {
                Dd::new(f64::NEG_INFINITY)
            } else {
                Dd::new(f64::NAN)
            };
        }
        if self.hi.is_infinite() {
            return self;
        }
        // Newton on exp(y) = x: y ← y + x·exp(−y) − 1
        let mut y = Dd::new(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        // one Newton step from the f64 root doubles the precision
        let y = Dd::new(self.hi.sqrt());
        y + (self - y * y) / (y * Dd::new(2.0))
    }

    pub fn total_cmp(&self, other: &Dd) -> Ordering {
        self.hi
            .total_cmp(&other.hi)
            .then(self.lo.total_cmp(&other.lo))
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::new(x)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        // long division, three quotient digits
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::new(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::new(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

impl std::iter::Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(iter: I) -> Dd {
        iter.fold(Dd::ZERO, |a, b| a + b)
    }
}

pub fn dot(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn log_sum_exp(values: &[Dd]) -> Dd {
    let Some(max) = values.iter().copied().max_by(|a, b| a.total_cmp(b)) else {
        return Dd::new(f64::NEG_INFINITY);
    };
    let s: Dd = values.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

/// Rows of a row-major `Dd` matrix.
pub fn rows(data: &[Dd], cols: usize) -> impl Iterator<Item = &[Dd]> {
    (0..data.len() / cols.max(1)).map(move |i| &data[i * cols..(i + 1) * cols])
}

/// Mean over the first `n_anchor` rows of `lse_k(a·b_k/τ) − lse_{k∈P}(a·b_k/τ)`,
/// written directly from the definition.
pub fn contrastive_direction(
    anchors: &[Dd],
    targets: &[Dd],
    dim: usize,
    mask: &PositiveMask,
    n_anchor: usize,
    tau: f64,
) -> Dd {
    let tau = Dd::new(tau);
    let targets: Vec<&[Dd]> = rows(targets, dim).collect();
    let mut total = Dd::ZERO;
    for (i, a) in rows(anchors, dim).take(n_anchor).enumerate() {
        let logits: Vec<Dd> = targets.iter().map(|t| dot(a, t) / tau).collect();
        let positives: Vec<Dd> = logits
            .iter()
            .zip(mask.row(i))
            .filter(|(_, &p)| p)
            .map(|(&l, _)| l)
            .collect();
        total = total + log_sum_exp(&logits) - log_sum_exp(&positives);
    }
    total / Dd::new(n_anchor as f64)
}

/// Central differences of `f` at `x`, with `f` evaluated in double-double.
pub fn central_difference<F>(x: &[f64], h: f64, mut f: F) -> crate::Result<Vec<f64>>
where
    F: FnMut(&[Dd]) -> crate::Result<Dd>,
{
    let mut probe: Vec<Dd> = x.iter().copied().map(Dd::new).collect();
    let h = Dd::new(h);
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe)?;
        probe[i] = orig - h;
        let minus = f(&probe)?;
        probe[i] = orig;
        out.push(((plus - minus) / (h * Dd::new(2.0))).to_f64());
    }
    Ok(out)
}

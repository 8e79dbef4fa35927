//! Central-difference gradient verification shared by the loss and the heads.

use crate::error::Result;

/// Default perturbation for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Worst entry found when comparing analytic against numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub entries: usize,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }

    /// Keeps whichever of the two checks has the larger error.
    pub fn worst(self, other: GradCheck) -> GradCheck {
        if other.max_relative_error > self.max_relative_error {
            GradCheck {
                entries: self.entries + other.entries,
                ..other
            }
        } else {
            GradCheck {
                entries: self.entries + other.entries,
                ..self
            }
        }
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate of `x`.
pub fn central_difference<F>(x: &[f64], h: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe)?;
        probe[i] = orig - h;
        let minus = f(&probe)?;
        probe[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

pub fn compare(analytic: &[f64], numeric: &[f64]) -> GradCheck {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let mut best = GradCheck {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: numeric.first().copied().unwrap_or(0.0),
        entries: analytic.len(),
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let err = relative_error(a, n);
        // NaN compares false, so force it to register as the worst entry
        if err > best.max_relative_error || err.is_nan() && !best.max_relative_error.is_nan() {
            best.max_relative_error = err;
            best.worst_index = i;
            best.analytic = a;
            best.numeric = n;
        }
    }
    best
}

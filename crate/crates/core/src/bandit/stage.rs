use nalgebra::{DMatrix, DVector};

use super::linalg::{mat_vec, quad_form, sherman_morrison_in_place};
use crate::env::dot;
use crate::error::{check_len, Error, Result};

/// Value estimate and confidence width for one provider at one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub width: f64,
}

impl Estimate {
    pub fn upper(&self) -> f64 {
        self.value + self.width
    }

    pub fn lower(&self) -> f64 {
        self.value - self.width
    }
}

/// Ridge statistics of one provider at one stage, built only from the rounds
/// in its index set.
///
/// `A = I + Σ x xᵀ` and `g = Σ r x` over those rounds. The inverse is kept
/// current by rank-one updates; `A` itself is stored for verification.
#[derive(Debug, Clone, PartialEq)]
pub struct StageModel {
    gram: DMatrix<f64>,
    gram_inverse: DMatrix<f64>,
    weighted_sum: DVector<f64>,
    theta_hat: Vec<f64>,
    rounds: Vec<u64>,
}

impl StageModel {
    pub fn new(dim: usize) -> Self {
        Self {
            gram: DMatrix::identity(dim, dim),
            gram_inverse: DMatrix::identity(dim, dim),
            weighted_sum: DVector::zeros(dim),
            theta_hat: vec![0.0; dim],
            rounds: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.gram_inverse
    }

    pub fn weighted_sum(&self) -> &DVector<f64> {
        &self.weighted_sum
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    /// Rounds recorded into this model, in order.
    pub fn rounds(&self) -> &[u64] {
        &self.rounds
    }

    pub fn observe(&mut self, t: u64, x: &[f64], reward: f64) -> Result<()> {
        check_len(self.dim(), x.len())?;
        if let Some(&last) = self.rounds.last() {
            if t <= last {
                return Err(Error::DuplicateRound { round: t, last });
            }
        }
        let d = self.dim();
        for r in 0..d {
            for c in 0..d {
                self.gram[(r, c)] += x[r] * x[c];
            }
            self.weighted_sum[r] += reward * x[r];
        }
        sherman_morrison_in_place(&mut self.gram_inverse, x)?;
        let g: Vec<f64> = self.weighted_sum.iter().copied().collect();
        mat_vec(&self.gram_inverse, &g, &mut self.theta_hat);
        self.rounds.push(t);
        Ok(())
    }

    pub(crate) fn estimate_unchecked(&self, x: &[f64], alpha: f64) -> Estimate {
        let value = dot(&self.theta_hat, x);
        let width = alpha * quad_form(&self.gram_inverse, x).max(0.0).sqrt();
        Estimate { value, width }
    }
}

/// `v̂ = θ̂ᵀx` with `θ̂ = A⁻¹g`, and width `w = α·sqrt(xᵀA⁻¹x)`.
pub fn base_linucb(model: &StageModel, x: &[f64], alpha: f64) -> Result<Estimate> {
    check_len(model.dim(), x.len())?;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::param("alpha", "must be finite and non-negative"));
    }
    Ok(model.estimate_unchecked(x, alpha))
}
